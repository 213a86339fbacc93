#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "convo_gate/core.hpp"
#include "convo_gate/error.hpp"
#include "convo_gate/random.hpp"
#include "convo_gate/tokens.hpp"

namespace convo_gate {

/// Rolling-window augmentation settings. Defaults: windows of one to five
/// turns, up to two windows per conversation, applied to half the batches.
struct WindowConfig {
    std::size_t min_turns = 1;
    std::size_t max_turns = 5;
    std::size_t max_segments_per_conversation = 2;
    double batch_probability = 0.5;
    std::uint64_t seed = 0;

    void validate() const {
        if (min_turns < 1 || min_turns > max_turns) {
            throw Error(ErrorKind::InvalidArgument, "window needs 1 <= min_turns <= max_turns");
        }
        if (!(batch_probability >= 0.0 && batch_probability <= 1.0)) {
            throw Error(ErrorKind::InvalidArgument, "batch_probability must lie in [0, 1]");
        }
    }

    bool operator==(const WindowConfig&) const = default;
};

/// Draws max_segments_per_conversation windows; each length is uniform on
/// [min_turns, min(max_turns, turn count)] and each start uniform on
/// [0, turn count - length]. Repeated (start, length) draws are dropped, so
/// fewer segments may come back. Conversations shorter than min_turns yield
/// nothing.
inline std::vector<Segment> sample_windows(const Conversation& conv, const WindowConfig& cfg, Pcg32& rng) {
    cfg.validate();
    const std::size_t n = conv.turns.size();
    std::vector<Segment> out;
    if (n < cfg.min_turns) return out;
    const std::size_t longest = std::min(cfg.max_turns, n);
    std::vector<std::pair<std::size_t, std::size_t>> seen;
    for (std::size_t k = 0; k < cfg.max_segments_per_conversation; ++k) {
        const auto length = static_cast<std::size_t>(rng.uniform_int(cfg.min_turns, longest));
        const auto start = static_cast<std::size_t>(rng.uniform_int(0, n - length));
        if (std::find(seen.begin(), seen.end(), std::pair{start, length}) != seen.end()) continue;
        seen.emplace_back(start, length);
        Segment seg{conv.id, start, start + length, range_labels(conv, {start, start + length}), false};
        out.push_back(std::move(seg));
    }
    return out;
}

/// One Bernoulli(batch_probability) draw per batch; on success, the windows
/// of every conversation in batch order. Nothing is persisted: callers invoke
/// this afresh for each batch of each epoch.
inline std::vector<Segment> plan_batch_augmentation(std::span<const Conversation> batch, const WindowConfig& cfg,
                                                    Pcg32& rng) {
    cfg.validate();
    std::vector<Segment> out;
    if (!rng.bernoulli(cfg.batch_probability)) return out;
    for (const auto& conv : batch) {
        auto windows = sample_windows(conv, cfg, rng);
        out.insert(out.end(), std::make_move_iterator(windows.begin()), std::make_move_iterator(windows.end()));
    }
    return out;
}

inline std::vector<Segment> plan_batch_augmentation(std::span<const Conversation* const> batch,
                                                    const WindowConfig& cfg, Pcg32& rng) {
    cfg.validate();
    std::vector<Segment> out;
    if (!rng.bernoulli(cfg.batch_probability)) return out;
    for (const auto* conv : batch) {
        auto windows = sample_windows(*conv, cfg, rng);
        out.insert(out.end(), std::make_move_iterator(windows.begin()), std::make_move_iterator(windows.end()));
    }
    return out;
}

/// Greedy left-to-right packing of consecutive turns so that each rendered
/// segment fits `budget` tokens. A lone turn that cannot fit becomes its own
/// segment with `over_budget` set. Segments partition the turn sequence.
inline std::vector<Segment> split_to_context_budget(const Conversation& conv, std::size_t budget,
                                                    const TokenCounter& counter,
                                                    std::string_view separator = "[SEP]") {
    if (budget < 1) throw Error(ErrorKind::InvalidArgument, "context budget must be at least 1 token");
    std::vector<Segment> out;
    const std::size_t n = conv.turns.size();
    std::size_t start = 0;
    while (start < n) {
        std::size_t end = start + 1;
        if (counter.count(render_model_input(conv, {start, end}, separator)) > budget) {
            Segment seg = make_segment(conv, {start, end});
            seg.over_budget = true;
            out.push_back(std::move(seg));
            start = end;
            continue;
        }
        while (end < n && counter.count(render_model_input(conv, {start, end + 1}, separator)) <= budget) ++end;
        out.push_back(make_segment(conv, {start, end}));
        start = end;
    }
    return out;
}

}  // namespace convo_gate
