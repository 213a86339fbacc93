#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "convo_gate/augment.hpp"
#include "convo_gate/core.hpp"
#include "convo_gate/error.hpp"
#include "convo_gate/tokens.hpp"

namespace convo_gate {

enum class BackendKind { Baseline, External };

struct ModelMetadata {
    std::string trained_on;
    std::uint64_t steps = 0;
};

/// Multi-label intent scorer. predict() is const and safe to call from many
/// threads once the model is constructed.
class Classifier {
public:
    virtual ~Classifier() = default;

    virtual BackendKind kind() const noexcept = 0;
    virtual const IntentSchema& schema() const noexcept = 0;
    virtual IntentVector predict(std::string_view input_text) const = 0;

    const std::vector<double>& thresholds() const noexcept { return thresholds_; }
    void set_thresholds(std::vector<double> thresholds) {
        if (thresholds.size() != schema().size()) {
            throw Error(ErrorKind::SchemaMismatch, "threshold count does not match intent count");
        }
        for (double t : thresholds) {
            if (!(t > 0.0 && t < 1.0)) throw Error(ErrorKind::InvalidArgument, "thresholds must lie in (0, 1)");
        }
        thresholds_ = std::move(thresholds);
    }

    const ModelMetadata& metadata() const noexcept { return metadata_; }
    void set_metadata(ModelMetadata metadata) { metadata_ = std::move(metadata); }

    /// Counter matching this model's own tokenisation when it has one.
    virtual TokenCounter native_counter() const { return TokenCounter::whitespace(); }

protected:
    std::vector<double> thresholds_;
    ModelMetadata metadata_;
};

/// 1 where score >= threshold.
inline IntentVector decide(const IntentVector& scores, std::span<const double> thresholds) {
    if (scores.size() != thresholds.size()) {
        throw Error(ErrorKind::SchemaMismatch, "scores and thresholds differ in length");
    }
    std::vector<int> bits(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) bits[i] = scores[i] >= thresholds[i] ? 1 : 0;
    return IntentVector::binary(std::move(bits));
}

/// Forwarding rule: a single intent, or "any" configured intent.
class Predicate {
public:
    static Predicate any() { return Predicate(std::nullopt, "any"); }
    static Predicate intent(std::size_t index, std::string name) { return Predicate(index, std::move(name)); }

    static Predicate parse(std::string_view name, const IntentSchema& schema) {
        if (name == "any") return any();
        const auto idx = schema.index_of(name);
        if (!idx) throw Error(ErrorKind::InvalidArgument, "predicate names unknown intent '" + std::string(name) + "'");
        return intent(*idx, std::string(name));
    }

    static std::vector<Predicate> parse_list(std::string_view csv, const IntentSchema& schema) {
        std::vector<Predicate> out;
        std::size_t pos = 0;
        while (pos <= csv.size()) {
            const auto comma = csv.find(',', pos);
            auto item = csv.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
            while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
            while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
            if (!item.empty()) out.push_back(parse(item, schema));
            if (comma == std::string_view::npos) break;
            pos = comma + 1;
        }
        return out;
    }

    bool satisfied(const IntentVector& binary) const { return index_ ? binary.test(*index_) : binary.any(); }
    const std::string& name() const noexcept { return name_; }
    bool is_any() const noexcept { return !index_.has_value(); }
    std::optional<std::size_t> index() const noexcept { return index_; }

private:
    Predicate(std::optional<std::size_t> index, std::string name) : index_(index), name_(std::move(name)) {}

    std::optional<std::size_t> index_;
    std::string name_;
};

/// How a whole conversation or snippet is scored when it may not fit in the
/// model's context.
struct ScoringOptions {
    std::string separator = "[SEP]";
    /// Zero disables splitting.
    std::size_t context_budget = 0;
    /// Over-budget single turns are cut to the budget before scoring.
    bool truncate_over_budget = true;
};

struct ConversationScore {
    /// Per-intent maximum over sub-segments.
    IntentVector scores;
    /// OR over sub-segment decisions.
    IntentVector decision;
    std::size_t sub_segments = 0;
};

/// Renders the conversation (speakers dropped), splits it to the context
/// budget if needed and combines sub-segment outputs with max / OR.
inline ConversationScore score_conversation(const Classifier& model, const Conversation& conv,
                                            const ScoringOptions& options, const TokenCounter& counter,
                                            std::span<const double> thresholds) {
    std::vector<std::string> inputs;
    if (options.context_budget == 0) {
        inputs.push_back(render_model_input(conv, options.separator));
    } else {
        for (const auto& seg : split_to_context_budget(conv, options.context_budget, counter, options.separator)) {
            std::string text = render_model_input(conv, seg.range(), options.separator);
            if (seg.over_budget && options.truncate_over_budget) text = counter.truncate(text, options.context_budget);
            inputs.push_back(std::move(text));
        }
    }
    const std::size_t n = model.schema().size();
    std::vector<double> best(n, 0.0);
    std::vector<int> any(n, 0);
    for (const auto& text : inputs) {
        const IntentVector scores = model.predict(text);
        const IntentVector bits = decide(scores, thresholds);
        for (std::size_t i = 0; i < n; ++i) {
            best[i] = std::max(best[i], scores[i]);
            any[i] |= bits.test(i) ? 1 : 0;
        }
    }
    return {IntentVector::scores(std::move(best)), IntentVector::binary(std::move(any)), inputs.size()};
}

inline ConversationScore score_conversation(const Classifier& model, const Conversation& conv,
                                            const ScoringOptions& options, const TokenCounter& counter) {
    return score_conversation(model, conv, options, counter, model.thresholds());
}

}  // namespace convo_gate
