#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "convo_gate/augment.hpp"
#include "convo_gate/baseline.hpp"
#include "convo_gate/corpus.hpp"
#include "convo_gate/eval.hpp"

namespace convo_gate {

/// Baseline training recipe: batch 24, 5 epochs, L2 1e-2, validation every
/// 500 steps. The learning rate suits a linear model, not a transformer.
struct TrainConfig {
    double learning_rate = 0.1;
    std::size_t batch_size = 24;
    std::size_t epochs = 5;
    double l2 = 1e-2;
    std::size_t eval_every = 500;
    WindowConfig window;
    std::uint64_t seed = 0;
    /// Whitespace-token budget per training sample; 0 disables splitting.
    std::size_t context_budget = 256;
    std::string separator = "[SEP]";
    std::uint32_t hash_buckets = kDefaultBuckets;
    std::uint64_t hash_seed = kDefaultHashSeed;
    double threshold = 0.5;
    std::string trained_on;

    void validate() const {
        if (learning_rate < 0.0) throw Error(ErrorKind::InvalidArgument, "learning rate must be >= 0");
        if (batch_size == 0 || epochs == 0 || eval_every == 0) {
            throw Error(ErrorKind::InvalidArgument, "batch size, epochs and eval_every must be positive");
        }
        if (l2 < 0.0) throw Error(ErrorKind::InvalidArgument, "l2 weight must be >= 0");
        window.validate();
    }
};

struct StepRecord {
    std::size_t step = 0;
    std::size_t epoch = 0;
    /// Objective (BCE + L2) at the parameters the step started from.
    double loss = 0.0;
    std::size_t samples = 0;
    std::size_t augmented = 0;

    bool operator==(const StepRecord&) const = default;
};

struct EvalSnapshot {
    std::size_t step = 0;
    std::vector<Metrics> metrics;
    double mean_f1 = 0.0;
};

struct TrainingLog {
    std::vector<StepRecord> steps;
    std::vector<EvalSnapshot> snapshots;
    std::size_t best_step = 0;
};

struct TrainResult {
    BaselineModel model;
    TrainingLog log;
};

inline Json to_json(const TrainingLog& log, const IntentSchema& schema) {
    Json steps = Json::array();
    for (const auto& s : log.steps) {
        steps.push_back({{"step", s.step}, {"epoch", s.epoch}, {"loss", s.loss}, {"samples", s.samples},
                         {"augmented", s.augmented}});
    }
    Json snaps = Json::array();
    for (const auto& snap : log.snapshots) {
        Json m = Json::object();
        for (std::size_t i = 0; i < snap.metrics.size(); ++i) {
            m[schema[i].id] = {{"precision", snap.metrics[i].precision},
                               {"recall", snap.metrics[i].recall},
                               {"f1", snap.metrics[i].f1}};
        }
        snaps.push_back({{"step", snap.step}, {"mean_f1", snap.mean_f1}, {"metrics", m}});
    }
    return {{"best_step", log.best_step}, {"steps", steps}, {"snapshots", snaps}};
}

namespace detail {

struct TrainingUnit {
    const Conversation* conv = nullptr;
    TrainingSample sample;
};

inline std::vector<double> targets_of(const IntentVector& labels) { return labels.values(); }

inline std::vector<TrainingUnit> build_units(std::span<const Conversation> convs, const BaselineModel& model,
                                             const TrainConfig& cfg, const TokenCounter& counter) {
    std::vector<TrainingUnit> units;
    for (const auto& conv : convs) {
        if (conv.fully_turn_labeled()) {
            std::vector<Segment> segs;
            if (cfg.context_budget > 0) {
                segs = split_to_context_budget(conv, cfg.context_budget, counter, cfg.separator);
            } else {
                segs.push_back(make_segment(conv, {0, conv.turns.size()}));
            }
            for (const auto& seg : segs) {
                std::string text = render_model_input(conv, seg.range(), cfg.separator);
                if (seg.over_budget) text = counter.truncate(text, cfg.context_budget);
                units.push_back({&conv, {model.hasher()(text), targets_of(*seg.labels)}});
            }
        } else if (conv.labels) {
            units.push_back({&conv, {model.hasher()(render_model_input(conv, cfg.separator)), targets_of(*conv.labels)}});
        } else {
            throw Error(ErrorKind::UnlabeledTurn, "training conversation '" + conv.id + "' carries no labels");
        }
        if (units.back().sample.targets.size() != model.intents()) {
            throw Error(ErrorKind::SchemaMismatch, "conversation '" + conv.id + "' label count mismatch");
        }
    }
    return units;
}

inline EvalSnapshot evaluate_snapshot(const BaselineModel& model, std::span<const Conversation> val,
                                      const ScoringOptions& scoring, const TokenCounter& counter, std::size_t step) {
    ConfusionCounts counts(model.intents());
    for (const auto& conv : val) {
        counts.add(conversation_labels(conv), score_conversation(model, conv, scoring, counter).decision);
    }
    EvalSnapshot snap;
    snap.step = step;
    for (std::size_t i = 0; i < model.intents(); ++i) snap.metrics.push_back(prf1(counts, i));
    snap.mean_f1 = mean_f1(snap.metrics);
    return snap;
}

}  // namespace detail

/// Mini-batch gradient descent on per-intent BCE + L2. Each batch is
/// extended with freshly sampled rolling windows (with the configured batch
/// probability); validation P/R/F1 is computed every eval_every steps and
/// after the last step. Returns the snapshot with the highest mean F1, ties
/// going to the later step. Deterministic for a given config.
inline TrainResult train_baseline(std::span<const Conversation> train, std::span<const Conversation> val,
                                  const IntentSchema& schema, const TrainConfig& cfg) {
    cfg.validate();
    if (train.empty()) throw Error(ErrorKind::Precondition, "empty training corpus");
    if (val.empty()) throw Error(ErrorKind::Precondition, "empty validation corpus");

    const TokenCounter counter = TokenCounter::whitespace();
    BaselineModel model(schema, FeatureHasher(cfg.hash_seed, cfg.hash_buckets));
    model.set_thresholds(std::vector<double>(schema.size(), cfg.threshold));
    const auto units = detail::build_units(train, model, cfg, counter);
    for (const auto& conv : val) {
        if (conversation_labels(conv).size() != schema.size()) {
            throw Error(ErrorKind::SchemaMismatch, "validation conversation '" + conv.id + "' label count mismatch");
        }
    }
    const ScoringOptions scoring{cfg.separator, cfg.context_budget, true};

    Pcg32 order_rng(cfg.seed, 1);
    Pcg32 window_rng(cfg.seed ^ cfg.window.seed, 2);
    std::vector<std::size_t> order(units.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    TrainResult result{model, {}};
    std::optional<double> best_f1;
    std::size_t step = 0;
    auto snapshot = [&] {
        auto snap = detail::evaluate_snapshot(model, val, scoring, counter, step);
        if (!best_f1 || snap.mean_f1 >= *best_f1) {
            best_f1 = snap.mean_f1;
            result.model = model;
            result.log.best_step = step;
        }
        result.log.snapshots.push_back(std::move(snap));
    };

    std::vector<TrainingSample> batch;
    std::vector<const Conversation*> batch_convs;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[order_rng.bounded(static_cast<std::uint32_t>(i))]);
        }
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
            batch.clear();
            batch_convs.clear();
            for (std::size_t i = begin; i < end; ++i) {
                const auto& unit = units[order[i]];
                batch.push_back(unit.sample);
                if (unit.conv->fully_turn_labeled() &&
                    std::find(batch_convs.begin(), batch_convs.end(), unit.conv) == batch_convs.end()) {
                    batch_convs.push_back(unit.conv);
                }
            }
            const std::size_t base = batch.size();
            for (const auto& seg : plan_batch_augmentation(batch_convs, cfg.window, window_rng)) {
                const Conversation* conv = *std::find_if(batch_convs.begin(), batch_convs.end(),
                                                         [&](const Conversation* c) { return c->id == seg.conversation_id; });
                batch.push_back({model.hasher()(render_model_input(*conv, seg.range(), cfg.separator)),
                                 detail::targets_of(*seg.labels)});
            }
            const double loss = sgd_step(model, batch, cfg.learning_rate, cfg.l2);
            ++step;
            result.log.steps.push_back({step, epoch, loss, batch.size(), batch.size() - base});
            if (step % cfg.eval_every == 0) snapshot();
        }
    }
    if (result.log.snapshots.empty() || result.log.snapshots.back().step != step) snapshot();

    ModelMetadata meta;
    meta.trained_on = cfg.trained_on;
    meta.steps = result.log.best_step;
    result.model.set_metadata(meta);
    return result;
}

}  // namespace convo_gate
