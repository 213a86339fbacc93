#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "convo_gate/classifier.hpp"
#include "convo_gate/core.hpp"
#include "convo_gate/corpus.hpp"
#include "convo_gate/error.hpp"
#include "convo_gate/tokens.hpp"

namespace convo_gate {

struct Confusion {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

    std::size_t total() const noexcept { return tp + fp + fn + tn; }
    bool operator==(const Confusion&) const = default;
};

/// Per-intent confusion counts; every entry sums to the sample count.
struct ConfusionCounts {
    std::vector<Confusion> per_intent;

    explicit ConfusionCounts(std::size_t n_intents = 0) : per_intent(n_intents) {}

    void add(const IntentVector& reference, const IntentVector& prediction) {
        if (reference.size() != per_intent.size() || prediction.size() != per_intent.size()) {
            throw Error(ErrorKind::SchemaMismatch, "confusion update with mismatched vector length");
        }
        for (std::size_t i = 0; i < per_intent.size(); ++i) {
            const bool ref = reference.test(i);
            const bool pred = prediction.test(i);
            auto& c = per_intent[i];
            if (ref && pred) ++c.tp;
            else if (!ref && pred) ++c.fp;
            else if (ref && !pred) ++c.fn;
            else ++c.tn;
        }
    }
};

struct Metrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    /// Some denominator was zero and the affected metric was reported as 0.
    bool degenerate = false;
};

/// Precision/recall/F1 for the positive class of one intent.
inline Metrics prf1(const Confusion& c) {
    Metrics m;
    const auto pred_pos = c.tp + c.fp;
    const auto ref_pos = c.tp + c.fn;
    if (pred_pos == 0 || ref_pos == 0) m.degenerate = true;
    m.precision = pred_pos ? static_cast<double>(c.tp) / static_cast<double>(pred_pos) : 0.0;
    m.recall = ref_pos ? static_cast<double>(c.tp) / static_cast<double>(ref_pos) : 0.0;
    const double denom = m.precision + m.recall;
    if (denom > 0.0) {
        m.f1 = 2.0 * m.precision * m.recall / denom;
    } else {
        m.degenerate = true;
    }
    return m;
}

inline Metrics prf1(const ConfusionCounts& counts, std::size_t intent) { return prf1(counts.per_intent.at(intent)); }

inline double mean_f1(const std::vector<Metrics>& metrics) {
    if (metrics.empty()) return 0.0;
    double s = 0.0;
    for (const auto& m : metrics) s += m.f1;
    return s / static_cast<double>(metrics.size());
}

// ---------------------------------------------------------------------------
// Token reduction accounting

/// Token totals for one predicate: everything vs. what passes the predicate.
struct TokenTally {
    std::size_t total_tokens = 0;
    std::size_t selected_tokens = 0;
};

inline TokenTally tally_tokens(std::span<const std::size_t> conversation_tokens,
                               std::span<const IntentVector> labels, const Predicate& predicate) {
    if (conversation_tokens.size() != labels.size()) {
        throw Error(ErrorKind::Coverage, "expected one label vector per conversation (" +
                                             std::to_string(conversation_tokens.size()) + " conversations, " +
                                             std::to_string(labels.size()) + " vectors)");
    }
    TokenTally t;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        t.total_tokens += conversation_tokens[i];
        if (predicate.satisfied(labels[i])) t.selected_tokens += conversation_tokens[i];
    }
    return t;
}

/// 100 * (1 - selected / total): the share of tokens never sent downstream.
inline double reduction_percent(const TokenTally& t) {
    if (t.total_tokens == 0) throw Error(ErrorKind::UndefinedReport, "reduction undefined for zero total tokens");
    return 100.0 * (1.0 - static_cast<double>(t.selected_tokens) / static_cast<double>(t.total_tokens));
}

inline std::vector<std::size_t> token_counts(std::span<const Conversation> convs, const TokenCounter& counter) {
    std::vector<std::size_t> out;
    out.reserve(convs.size());
    for (const auto& c : convs) out.push_back(conversation_tokens(c, counter));
    return out;
}

/// Reduction if exactly the reference-positive conversations were forwarded.
inline double expected_reduction(std::span<const Conversation> convs, const Predicate& predicate,
                                 const TokenCounter& counter = {}) {
    std::vector<IntentVector> labels;
    labels.reserve(convs.size());
    for (const auto& c : convs) labels.push_back(conversation_labels(c));
    return reduction_percent(tally_tokens(token_counts(convs, counter), labels, predicate));
}

/// Reduction when the model-predicted-positive conversations are forwarded.
inline double actual_reduction(std::span<const Conversation> convs, std::span<const IntentVector> predictions,
                               const Predicate& predicate, const TokenCounter& counter = {}) {
    return reduction_percent(tally_tokens(token_counts(convs, counter), predictions, predicate));
}

// ---------------------------------------------------------------------------
// Reports

struct PredicateReduction {
    std::string predicate;
    std::size_t reference_tokens = 0;
    std::size_t prediction_tokens = 0;
    double expected_reduction_pct = 0.0;
    double actual_reduction_pct = 0.0;
};

struct ReductionReport {
    std::string dataset;
    std::size_t total_tokens = 0;
    std::vector<PredicateReduction> predicates;
};

struct DatasetReport {
    std::string dataset;
    std::size_t conversations = 0;
    std::vector<std::string> intents;
    std::vector<Metrics> metrics;
    ReductionReport reduction;
};

struct NamedDataset {
    std::string name;
    std::vector<Conversation> conversations;
};

/// Scores every conversation of a dataset and assembles metrics and
/// reduction figures. Reports come back ordered by dataset name.
inline std::vector<DatasetReport> build_report(std::vector<NamedDataset> datasets, const Classifier& model,
                                               const std::vector<Predicate>& predicates,
                                               const TokenCounter& counter, const ScoringOptions& scoring = {}) {
    std::sort(datasets.begin(), datasets.end(),
              [](const NamedDataset& a, const NamedDataset& b) { return a.name < b.name; });
    std::vector<DatasetReport> out;
    const auto& schema = model.schema();
    for (const auto& ds : datasets) {
        DatasetReport rep;
        rep.dataset = ds.name;
        rep.conversations = ds.conversations.size();
        rep.intents = schema.ids();
        ConfusionCounts counts(schema.size());
        std::vector<IntentVector> refs, preds;
        for (const auto& conv : ds.conversations) {
            refs.push_back(conversation_labels(conv));
            preds.push_back(score_conversation(model, conv, scoring, counter).decision);
            counts.add(refs.back(), preds.back());
        }
        for (std::size_t i = 0; i < schema.size(); ++i) rep.metrics.push_back(prf1(counts, i));
        const auto tokens = token_counts(ds.conversations, counter);
        rep.reduction.dataset = ds.name;
        for (auto t : tokens) rep.reduction.total_tokens += t;
        for (const auto& p : predicates) {
            const auto ref = tally_tokens(tokens, refs, p);
            const auto pred = tally_tokens(tokens, preds, p);
            rep.reduction.predicates.push_back(
                {p.name(), ref.selected_tokens, pred.selected_tokens, reduction_percent(ref), reduction_percent(pred)});
        }
        out.push_back(std::move(rep));
    }
    return out;
}

inline Json report_to_json(const DatasetReport& rep) {
    Json metrics = Json::object();
    for (std::size_t i = 0; i < rep.intents.size(); ++i) {
        const auto& m = rep.metrics[i];
        metrics[rep.intents[i]] = {
            {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"degenerate", m.degenerate}};
    }
    Json reductions = Json::object();
    for (const auto& p : rep.reduction.predicates) {
        reductions[p.predicate] = {{"reference_tokens", p.reference_tokens},
                                   {"prediction_tokens", p.prediction_tokens},
                                   {"expected_reduction_pct", p.expected_reduction_pct},
                                   {"actual_reduction_pct", p.actual_reduction_pct}};
    }
    return {{"dataset", rep.dataset},
            {"conversations", rep.conversations},
            {"total_tokens", rep.reduction.total_tokens},
            {"metrics", metrics},
            {"reduction", reductions}};
}

inline void write_report_jsonl(const std::vector<DatasetReport>& reports, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write report " + path.string());
    for (const auto& rep : reports) out << report_to_json(rep).dump() << '\n';
    if (!out) throw Error(ErrorKind::Io, "write failed on " + path.string());
}

/// Two aligned tables: per-intent P/R/F1, then expected/actual reduction.
inline std::string render_report_table(const std::vector<DatasetReport>& reports) {
    std::ostringstream os;
    if (reports.empty()) return "(no datasets)\n";
    std::size_t name_w = 7;
    for (const auto& r : reports) name_w = std::max(name_w, r.dataset.size());
    auto fmt = [](double v, int prec) {
        std::ostringstream s;
        s << std::fixed << std::setprecision(prec) << v;
        return s.str();
    };

    os << std::left << std::setw(static_cast<int>(name_w)) << "Dataset";
    for (const auto& id : reports.front().intents) os << " | " << std::setw(26) << id;
    os << '\n' << std::setw(static_cast<int>(name_w)) << "";
    for (std::size_t i = 0; i < reports.front().intents.size(); ++i) os << " | " << std::setw(26) << "    P       R      F1";
    os << '\n';
    for (const auto& r : reports) {
        os << std::setw(static_cast<int>(name_w)) << r.dataset;
        for (const auto& m : r.metrics) {
            os << " | " << std::setw(26)
               << (fmt(m.precision, 4) + "  " + fmt(m.recall, 4) + "  " + fmt(m.f1, 4) + (m.degenerate ? "*" : ""));
        }
        os << '\n';
    }
    os << '\n' << std::setw(static_cast<int>(name_w)) << "Dataset" << " | " << std::setw(12) << "Total tokens";
    for (const auto& p : reports.front().reduction.predicates) os << " | " << std::setw(24) << p.predicate;
    os << '\n' << std::setw(static_cast<int>(name_w)) << "" << " | " << std::setw(12) << "";
    for (std::size_t i = 0; i < reports.front().reduction.predicates.size(); ++i) {
        os << " | " << std::setw(24) << "expected%  actual%";
    }
    os << '\n';
    for (const auto& r : reports) {
        os << std::setw(static_cast<int>(name_w)) << r.dataset << " | " << std::setw(12) << r.reduction.total_tokens;
        for (const auto& p : r.reduction.predicates) {
            os << " | " << std::setw(24) << (fmt(p.expected_reduction_pct, 2) + "     " + fmt(p.actual_reduction_pct, 2));
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace convo_gate
