#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "convo_gate/error.hpp"

namespace convo_gate {

inline bool is_blank(std::string_view text) {
    return std::all_of(text.begin(), text.end(),
                       [](unsigned char c) { return c == ' ' || (c >= '\t' && c <= '\r'); });
}

/// Lowercase kebab: one or more [a-z0-9] runs joined by single hyphens.
inline bool is_kebab_id(std::string_view id) {
    if (id.empty() || id.front() == '-' || id.back() == '-') return false;
    char prev = 0;
    for (char c : id) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-';
        if (!ok || (c == '-' && prev == '-')) return false;
        prev = c;
    }
    return true;
}

struct IntentDescriptor {
    std::string id;
    std::string definition;
    std::vector<std::string> positive_examples;
    std::vector<std::string> negative_examples;
    /// Aligned with positive_examples followed by negative_examples.
    std::vector<std::string> example_explanations;
};

/// Ordered intent list. Position in this list is the index used by every
/// IntentVector built against the schema.
class IntentSchema {
public:
    explicit IntentSchema(std::vector<IntentDescriptor> intents) : intents_(std::move(intents)) {
        if (intents_.empty()) {
            throw Error(ErrorKind::InvalidArgument, "intent schema needs at least one intent");
        }
        std::unordered_set<std::string> seen;
        for (const auto& intent : intents_) {
            if (!is_kebab_id(intent.id)) {
                throw Error(ErrorKind::InvalidArgument,
                            "intent id must be lowercase-kebab: '" + intent.id + "'");
            }
            if (!seen.insert(intent.id).second) {
                throw Error(ErrorKind::Duplicate, "duplicate intent id '" + intent.id + "'");
            }
        }
    }

    static IntentSchema from_ids(const std::vector<std::string>& ids) {
        std::vector<IntentDescriptor> intents;
        for (const auto& id : ids) intents.push_back({id, {}, {}, {}, {}});
        return IntentSchema(std::move(intents));
    }

    /// Action-triggering and information-seeking, with teacher-facing definitions.
    static IntentSchema default_schema();

    std::size_t size() const noexcept { return intents_.size(); }
    const std::vector<IntentDescriptor>& intents() const noexcept { return intents_; }
    const IntentDescriptor& operator[](std::size_t i) const { return intents_.at(i); }

    std::optional<std::size_t> index_of(std::string_view id) const {
        for (std::size_t i = 0; i < intents_.size(); ++i) {
            if (intents_[i].id == id) return i;
        }
        return std::nullopt;
    }

    std::vector<std::string> ids() const {
        std::vector<std::string> out;
        out.reserve(intents_.size());
        for (const auto& intent : intents_) out.push_back(intent.id);
        return out;
    }

    bool same_ids(const IntentSchema& other) const { return ids() == other.ids(); }

private:
    std::vector<IntentDescriptor> intents_;
};

inline IntentSchema IntentSchema::default_schema() {
    IntentDescriptor action{
        "action-triggering",
        "The turn prompts an action or involves a promise, task, reminder, or commitment "
        "made by a participant.",
        {"Can you remind me to send the report on Friday?", "I will book the meeting room for us."},
        {"That movie was really fun last night.", "I think the weather is nice today."},
        {"Asks for a reminder to be created, which is a task for the assistant.",
         "The speaker commits to doing something.",
         "Chit-chat about a past event; nothing needs to be done.",
         "States an opinion without any request or commitment."}};
    IntentDescriptor info{
        "information-seeking",
        "The turn involves an inquiry about a topic, demonstrates a lack of clear knowledge, "
        "or expresses curiosity.",
        {"What is the capital of France?", "I wonder how these batteries are recycled."},
        {"Let's meet at noon.", "Thanks, that was helpful."},
        {"A direct question asking for a fact.", "Expresses curiosity about a topic.",
         "Makes an arrangement; no information is requested.",
         "Expresses gratitude; no inquiry is made."}};
    return IntentSchema({std::move(action), std::move(info)});
}

/// Per-intent values aligned to an IntentSchema. Binary vectors hold labels
/// (0/1); score vectors hold classifier outputs in [0, 1].
class IntentVector {
public:
    enum class Mode { Binary, Score };

    IntentVector() = default;

    static IntentVector binary(std::vector<int> bits) {
        IntentVector v;
        v.mode_ = Mode::Binary;
        v.values_.reserve(bits.size());
        for (int b : bits) {
            if (b != 0 && b != 1) {
                throw Error(ErrorKind::Domain, "binary label must be 0 or 1, got " + std::to_string(b));
            }
            v.values_.push_back(static_cast<double>(b));
        }
        return v;
    }

    static IntentVector zeros(std::size_t n) { return binary(std::vector<int>(n, 0)); }

    static IntentVector scores(std::vector<double> values) {
        for (double s : values) {
            if (!(s >= 0.0 && s <= 1.0)) {
                throw Error(ErrorKind::Domain, "score must lie in [0, 1], got " + std::to_string(s));
            }
        }
        IntentVector v;
        v.mode_ = Mode::Score;
        v.values_ = std::move(values);
        return v;
    }

    Mode mode() const noexcept { return mode_; }
    bool is_binary() const noexcept { return mode_ == Mode::Binary; }
    std::size_t size() const noexcept { return values_.size(); }
    double operator[](std::size_t i) const { return values_.at(i); }
    bool test(std::size_t i) const { return values_.at(i) >= 0.5; }
    bool any() const {
        return std::any_of(values_.begin(), values_.end(), [](double v) { return v >= 0.5; });
    }
    const std::vector<double>& values() const noexcept { return values_; }

    void set(std::size_t i, bool on) {
        if (mode_ != Mode::Binary) throw Error(ErrorKind::Domain, "set() on a score vector");
        values_.at(i) = on ? 1.0 : 0.0;
    }

    bool operator==(const IntentVector&) const = default;

private:
    Mode mode_ = Mode::Binary;
    std::vector<double> values_;
};

struct Turn {
    std::string speaker;
    std::string text;
    std::optional<IntentVector> labels;

    bool operator==(const Turn&) const = default;
};

struct Conversation {
    std::string id;
    std::string source_dataset;
    std::vector<Turn> turns;
    std::optional<IntentVector> labels;
    /// Free-form metadata (e.g. generated personas); empty when absent.
    std::string notes;

    std::size_t size() const noexcept { return turns.size(); }
    bool fully_turn_labeled() const {
        return !turns.empty() &&
               std::all_of(turns.begin(), turns.end(), [](const Turn& t) { return t.labels.has_value(); });
    }

    bool operator==(const Conversation&) const = default;
};

/// Half-open turn range [begin, end).
struct TurnRange {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const noexcept { return end - begin; }
    bool operator==(const TurnRange&) const = default;
};

struct Segment {
    std::string conversation_id;
    std::size_t start_turn = 0;
    std::size_t end_turn = 0;
    /// OR-aggregated labels; absent when some turn in range is unlabeled.
    std::optional<IntentVector> labels;
    /// Single turn whose rendering exceeds the context budget.
    bool over_budget = false;

    TurnRange range() const noexcept { return {start_turn, end_turn}; }
    std::size_t size() const noexcept { return end_turn - start_turn; }
    bool operator==(const Segment&) const = default;
};

inline void check_range(const Conversation& conv, TurnRange range) {
    if (range.begin >= range.end || range.end > conv.turns.size()) {
        throw Error(ErrorKind::Range, "turn range [" + std::to_string(range.begin) + ", " +
                                          std::to_string(range.end) + ") invalid for conversation '" +
                                          conv.id + "' with " + std::to_string(conv.turns.size()) +
                                          " turns");
    }
}

/// Per-intent logical OR.
inline IntentVector aggregate_labels(std::span<const IntentVector> turn_labels) {
    if (turn_labels.empty()) throw Error(ErrorKind::Precondition, "no labels to aggregate");
    const std::size_t n = turn_labels.front().size();
    std::vector<int> bits(n, 0);
    for (const auto& labels : turn_labels) {
        if (labels.size() != n) {
            throw Error(ErrorKind::SchemaMismatch, "label vectors differ in length (" + std::to_string(n) +
                                                       " vs " + std::to_string(labels.size()) + ")");
        }
        if (!labels.is_binary()) throw Error(ErrorKind::Domain, "cannot aggregate score vectors");
        for (std::size_t i = 0; i < n; ++i) bits[i] |= labels.test(i) ? 1 : 0;
    }
    return IntentVector::binary(std::move(bits));
}

inline IntentVector aggregate_labels(std::initializer_list<IntentVector> turn_labels) {
    return aggregate_labels(std::span<const IntentVector>(turn_labels.begin(), turn_labels.size()));
}

/// Turn texts joined by " <separator> ". Speakers are never emitted.
inline std::string render_model_input(const Conversation& conv, TurnRange range,
                                      std::string_view separator = "[SEP]") {
    check_range(conv, range);
    std::string out;
    for (std::size_t i = range.begin; i < range.end; ++i) {
        if (i != range.begin) {
            out += ' ';
            out += separator;
            out += ' ';
        }
        out += conv.turns[i].text;
    }
    return out;
}

inline std::string render_model_input(const Conversation& conv, std::string_view separator = "[SEP]") {
    return render_model_input(conv, TurnRange{0, conv.turns.size()}, separator);
}

inline IntentVector range_labels(const Conversation& conv, TurnRange range) {
    check_range(conv, range);
    std::vector<IntentVector> labels;
    labels.reserve(range.size());
    for (std::size_t i = range.begin; i < range.end; ++i) {
        const auto& turn = conv.turns[i];
        if (!turn.labels) {
            throw Error(ErrorKind::UnlabeledTurn,
                        "turn " + std::to_string(i) + " of conversation '" + conv.id + "' has no labels");
        }
        labels.push_back(*turn.labels);
    }
    return aggregate_labels(labels);
}

inline IntentVector segment_labels(const Conversation& conv, const Segment& seg) {
    return range_labels(conv, seg.range());
}

/// Segment over `range`, carrying aggregated labels when every turn is labeled.
inline Segment make_segment(const Conversation& conv, TurnRange range) {
    check_range(conv, range);
    Segment seg{conv.id, range.begin, range.end, std::nullopt, false};
    const bool labeled = std::all_of(conv.turns.begin() + static_cast<std::ptrdiff_t>(range.begin),
                                     conv.turns.begin() + static_cast<std::ptrdiff_t>(range.end),
                                     [](const Turn& t) { return t.labels.has_value(); });
    if (labeled) seg.labels = range_labels(conv, range);
    return seg;
}

/// Conversation labels if present, else the OR over fully labeled turns.
inline IntentVector conversation_labels(const Conversation& conv) {
    if (conv.labels) return *conv.labels;
    if (conv.fully_turn_labeled()) return range_labels(conv, {0, conv.turns.size()});
    throw Error(ErrorKind::UnlabeledTurn, "conversation '" + conv.id + "' carries no labels");
}

/// Checks the structural invariants of a record against a schema.
inline void validate(const Conversation& conv, const IntentSchema& schema) {
    if (conv.turns.empty()) {
        throw Error(ErrorKind::InvalidArgument, "conversation '" + conv.id + "' has no turns");
    }
    for (std::size_t i = 0; i < conv.turns.size(); ++i) {
        const auto& turn = conv.turns[i];
        if (is_blank(turn.text)) {
            throw Error(ErrorKind::InvalidArgument,
                        "turn " + std::to_string(i) + " of conversation '" + conv.id + "' is blank");
        }
        if (turn.labels && (turn.labels->size() != schema.size() || !turn.labels->is_binary())) {
            throw Error(ErrorKind::SchemaMismatch,
                        "turn " + std::to_string(i) + " of conversation '" + conv.id + "' has bad labels");
        }
    }
    if (conv.labels) {
        if (conv.labels->size() != schema.size() || !conv.labels->is_binary()) {
            throw Error(ErrorKind::SchemaMismatch, "conversation '" + conv.id + "' has bad labels");
        }
        if (conv.fully_turn_labeled() && range_labels(conv, {0, conv.turns.size()}) != *conv.labels) {
            throw Error(ErrorKind::InvalidArgument, "conversation '" + conv.id +
                                                        "' labels disagree with the OR of its turn labels");
        }
    }
}

/// Removes whitespace-only turns in place; returns how many were dropped.
inline std::size_t drop_blank_turns(Conversation& conv) {
    const auto before = conv.turns.size();
    std::erase_if(conv.turns, [](const Turn& t) { return is_blank(t.text); });
    return before - conv.turns.size();
}

}  // namespace convo_gate
