#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "json.hpp"

#include "convo_gate/core.hpp"
#include "convo_gate/error.hpp"
#include "convo_gate/random.hpp"
#include "convo_gate/tokens.hpp"

namespace convo_gate {

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Conversation line format

inline Json labels_to_json(const IntentVector& labels, const IntentSchema& schema) {
    Json out = Json::object();
    for (std::size_t i = 0; i < schema.size(); ++i) out[schema[i].id] = labels.test(i) ? 1 : 0;
    return out;
}

inline IntentVector labels_from_json(const Json& j, const IntentSchema& schema) {
    if (!j.is_object()) throw Error(ErrorKind::Parse, "labels must be an object");
    if (j.size() != schema.size()) {
        throw Error(ErrorKind::SchemaMismatch, "labels object has " + std::to_string(j.size()) +
                                                   " entries, schema has " + std::to_string(schema.size()));
    }
    std::vector<int> bits(schema.size(), 0);
    for (const auto& [key, value] : j.items()) {
        const auto idx = schema.index_of(key);
        if (!idx) throw Error(ErrorKind::SchemaMismatch, "unknown intent '" + key + "'");
        if (!value.is_number_integer() || (value.get<int>() != 0 && value.get<int>() != 1)) {
            throw Error(ErrorKind::Domain, "label for '" + key + "' must be 0 or 1");
        }
        bits[*idx] = value.get<int>();
    }
    return IntentVector::binary(std::move(bits));
}

inline Json to_json(const Conversation& conv, const IntentSchema& schema) {
    Json j;
    j["id"] = conv.id;
    j["source_dataset"] = conv.source_dataset;
    Json turns = Json::array();
    for (const auto& turn : conv.turns) {
        Json t;
        t["speaker"] = turn.speaker;
        t["text"] = turn.text;
        if (turn.labels) t["labels"] = labels_to_json(*turn.labels, schema);
        turns.push_back(std::move(t));
    }
    j["turns"] = std::move(turns);
    if (conv.labels) j["labels"] = labels_to_json(*conv.labels, schema);
    if (!conv.notes.empty()) j["notes"] = conv.notes;
    return j;
}

namespace detail {
inline const Json& require(const Json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) throw Error(ErrorKind::Parse, std::string("missing field '") + key + "'");
    return *it;
}
inline std::string require_string(const Json& j, const char* key) {
    const auto& v = require(j, key);
    if (!v.is_string()) throw Error(ErrorKind::Parse, std::string("field '") + key + "' must be a string");
    return v.get<std::string>();
}
}  // namespace detail

/// Parses one record. `drop_blank` removes whitespace-only turns instead of
/// rejecting them; the number removed is added to `*dropped`.
inline Conversation conversation_from_json(const Json& j, const IntentSchema& schema, bool drop_blank = false,
                                           std::size_t* dropped = nullptr) {
    if (!j.is_object()) throw Error(ErrorKind::Parse, "record must be an object");
    Conversation conv;
    conv.id = detail::require_string(j, "id");
    if (auto it = j.find("source_dataset"); it != j.end()) {
        if (!it->is_string()) throw Error(ErrorKind::Parse, "field 'source_dataset' must be a string");
        conv.source_dataset = it->get<std::string>();
    }
    const auto& turns = detail::require(j, "turns");
    if (!turns.is_array()) throw Error(ErrorKind::Parse, "field 'turns' must be an array");
    for (const auto& t : turns) {
        if (!t.is_object()) throw Error(ErrorKind::Parse, "turn must be an object");
        Turn turn;
        if (auto it = t.find("speaker"); it != t.end() && !it->is_null()) {
            if (!it->is_string()) throw Error(ErrorKind::Parse, "turn speaker must be a string");
            turn.speaker = it->get<std::string>();
        }
        turn.text = detail::require_string(t, "text");
        if (auto it = t.find("labels"); it != t.end() && !it->is_null()) {
            turn.labels = labels_from_json(*it, schema);
        }
        conv.turns.push_back(std::move(turn));
    }
    if (auto it = j.find("labels"); it != j.end() && !it->is_null()) conv.labels = labels_from_json(*it, schema);
    if (auto it = j.find("notes"); it != j.end() && it->is_string()) conv.notes = it->get<std::string>();
    if (drop_blank) {
        const auto n = drop_blank_turns(conv);
        if (dropped) *dropped += n;
    }
    validate(conv, schema);
    return conv;
}

inline std::string to_line(const Conversation& conv, const IntentSchema& schema) {
    try {
        return to_json(conv, schema).dump(-1, ' ', false, Json::error_handler_t::strict);
    } catch (const Json::type_error& e) {
        throw Error(ErrorKind::InvalidArgument, "conversation '" + conv.id + "' is not valid UTF-8: " + e.what());
    }
}

inline Conversation conversation_from_line(std::string_view line, const IntentSchema& schema) {
    Json j;
    try {
        j = Json::parse(line);
    } catch (const Json::parse_error& e) {
        throw Error(ErrorKind::Parse, e.what(), std::string(line));
    }
    return conversation_from_json(j, schema);
}

// ---------------------------------------------------------------------------
// Streaming reader / writer

enum class MalformedPolicy { Abort, SkipAndLog };

struct ReadIssue {
    std::size_t line = 0;
    std::string message;
};

struct ReadOptions {
    MalformedPolicy policy = MalformedPolicy::Abort;
    bool drop_blank_turns = false;
    std::function<void(const ReadIssue&)> on_issue;
};

/// Yields conversations in file order, one per non-empty line.
class CorpusReader {
public:
    CorpusReader(const std::filesystem::path& path, IntentSchema schema, ReadOptions options = {})
        : in_(path), schema_(std::move(schema)), options_(std::move(options)), path_(path.string()) {
        if (!in_) throw Error(ErrorKind::Io, "cannot open corpus " + path_);
    }

    std::optional<Conversation> next() {
        std::string line;
        while (std::getline(in_, line)) {
            ++line_no_;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (is_blank(line)) continue;
            try {
                Json j = Json::parse(line);
                return conversation_from_json(j, schema_, options_.drop_blank_turns, &dropped_turns_);
            } catch (const std::exception& e) {
                ReadIssue issue{line_no_, e.what()};
                if (options_.policy == MalformedPolicy::Abort) {
                    throw Error(ErrorKind::Parse, path_ + ":" + std::to_string(line_no_) + ": " + e.what(), line);
                }
                if (options_.on_issue) options_.on_issue(issue);
                issues_.push_back(std::move(issue));
            }
        }
        if (in_.bad()) throw Error(ErrorKind::Io, "read failure on " + path_);
        return std::nullopt;
    }

    const std::vector<ReadIssue>& issues() const noexcept { return issues_; }
    std::size_t dropped_turns() const noexcept { return dropped_turns_; }

private:
    std::ifstream in_;
    IntentSchema schema_;
    ReadOptions options_;
    std::string path_;
    std::size_t line_no_ = 0;
    std::size_t dropped_turns_ = 0;
    std::vector<ReadIssue> issues_;
};

inline std::vector<Conversation> read_corpus(const std::filesystem::path& path, const IntentSchema& schema,
                                             ReadOptions options = {}, std::vector<ReadIssue>* issues = nullptr) {
    CorpusReader reader(path, schema, std::move(options));
    std::vector<Conversation> out;
    while (auto conv = reader.next()) out.push_back(std::move(*conv));
    if (issues) *issues = reader.issues();
    return out;
}

class CorpusWriter {
public:
    CorpusWriter(const std::filesystem::path& path, IntentSchema schema)
        : out_(path, std::ios::binary | std::ios::trunc), schema_(std::move(schema)), path_(path.string()) {
        if (!out_) throw Error(ErrorKind::Io, "cannot open " + path_ + " for writing");
    }

    void write(const Conversation& conv) {
        out_ << to_line(conv, schema_) << '\n';
        if (!out_) {
            throw Error(ErrorKind::Io, "write failed on " + path_ + " after " + std::to_string(count_) + " records");
        }
        ++count_;
    }

    std::size_t close() {
        out_.flush();
        if (!out_) throw Error(ErrorKind::Io, "flush failed on " + path_ + " after " + std::to_string(count_) + " records");
        out_.close();
        return count_;
    }

    std::size_t count() const noexcept { return count_; }

private:
    std::ofstream out_;
    IntentSchema schema_;
    std::string path_;
    std::size_t count_ = 0;
};

inline std::size_t write_corpus(std::span<const Conversation> convs, const std::filesystem::path& path,
                                const IntentSchema& schema) {
    CorpusWriter writer(path, schema);
    for (const auto& conv : convs) writer.write(conv);
    return writer.close();
}

// ---------------------------------------------------------------------------
// Intent schema file (JSON)

inline IntentSchema schema_from_json(const Json& j) {
    const auto& list = detail::require(j, "intents");
    if (!list.is_array()) throw Error(ErrorKind::Parse, "'intents' must be an array");
    std::vector<IntentDescriptor> intents;
    auto strings = [](const Json& obj, const char* key) {
        std::vector<std::string> out;
        if (auto it = obj.find(key); it != obj.end()) out = it->get<std::vector<std::string>>();
        return out;
    };
    for (const auto& item : list) {
        IntentDescriptor d;
        d.id = detail::require_string(item, "id");
        if (auto it = item.find("definition"); it != item.end()) d.definition = it->get<std::string>();
        d.positive_examples = strings(item, "positive_examples");
        d.negative_examples = strings(item, "negative_examples");
        d.example_explanations = strings(item, "example_explanations");
        intents.push_back(std::move(d));
    }
    return IntentSchema(std::move(intents));
}

inline Json schema_to_json(const IntentSchema& schema) {
    Json list = Json::array();
    for (const auto& d : schema.intents()) {
        list.push_back({{"id", d.id},
                        {"definition", d.definition},
                        {"positive_examples", d.positive_examples},
                        {"negative_examples", d.negative_examples},
                        {"example_explanations", d.example_explanations}});
    }
    return Json{{"intents", list}};
}

inline IntentSchema load_schema(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open schema " + path.string());
    try {
        return schema_from_json(Json::parse(in));
    } catch (const Json::exception& e) {
        throw Error(ErrorKind::Parse, "schema " + path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Manifest

enum class DatasetRole { Train, Validation, Test };

inline DatasetRole parse_role(std::string_view s) {
    if (s == "train") return DatasetRole::Train;
    if (s == "validation") return DatasetRole::Validation;
    if (s == "test") return DatasetRole::Test;
    throw Error(ErrorKind::Parse, "unknown dataset role '" + std::string(s) + "'");
}

inline std::string_view to_string(DatasetRole role) {
    switch (role) {
        case DatasetRole::Train: return "train";
        case DatasetRole::Validation: return "validation";
        case DatasetRole::Test: return "test";
    }
    return "?";
}

struct DatasetEntry {
    std::string name;
    std::filesystem::path path;
    DatasetRole role = DatasetRole::Train;
    std::string notes;
};

/// INI manifest, one section per dataset:
///
///     [ami]
///     path = ami.jsonl
///     role = test
///     notes = 1 min chunks
///
/// Relative paths resolve against the manifest's directory.
struct CorpusManifest {
    std::vector<DatasetEntry> datasets;

    static CorpusManifest load(const std::filesystem::path& path) {
        boost::property_tree::ptree tree;
        try {
            boost::property_tree::read_ini(path.string(), tree);
        } catch (const boost::property_tree::ini_parser_error& e) {
            throw Error(std::filesystem::exists(path) ? ErrorKind::Parse : ErrorKind::Io, e.what());
        }
        CorpusManifest manifest;
        const auto base = path.parent_path();
        for (const auto& [name, section] : tree) {
            if (section.empty()) throw Error(ErrorKind::Parse, "manifest entry '" + name + "' is not a section");
            DatasetEntry entry;
            entry.name = name;
            const auto raw = section.get_optional<std::string>("path");
            if (!raw) throw Error(ErrorKind::Parse, "dataset '" + name + "' lacks a path");
            entry.path = std::filesystem::path(*raw).is_absolute() ? std::filesystem::path(*raw) : base / *raw;
            entry.role = parse_role(section.get<std::string>("role", "train"));
            entry.notes = section.get<std::string>("notes", "");
            if (!std::filesystem::exists(entry.path)) {
                throw Error(ErrorKind::Io, "dataset '" + name + "' path does not exist: " + entry.path.string());
            }
            for (const auto& other : manifest.datasets) {
                if (other.name == name) throw Error(ErrorKind::Duplicate, "duplicate dataset name '" + name + "'");
            }
            manifest.datasets.push_back(std::move(entry));
        }
        return manifest;
    }

    std::vector<DatasetEntry> with_role(DatasetRole role) const {
        std::vector<DatasetEntry> out;
        std::copy_if(datasets.begin(), datasets.end(), std::back_inserter(out),
                     [role](const DatasetEntry& d) { return d.role == role; });
        return out;
    }
};

// ---------------------------------------------------------------------------
// Statistics and balanced sampling

struct DatasetStats {
    std::size_t total = 0;
    std::vector<std::size_t> per_intent_positive;
    std::vector<std::size_t> per_intent_negative;
    std::size_t total_tokens = 0;

    bool operator==(const DatasetStats&) const = default;
};

inline DatasetStats compute_stats(std::span<const Conversation> convs, std::size_t n_intents,
                                  const TokenCounter& counter = {}) {
    DatasetStats stats;
    stats.per_intent_positive.assign(n_intents, 0);
    stats.per_intent_negative.assign(n_intents, 0);
    for (const auto& conv : convs) {
        const IntentVector labels = conversation_labels(conv);
        if (labels.size() != n_intents) {
            throw Error(ErrorKind::SchemaMismatch, "conversation '" + conv.id + "' label count mismatch");
        }
        for (std::size_t i = 0; i < n_intents; ++i) {
            (labels.test(i) ? stats.per_intent_positive : stats.per_intent_negative)[i]++;
        }
        stats.total_tokens += conversation_tokens(conv, counter);
        ++stats.total;
    }
    return stats;
}

/// Largest distance of any intent's positive rate from 50%.
inline double balance_deviation(std::span<const std::size_t> positives, std::size_t n) {
    if (n == 0) return 0.0;
    double worst = 0.0;
    for (auto p : positives) worst = std::max(worst, std::abs(static_cast<double>(p) / static_cast<double>(n) - 0.5));
    return worst;
}

inline double balance_spread(std::span<const std::size_t> positives, std::size_t n) {
    if (n == 0) return 0.0;
    double sum = 0.0;
    for (auto p : positives) {
        const double d = static_cast<double>(p) / static_cast<double>(n) - 0.5;
        sum += d * d;
    }
    return sum;
}

/// Greedy balanced subset: each pick minimises the maximum per-intent
/// deviation from a 50% positive rate, then the summed squared deviation.
/// Candidates are visited in a seeded shuffled order and ties go to the
/// earliest candidate in that order.
/// Repeated conversation ids are considered once.
inline std::vector<Conversation> sample_balanced(std::span<const Conversation> convs, std::size_t target_size,
                                                 std::uint64_t seed) {
    std::vector<std::size_t> unique;
    {
        std::unordered_set<std::string> ids;
        for (std::size_t i = 0; i < convs.size(); ++i) {
            if (ids.insert(convs[i].id).second) unique.push_back(i);
        }
    }
    if (target_size >= unique.size()) {
        std::vector<Conversation> all;
        for (auto i : unique) all.push_back(convs[i]);
        return all;
    }

    std::vector<std::size_t> order = unique;
    Pcg32 rng(seed, 0x5a11b);
    for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[rng.bounded(static_cast<std::uint32_t>(i))]);
    }

    // Conversations with identical label patterns are interchangeable, so the
    // greedy scan only needs to compare the head of each pattern's queue.
    std::map<std::vector<int>, std::vector<std::size_t>> groups;
    std::size_t n_intents = 0;
    for (auto idx : order) {
        const IntentVector labels = conversation_labels(convs[idx]);
        n_intents = labels.size();
        std::vector<int> key;
        for (std::size_t i = 0; i < labels.size(); ++i) key.push_back(labels.test(i) ? 1 : 0);
        groups[key].push_back(idx);
    }
    struct Queue {
        std::vector<int> pattern;
        std::vector<std::size_t> members;
        std::size_t head = 0;
    };
    std::vector<Queue> queues;
    for (auto& [pattern, members] : groups) queues.push_back({pattern, std::move(members), 0});
    std::vector<std::size_t> rank(convs.size(), 0);
    for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = r;

    std::vector<std::size_t> positives(n_intents, 0);
    std::vector<Conversation> picked;
    picked.reserve(target_size);
    std::vector<std::size_t> trial(n_intents);
    while (picked.size() < target_size) {
        Queue* best = nullptr;
        double best_dev = 0.0;
        double best_spread = 0.0;
        for (auto& q : queues) {
            if (q.head >= q.members.size()) continue;
            for (std::size_t i = 0; i < n_intents; ++i) trial[i] = positives[i] + static_cast<std::size_t>(q.pattern[i]);
            const double dev = balance_deviation(trial, picked.size() + 1);
            const double spread = balance_spread(trial, picked.size() + 1);
            bool better = !best || dev < best_dev - 1e-12;
            if (!better && std::abs(dev - best_dev) <= 1e-12) {
                better = spread < best_spread - 1e-12 ||
                         (std::abs(spread - best_spread) <= 1e-12 && rank[q.members[q.head]] < rank[best->members[best->head]]);
            }
            if (better) {
                best = &q;
                best_dev = dev;
                best_spread = spread;
            }
        }
        for (std::size_t i = 0; i < n_intents; ++i) positives[i] += static_cast<std::size_t>(best->pattern[i]);
        picked.push_back(convs[best->members[best->head++]]);
    }
    return picked;
}

}  // namespace convo_gate
