#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "json.hpp"

#include "convo_gate/core.hpp"
#include "convo_gate/corpus.hpp"
#include "convo_gate/error.hpp"
#include "convo_gate/random.hpp"

namespace convo_gate {

// ---------------------------------------------------------------------------
// Requests

struct ChatMessage {
    std::string role;
    std::string content;
};

enum class TeacherTask { LabelTurns, GenerateFromSeed, PersonaSetup, PersonaConversation };

struct Persona {
    std::string name;
    std::string qualities;
    std::string speech_style;

    bool operator==(const Persona&) const = default;
};

/// A rendered chat prompt plus the structured inputs it was rendered from.
/// Remote teachers only look at `messages`; offline teachers may use the
/// structured fields instead of parsing prose.
struct TeacherRequest {
    TeacherTask task = TeacherTask::LabelTurns;
    std::vector<ChatMessage> messages;
    double temperature = 0.0;

    std::string intent_id;
    std::vector<std::string> turn_texts;
    std::string seed_query;
    std::size_t n_speakers = 0;
    std::optional<std::string> topic_hint;
    std::vector<Persona> personas;
    std::string starter;
    std::size_t min_turns = 0;
};

class TeacherClient {
public:
    virtual ~TeacherClient() = default;
    /// Returns the raw assistant text. Must be safe to call concurrently.
    virtual std::string complete(const TeacherRequest& request) = 0;
};

// ---------------------------------------------------------------------------
// Prompt templates

/// Replaces each `{name}` whose name is a key of `values`. Other braces,
/// e.g. JSON samples inside the template, are left untouched.
inline std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            const auto close = tmpl.find('}', i + 1);
            if (close != std::string_view::npos) {
                const std::string key(tmpl.substr(i + 1, close - i - 1));
                if (auto it = values.find(key); it != values.end()) {
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out += tmpl[i++];
    }
    return out;
}

struct PromptTemplates {
    std::string system;
    std::string label_turns;
    std::string generate_from_seed;
    std::string persona_setup;
    std::string persona_conversation;

    static PromptTemplates defaults();

    /// Reads <dir>/{system,label_turns,generate_from_seed,persona_setup,
    /// persona_conversation}.txt; missing files keep the built-in text.
    static PromptTemplates load(const std::filesystem::path& dir) {
        PromptTemplates t = defaults();
        auto read = [&](const char* name, std::string& slot) {
            const auto path = dir / (std::string(name) + ".txt");
            if (!std::filesystem::exists(path)) return;
            std::ifstream in(path);
            if (!in) throw Error(ErrorKind::Io, "cannot read prompt template " + path.string());
            std::stringstream ss;
            ss << in.rdbuf();
            slot = ss.str();
        };
        read("system", t.system);
        read("label_turns", t.label_turns);
        read("generate_from_seed", t.generate_from_seed);
        read("persona_setup", t.persona_setup);
        read("persona_conversation", t.persona_conversation);
        return t;
    }
};

inline PromptTemplates PromptTemplates::defaults() {
    PromptTemplates t;
    t.system =
        "You are a careful annotator and writer of multi-party conversations. "
        "Always answer in the exact output format requested.\n";
    t.label_turns =
        R"(Intent: {intent_id}

Definition:
{intent_definition}

Positive examples:
{positive_examples}

Negative examples:
{negative_examples}

Conversation ({n_turns} turns, numbered from 0):
{conversation}

Label every turn of the conversation for this intent: 1 if the turn shows the intent, 0 otherwise.
Explain each labeling decision in one sentence. Every turn from 0 to {n_turns} - 1 must appear exactly once.
Answer with a JSON array inside <labels></labels> tags, for example:
<labels>
[{"turn": 0, "label": 1, "explanation": "The speaker asks to be reminded about a task."},
 {"turn": 1, "label": 0, "explanation": "A plain acknowledgement."}]
</labels>
)";
    t.generate_from_seed =
        R"(Write a natural multi-party conversation among two to four people that revolves around the following request or question:
"{seed_query}"

The conversation should relate to this intent:
{intent_definition}

Include some small talk around the main topic. Use first names as speaker names.
Answer with a JSON array inside <conversation></conversation> tags:
<conversation>
[{"speaker": "Ann", "text": "..."}, {"speaker": "Bo", "text": "..."}]
</conversation>
)";
    t.persona_setup =
        R"(Create {n_speakers} distinct personas for people who are about to chat in a group.
Topic hint: {topic_hint}
For each persona give a first name, their qualities and their speech style.
Then write one conversation starter line that opens the chat.
Answer with a JSON object inside <personas></personas> tags:
<personas>
{"personas": [{"name": "...", "qualities": "...", "speech_style": "..."}], "starter": "..."}
</personas>
)";
    t.persona_conversation =
        R"(The following people are in a group chat:
{personas}

The conversation begins with: "{starter}"
Continue the conversation for at least {min_turns} turns. Each speaker must stay true to their qualities and speech style.
Answer with a JSON array inside <conversation></conversation> tags:
<conversation>
[{"speaker": "...", "text": "..."}]
</conversation>
)";
    return t;
}

inline std::string format_examples(const IntentDescriptor& intent, bool positive) {
    const auto& list = positive ? intent.positive_examples : intent.negative_examples;
    const std::size_t offset = positive ? 0 : intent.positive_examples.size();
    std::string out;
    for (std::size_t i = 0; i < list.size(); ++i) {
        out += "- \"" + list[i] + "\"\n";
        if (offset + i < intent.example_explanations.size()) {
            out += "  Why: " + intent.example_explanations[offset + i] + "\n";
        }
    }
    return out.empty() ? "(none)\n" : out;
}

inline std::string format_numbered_turns(const Conversation& conv) {
    std::string out;
    for (std::size_t i = 0; i < conv.turns.size(); ++i) {
        const auto& t = conv.turns[i];
        out += "[" + std::to_string(i) + "] " + (t.speaker.empty() ? std::string("Speaker") : t.speaker) + ": " +
               t.text + "\n";
    }
    return out;
}

inline TeacherRequest build_label_request(const Conversation& conv, const IntentDescriptor& intent,
                                          const PromptTemplates& templates, double temperature) {
    TeacherRequest req;
    req.task = TeacherTask::LabelTurns;
    req.temperature = temperature;
    req.intent_id = intent.id;
    for (const auto& t : conv.turns) req.turn_texts.push_back(t.text);
    const std::map<std::string, std::string> values{
        {"intent_id", intent.id},
        {"intent_definition", intent.definition},
        {"positive_examples", format_examples(intent, true)},
        {"negative_examples", format_examples(intent, false)},
        {"conversation", format_numbered_turns(conv)},
        {"n_turns", std::to_string(conv.turns.size())}};
    req.messages = {{"system", templates.system}, {"user", render_template(templates.label_turns, values)}};
    return req;
}

// ---------------------------------------------------------------------------
// Response parsing

/// Text between <tag> and </tag>, else the first ```json fenced block.
inline std::optional<std::string> extract_block(std::string_view raw, std::string_view tag) {
    const std::string open = "<" + std::string(tag) + ">";
    const std::string close = "</" + std::string(tag) + ">";
    if (auto b = raw.find(open); b != std::string_view::npos) {
        const auto start = b + open.size();
        if (auto e = raw.find(close, start); e != std::string_view::npos) {
            return std::string(raw.substr(start, e - start));
        }
    }
    if (auto f = raw.find("```json"); f != std::string_view::npos) {
        const auto start = f + 7;
        if (auto e = raw.find("```", start); e != std::string_view::npos) return std::string(raw.substr(start, e - start));
    }
    return std::nullopt;
}

inline Json parse_block(std::string_view raw, std::string_view tag) {
    const auto block = extract_block(raw, tag);
    if (!block) throw Error(ErrorKind::Parse, "response has no <" + std::string(tag) + "> block", std::string(raw));
    try {
        return Json::parse(*block);
    } catch (const Json::parse_error& e) {
        throw Error(ErrorKind::Parse, std::string("malformed JSON in response: ") + e.what(), std::string(raw));
    }
}

/// One intent's verdict for one turn.
struct TurnJudgement {
    std::size_t turn_index = 0;
    bool label = false;
    std::string explanation;

    bool operator==(const TurnJudgement&) const = default;
};

/// Extracts the per-turn label block. Prose around the block is ignored;
/// turn coverage and the label domain are enforced strictly.
inline std::vector<TurnJudgement> parse_teacher_response(std::string_view raw, std::size_t expected_turns) {
    const Json block = parse_block(raw, "labels");
    if (!block.is_array()) throw Error(ErrorKind::Parse, "labels block must be a JSON array", std::string(raw));
    std::vector<TurnJudgement> out;
    std::vector<bool> seen(expected_turns, false);
    for (const auto& item : block) {
        if (!item.is_object() || !item.contains("turn") || !item.contains("label")) {
            throw Error(ErrorKind::Parse, "each label entry needs 'turn' and 'label'", std::string(raw));
        }
        const auto& turn = item["turn"];
        if (!turn.is_number_integer() || turn.get<long long>() < 0) {
            throw Error(ErrorKind::Parse, "turn index must be a non-negative integer", std::string(raw));
        }
        const auto index = static_cast<std::size_t>(turn.get<long long>());
        const auto& value = item["label"];
        int label = -1;
        if (value.is_number_integer()) {
            label = static_cast<int>(value.get<long long>());
        } else if (value.is_string()) {
            const auto s = value.get<std::string>();
            label = s == "0" ? 0 : s == "1" ? 1 : -1;
        }
        if (label != 0 && label != 1) {
            throw Error(ErrorKind::Domain, "label for turn " + std::to_string(index) + " is not 0 or 1: " + value.dump(),
                        std::string(raw));
        }
        if (index >= expected_turns) {
            throw Error(ErrorKind::Coverage, "turn index " + std::to_string(index) + " outside conversation of " +
                                                 std::to_string(expected_turns) + " turns", std::string(raw));
        }
        if (seen[index]) {
            throw Error(ErrorKind::Duplicate, "turn " + std::to_string(index) + " labeled twice", std::string(raw));
        }
        seen[index] = true;
        std::string explanation;
        if (auto it = item.find("explanation"); it != item.end() && it->is_string()) explanation = it->get<std::string>();
        if (label == 1 && is_blank(explanation)) {
            throw Error(ErrorKind::Domain, "positive label for turn " + std::to_string(index) + " lacks an explanation",
                        std::string(raw));
        }
        out.push_back({index, label == 1, std::move(explanation)});
    }
    if (out.size() != expected_turns) {
        throw Error(ErrorKind::Coverage, "response labels " + std::to_string(out.size()) + " of " +
                                             std::to_string(expected_turns) + " turns", std::string(raw));
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.turn_index < b.turn_index; });
    return out;
}

inline std::vector<Turn> parse_conversation_block(std::string_view raw) {
    const Json block = parse_block(raw, "conversation");
    if (!block.is_array() || block.empty()) {
        throw Error(ErrorKind::Parse, "conversation block must be a non-empty array", std::string(raw));
    }
    std::vector<Turn> turns;
    for (const auto& item : block) {
        if (!item.is_object() || !item.contains("text") || !item["text"].is_string()) {
            throw Error(ErrorKind::Parse, "each conversation entry needs a 'text' string", std::string(raw));
        }
        Turn t;
        if (auto it = item.find("speaker"); it != item.end() && it->is_string()) t.speaker = it->get<std::string>();
        t.text = item["text"].get<std::string>();
        if (!is_blank(t.text)) turns.push_back(std::move(t));
    }
    if (turns.empty()) throw Error(ErrorKind::Parse, "conversation block has no usable turns", std::string(raw));
    return turns;
}

// ---------------------------------------------------------------------------
// Labeling

/// All intents' labels for one turn, with one explanation per intent.
struct TurnAnnotation {
    std::size_t turn_index = 0;
    IntentVector labels;
    std::vector<std::string> explanations;

    bool operator==(const TurnAnnotation&) const = default;
};

struct LabelOptions {
    std::size_t max_in_flight = 4;
    double temperature = 0.0;
    PromptTemplates templates = PromptTemplates::defaults();
};

namespace detail {
/// Runs fn(0..n-1) on at most `limit` threads. Rethrows the exception of the
/// lowest failing index so failures are reported deterministically.
template <class Fn>
void bounded_parallel_for(std::size_t n, std::size_t limit, Fn&& fn) {
    if (n == 0) return;
    limit = std::max<std::size_t>(1, std::min(limit, n));
    std::vector<std::exception_ptr> errors(n);
    if (limit == 1) {
        for (std::size_t i = 0; i < n; ++i) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
                break;
            }
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::jthread> workers;
        for (std::size_t w = 0; w < limit; ++w) {
            workers.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        }
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}
}  // namespace detail

/// One labeling request per intent; the per-intent verdicts are merged into
/// one annotation per turn.
inline std::vector<TurnAnnotation> label_turns(const Conversation& conv, const IntentSchema& schema,
                                               TeacherClient& teacher, const LabelOptions& options = {}) {
    if (conv.turns.empty()) throw Error(ErrorKind::Precondition, "cannot label an empty conversation");
    std::vector<std::vector<TurnJudgement>> per_intent(schema.size());
    detail::bounded_parallel_for(schema.size(), options.max_in_flight, [&](std::size_t k) {
        const auto req = build_label_request(conv, schema[k], options.templates, options.temperature);
        per_intent[k] = parse_teacher_response(teacher.complete(req), conv.turns.size());
    });
    std::vector<TurnAnnotation> out(conv.turns.size());
    for (std::size_t t = 0; t < conv.turns.size(); ++t) {
        std::vector<int> bits(schema.size());
        out[t].turn_index = t;
        for (std::size_t k = 0; k < schema.size(); ++k) {
            bits[k] = per_intent[k][t].label ? 1 : 0;
            out[t].explanations.push_back(per_intent[k][t].explanation);
        }
        out[t].labels = IntentVector::binary(std::move(bits));
    }
    return out;
}

/// Copy of `conv` with turn labels set and conversation labels = OR of turns.
inline Conversation apply_annotations(Conversation conv, const std::vector<TurnAnnotation>& annotations) {
    if (annotations.size() != conv.turns.size()) {
        throw Error(ErrorKind::Coverage, "annotation count does not match turn count for '" + conv.id + "'");
    }
    for (const auto& a : annotations) conv.turns.at(a.turn_index).labels = a.labels;
    conv.labels = range_labels(conv, {0, conv.turns.size()});
    return conv;
}

/// Labels a corpus with at most max_in_flight teacher requests outstanding.
/// Output order matches input order.
inline std::vector<Conversation> label_corpus(std::span<const Conversation> convs, const IntentSchema& schema,
                                              TeacherClient& teacher, const LabelOptions& options = {}) {
    std::vector<Conversation> out(convs.size());
    LabelOptions inner = options;
    inner.max_in_flight = 1;
    detail::bounded_parallel_for(convs.size(), options.max_in_flight, [&](std::size_t i) {
        out[i] = apply_annotations(convs[i], label_turns(convs[i], schema, teacher, inner));
    });
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic generation

struct GenerateOptions {
    double temperature = 0.9;
    std::string source_dataset = "synthetic";
    std::string id_prefix = "gen";
    PromptTemplates templates = PromptTemplates::defaults();
};

/// One unlabeled conversation per seed query, built around the seed.
inline std::vector<Conversation> generate_from_seeds(std::span<const std::string> seed_queries,
                                                     const IntentDescriptor& target_intent, TeacherClient& teacher,
                                                     const GenerateOptions& options = {}) {
    std::vector<Conversation> out;
    out.reserve(seed_queries.size());
    for (std::size_t i = 0; i < seed_queries.size(); ++i) {
        TeacherRequest req;
        req.task = TeacherTask::GenerateFromSeed;
        req.temperature = options.temperature;
        req.intent_id = target_intent.id;
        req.seed_query = seed_queries[i];
        req.messages = {{"system", options.templates.system},
                        {"user", render_template(options.templates.generate_from_seed,
                                                 {{"seed_query", seed_queries[i]},
                                                  {"intent_id", target_intent.id},
                                                  {"intent_definition", target_intent.definition}})}};
        Conversation conv;
        conv.id = options.id_prefix + "-" + std::to_string(i);
        conv.source_dataset = options.source_dataset;
        conv.turns = parse_conversation_block(teacher.complete(req));
        out.push_back(std::move(conv));
    }
    return out;
}

inline std::string format_personas(const std::vector<Persona>& personas) {
    std::string out;
    for (const auto& p : personas) {
        out += "- " + p.name + ": " + p.qualities + " Speech style: " + p.speech_style + "\n";
    }
    return out;
}

/// Two phases: personas and a starter line first, then the conversation
/// among those personas opened by the starter. Personas and starter are
/// kept in the conversation notes as JSON.
inline Conversation generate_persona_conversation(std::size_t n_speakers, const std::optional<std::string>& topic_hint,
                                                  TeacherClient& teacher, const GenerateOptions& options = {},
                                                  const std::string& id = "persona-0") {
    if (n_speakers < 2) throw Error(ErrorKind::Precondition, "a persona conversation needs at least 2 speakers");

    TeacherRequest setup;
    setup.task = TeacherTask::PersonaSetup;
    setup.temperature = options.temperature;
    setup.n_speakers = n_speakers;
    setup.topic_hint = topic_hint;
    setup.messages = {{"system", options.templates.system},
                      {"user", render_template(options.templates.persona_setup,
                                               {{"n_speakers", std::to_string(n_speakers)},
                                                {"topic_hint", topic_hint.value_or("any everyday topic")}})}};
    const std::string setup_raw = teacher.complete(setup);
    const Json setup_json = parse_block(setup_raw, "personas");
    if (!setup_json.is_object() || !setup_json.contains("personas") || !setup_json["personas"].is_array()) {
        throw Error(ErrorKind::Parse, "personas block lacks a 'personas' array", setup_raw);
    }
    std::vector<Persona> personas;
    for (const auto& p : setup_json["personas"]) {
        if (!p.is_object() || !p.contains("name") || !p["name"].is_string()) {
            throw Error(ErrorKind::Parse, "persona entry lacks a name", setup_raw);
        }
        personas.push_back({p["name"].get<std::string>(), p.value("qualities", std::string()),
                            p.value("speech_style", std::string())});
    }
    if (personas.size() != n_speakers) {
        throw Error(ErrorKind::Coverage, "asked for " + std::to_string(n_speakers) + " personas, got " +
                                             std::to_string(personas.size()), setup_raw);
    }
    const std::string starter = setup_json.value("starter", std::string());
    if (is_blank(starter)) throw Error(ErrorKind::Parse, "personas block lacks a starter", setup_raw);

    TeacherRequest chat;
    chat.task = TeacherTask::PersonaConversation;
    chat.temperature = options.temperature;
    chat.n_speakers = n_speakers;
    chat.personas = personas;
    chat.starter = starter;
    chat.min_turns = std::max<std::size_t>(6, 2 * n_speakers);
    chat.messages = {{"system", options.templates.system},
                     {"user", render_template(options.templates.persona_conversation,
                                              {{"personas", format_personas(personas)},
                                               {"starter", starter},
                                               {"min_turns", std::to_string(chat.min_turns)}})}};

    Conversation conv;
    conv.id = id;
    conv.source_dataset = options.source_dataset;
    conv.turns = parse_conversation_block(teacher.complete(chat));
    Json notes = Json::object();
    notes["starter"] = starter;
    notes["personas"] = Json::array();
    for (const auto& p : personas) {
        notes["personas"].push_back({{"name", p.name}, {"qualities", p.qualities}, {"speech_style", p.speech_style}});
    }
    conv.notes = notes.dump();
    return conv;
}

// ---------------------------------------------------------------------------
// Deterministic offline teacher

/// Keyword-rule teacher for tests and desk-scale distillation. A turn is
/// action-triggering iff its lowercased text contains one of
/// {"remind", "schedule", "please ", "can you", "task", "promise", "i will ",
/// "todo"}; information-seeking iff it contains "?" or one of {"what", "why",
/// "how", "who ", "when ", "where ", "tell me"}. Generation follows fixed
/// templates keyed by a hash of the request.
class MockTeacher final : public TeacherClient {
public:
    static constexpr std::string_view kActionId = "action-triggering";
    static constexpr std::string_view kInfoId = "information-seeking";

    static std::vector<std::string_view> action_cues() {
        return {"remind", "schedule", "please ", "can you", "task", "promise", "i will ", "todo"};
    }
    static std::vector<std::string_view> info_cues() {
        return {"?", "what", "why", "how", "who ", "when ", "where ", "tell me"};
    }

    /// First cue of the intent found in `text`, if any.
    static std::optional<std::string_view> matched_cue(std::string_view intent_id, std::string_view text) {
        std::string lower(text);
        std::transform(lower.begin(), lower.end(), lower.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        std::vector<std::string_view> cues;
        if (intent_id == kActionId) cues = action_cues();
        else if (intent_id == kInfoId) cues = info_cues();
        for (auto cue : cues) {
            if (lower.find(cue) != std::string::npos) return cue;
        }
        return std::nullopt;
    }

    static bool rule(std::string_view intent_id, std::string_view text) { return matched_cue(intent_id, text).has_value(); }

    std::string complete(const TeacherRequest& req) override {
        calls_.fetch_add(1, std::memory_order_relaxed);
        switch (req.task) {
            case TeacherTask::LabelTurns: return label(req);
            case TeacherTask::GenerateFromSeed: return from_seed(req);
            case TeacherTask::PersonaSetup: return persona_setup(req);
            case TeacherTask::PersonaConversation: return persona_chat(req);
        }
        throw Error(ErrorKind::Backend, "unknown teacher task");
    }

    std::size_t calls() const noexcept { return calls_.load(); }

    static const std::vector<std::string>& speaker_names() {
        static const std::vector<std::string> names{"Ann", "Bo", "Chen", "Dara", "Eli", "Fatima", "Gus", "Hana",
                                                    "Ivan", "Jules", "Kofi", "Lena"};
        return names;
    }

private:
    static std::string label(const TeacherRequest& req) {
        Json arr = Json::array();
        for (std::size_t i = 0; i < req.turn_texts.size(); ++i) {
            const auto cue = matched_cue(req.intent_id, req.turn_texts[i]);
            arr.push_back({{"turn", i},
                           {"label", cue ? 1 : 0},
                           {"explanation", cue ? "The turn contains the cue \"" + std::string(*cue) + "\"."
                                               : std::string("No cue for this intent.")}});
        }
        return "Here are the labels.\n<labels>\n" + arr.dump() + "\n</labels>\n";
    }

    static std::string conversation_block(const std::vector<std::pair<std::string, std::string>>& turns) {
        Json arr = Json::array();
        for (const auto& [speaker, text] : turns) arr.push_back({{"speaker", speaker}, {"text", text}});
        return "<conversation>\n" + arr.dump() + "\n</conversation>\n";
    }

    static std::string from_seed(const TeacherRequest& req) {
        static const std::vector<std::string> replies{
            "sure, that sounds fine to me.",
            "okay, i will take care of it tomorrow.",
            "that makes sense to me.",
            "why do you need that so soon?",
            "alright, noted.",
            "can you send me the details later?",
            "good idea, let us do that.",
            "no problem at all.",
        };
        static const std::vector<std::string> asides{
            "by the way the coffee here is great.",
            "i just got back from the gym.",
            "what time is it over there?",
            "the weather is lovely today.",
            "please also remind me about the groceries.",
            "my sister says hi.",
            "this week has been busy.",
            "i saw a great movie last night.",
        };
        static const std::vector<std::string> closings{
            "thanks, talk soon.",
            "great, see you then.",
            "cool, bye for now.",
            "perfect, thanks everyone.",
            "ok, catch you later.",
            "thanks a lot.",
        };
        const std::uint64_t h = fnv1a64(req.seed_query);
        const auto& names = speaker_names();
        const std::size_t n = names.size();
        const std::size_t ia = h % n;
        const std::size_t ib = (ia + 1 + (h >> 32) % (n - 1)) % n;
        std::size_t ic = (ia + 1 + (h >> 40) % (n - 1)) % n;
        if (ic == ib) ic = (ib + 1) % n == ia ? (ib + 2) % n : (ib + 1) % n;
        const std::string& a = names[ia];
        const std::string& b = names[ib];
        const std::string& c = names[ic];
        return "Here is the conversation.\n" +
               conversation_block({{a, req.seed_query},
                                   {b, replies[(h >> 8) % replies.size()]},
                                   {c, asides[(h >> 16) % asides.size()]},
                                   {a, closings[(h >> 24) % closings.size()]}});
    }

    static std::string persona_setup(const TeacherRequest& req) {
        static const std::vector<std::string> qualities{"curious and upbeat", "dry sense of humour", "organised planner",
                                                        "laid-back storyteller", "detail-oriented engineer"};
        static const std::vector<std::string> styles{"short sentences", "lots of questions", "formal and polite",
                                                     "casual slang", "long rambling replies"};
        Json personas = Json::array();
        const auto& names = speaker_names();
        for (std::size_t i = 0; i < req.n_speakers; ++i) {
            personas.push_back({{"name", names[i % names.size()] + (i >= names.size() ? std::to_string(i) : "")},
                                {"qualities", qualities[i % qualities.size()]},
                                {"speech_style", styles[i % styles.size()]}});
        }
        const std::string topic = req.topic_hint.value_or("our week");
        Json out{{"personas", personas}, {"starter", "hey everyone, let us catch up about " + topic + "."}};
        return "<personas>\n" + out.dump() + "\n</personas>\n";
    }

    static std::string persona_chat(const TeacherRequest& req) {
        static const std::vector<std::string> lines{
            "that sounds like fun.",
            "i will bring snacks this time.",
            "what did you end up doing last weekend?",
            "honestly i mostly slept.",
            "can you schedule something for saturday?",
            "i am in, count me in.",
            "tell me more about the trip.",
            "it was relaxing, we stayed near the lake.",
        };
        std::vector<std::pair<std::string, std::string>> turns;
        const std::uint64_t h = fnv1a64(req.starter);
        turns.emplace_back(req.personas.at(0).name, req.starter);
        for (std::size_t i = 1; i < req.min_turns; ++i) {
            turns.emplace_back(req.personas[i % req.personas.size()].name, lines[(h + i) % lines.size()]);
        }
        return conversation_block(turns);
    }

    std::atomic<std::size_t> calls_{0};
};

}  // namespace convo_gate
