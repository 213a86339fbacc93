#pragma once

// Desk-scale synthetic corpus: seed queries from a few template families,
// expanded to conversations and labeled by the mock teacher.

#include <set>
#include <string>
#include <vector>

#include "convo_gate.hpp"

namespace desk {

using namespace convo_gate;

inline std::string pick(Pcg32& rng, const std::vector<std::string>& pool) {
    return pool[rng.bounded(static_cast<std::uint32_t>(pool.size()))];
}

inline std::string fill(std::string tmpl, Pcg32& rng) {
    static const std::vector<std::string> acts{
        "call the dentist", "buy milk",         "pick up the kids", "send the report",  "book a table",
        "water the plants", "pay the rent",     "clean the garage", "review the slides", "renew my passport",
        "walk the dog",     "fix the sink",     "order new tires",  "back up the laptop", "return the library book",
        "email the plumber", "cancel the gym plan", "print the tickets", "feed the cat", "charge the car"};
    static const std::vector<std::string> times{"tomorrow",  "at 5pm",         "on monday",    "next week",
                                                "tonight",   "this afternoon", "before friday", "in an hour"};
    static const std::vector<std::string> events{"meeting", "lunch", "call", "standup", "dinner", "review", "party"};
    static const std::vector<std::string> people{"sam", "the team", "my boss", "alex", "the landlord", "grandma"};
    static const std::vector<std::string> things{"coffee", "new phone", "weather", "traffic", "concert",
                                                 "book",   "pizza",     "movie",   "train fare"};
    static const std::vector<std::string> places{"park", "pharmacy", "gym", "library", "station", "bakery", "beach"};
    const std::vector<std::pair<std::string, const std::vector<std::string>*>> slots{
        {"{act}", &acts}, {"{time}", &times}, {"{event}", &events},
        {"{person}", &people}, {"{thing}", &things}, {"{place}", &places}};
    for (const auto& [key, pool] : slots) {
        for (auto pos = tmpl.find(key); pos != std::string::npos; pos = tmpl.find(key)) {
            tmpl.replace(pos, key.size(), pick(rng, *pool));
        }
    }
    return tmpl;
}

/// Distinct seed queries drawn evenly from action, information and chit-chat
/// templates (chit-chat includes cue-free near misses such as "i need to").
inline std::vector<std::string> seed_queries(std::size_t n, std::uint64_t seed) {
    static const std::vector<std::vector<std::string>> families{
        {"remind me to {act} {time}", "please {act} {time}", "can you {act} {time}", "i will {act} {time}",
         "schedule a {event} with {person} {time}", "add a task to {act}", "i promise to {act} {time}",
         "put {act} on my todo list"},
        {"what is the best way to {act}", "how do i {act}", "why is the {thing} so expensive",
         "who is coming to the {event} {time}", "when is the {event} with {person}", "where is the nearest {place}",
         "tell me about the {thing}", "is the {place} open {time}?"},
        {"i need to {act} {time}", "set an alarm for {time}", "i love the {thing}", "the {event} was great",
         "we had fun at the {place}", "{person} made dinner {time}", "the {thing} here is nice",
         "i went to the {place} {time}"},
    };
    static const std::vector<std::string> openers{"",         "hey, ",    "ok so ",    "by the way, ",
                                                  "quick one, ", "hi all, ", "so, ",      "honestly ",
                                                  "friends, ",   "one more thing, "};
    Pcg32 rng(seed, 11);
    std::set<std::string> seen;
    std::vector<std::string> out;
    for (std::size_t guard = 0; out.size() < n && guard < n * 50; ++guard) {
        const auto& family = families[out.size() % families.size()];
        std::string q = pick(rng, openers) + fill(pick(rng, family), rng);
        if (seen.insert(q).second) out.push_back(std::move(q));
    }
    return out;
}

/// n conversations generated and labeled by the mock teacher.
inline std::vector<Conversation> mock_corpus(std::size_t n, std::uint64_t seed, std::string dataset = "desk") {
    MockTeacher teacher;
    const auto seeds = seed_queries(n, seed);
    GenerateOptions gen;
    gen.source_dataset = dataset;
    gen.id_prefix = dataset;
    const auto raw = generate_from_seeds(seeds, IntentSchema::default_schema()[0], teacher, gen);
    return label_corpus(raw, IntentSchema::default_schema(), teacher);
}

}  // namespace desk
