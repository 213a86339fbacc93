#include <gtest/gtest.h>

#include "convo_gate.hpp"

using namespace convo_gate;

namespace {

IntentVector bits(std::vector<int> v) { return IntentVector::binary(std::move(v)); }

Conversation labeled(std::vector<std::pair<std::string, std::vector<int>>> turns, std::string id = "c") {
    Conversation c;
    c.id = std::move(id);
    c.source_dataset = "t";
    for (auto& [text, l] : turns) c.turns.push_back({"S", text, bits(l)});
    return c;
}

template <class Fn>
ErrorKind kind_of(Fn&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no convo_gate::Error thrown";
    return ErrorKind::InvalidArgument;
}

}  // namespace

TEST(Pcg32, MatchesReferenceStream) {
    // Published pcg32 demo output for seed 42, sequence 54.
    Pcg32 rng(42, 54);
    const std::uint32_t expected[] = {0xa15c02b7, 0x7b47f409, 0xba1d3330, 0x83d2f293, 0xbfa4784b, 0xcbed606e};
    for (auto e : expected) EXPECT_EQ(rng.next(), e);
}

TEST(Pcg32, BoundedStaysInRangeAndUniform01InUnitInterval) {
    Pcg32 rng(1, 2);
    std::vector<int> hist(7, 0);
    for (int i = 0; i < 70000; ++i) {
        const auto v = rng.bounded(7);
        ASSERT_LT(v, 7u);
        ++hist[v];
        const double u = rng.uniform01();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
    }
    for (int h : hist) EXPECT_NEAR(h, 10000, 500);
}

TEST(Fnv1a, KnownVectors) {
    EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
    EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

TEST(IntentSchema, DefaultHasActionAndInformationIntents) {
    const auto s = IntentSchema::default_schema();
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(s[0].id, "action-triggering");
    EXPECT_EQ(s[1].id, "information-seeking");
    EXPECT_FALSE(s[0].positive_examples.empty());
    EXPECT_FALSE(s[0].negative_examples.empty());
    EXPECT_EQ(s.index_of("information-seeking"), 1u);
    EXPECT_FALSE(s.index_of("nope").has_value());
}

TEST(IntentSchema, RejectsBadIds) {
    EXPECT_EQ(kind_of([] { IntentSchema::from_ids({}); }), ErrorKind::InvalidArgument);
    EXPECT_EQ(kind_of([] { IntentSchema::from_ids({"a", "a"}); }), ErrorKind::Duplicate);
    EXPECT_EQ(kind_of([] { IntentSchema::from_ids({"Action"}); }), ErrorKind::InvalidArgument);
    EXPECT_EQ(kind_of([] { IntentSchema::from_ids({""}); }), ErrorKind::InvalidArgument);
    EXPECT_NO_THROW(IntentSchema::from_ids({"a-b", "c2"}));
}

TEST(IntentVector, BinaryDomainAndScoreRange) {
    EXPECT_EQ(kind_of([] { IntentVector::binary({0, 2}); }), ErrorKind::Domain);
    EXPECT_EQ(kind_of([] { IntentVector::scores({0.5, 1.5}); }), ErrorKind::Domain);
    const auto v = IntentVector::scores({0.2, 0.7});
    EXPECT_FALSE(v.is_binary());
    EXPECT_FALSE(v.test(0));
    EXPECT_TRUE(v.test(1));
}

TEST(AggregateLabels, OrSemantics) {
    EXPECT_EQ(aggregate_labels({bits({1, 0}), bits({0, 0})}), bits({1, 0}));
    EXPECT_EQ(aggregate_labels({bits({0, 0}), bits({0, 0})}), bits({0, 0}));
    EXPECT_EQ(aggregate_labels({bits({0, 1}), bits({1, 0}), bits({0, 0})}), bits({1, 1}));
}

TEST(AggregateLabels, Errors) {
    std::vector<IntentVector> none;
    try {
        aggregate_labels(std::span<const IntentVector>(none));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Precondition);
        EXPECT_NE(std::string(e.what()).find("no labels to aggregate"), std::string::npos);
    }
    EXPECT_EQ(kind_of([] { aggregate_labels({bits({1, 0}), bits({1})}); }), ErrorKind::SchemaMismatch);
}

TEST(RenderModelInput, JoinRule) {
    Conversation c;
    c.turns = {{"Ann", "hi", {}}, {"Bo", "set a reminder", {}}};
    EXPECT_EQ(render_model_input(c, "[SEP]"), "hi [SEP] set a reminder");
    Conversation one;
    one.turns = {{"Ann", "hello", {}}};
    EXPECT_EQ(render_model_input(one), "hello");
    Conversation three;
    three.turns = {{"x", "a", {}}, {"y", "b", {}}, {"z", "c", {}}};
    EXPECT_EQ(render_model_input(three, {0, 3}, "<s>"), "a <s> b <s> c");
    EXPECT_EQ(render_model_input(three, {1, 2}, "<s>"), "b");
}

TEST(RenderModelInput, InvalidRange) {
    Conversation c;
    c.turns = {{"a", "x", {}}, {"b", "y", {}}};
    EXPECT_EQ(kind_of([&] { render_model_input(c, TurnRange{1, 1}); }), ErrorKind::Range);
    EXPECT_EQ(kind_of([&] { render_model_input(c, TurnRange{0, 3}); }), ErrorKind::Range);
    EXPECT_EQ(kind_of([&] { render_model_input(c, TurnRange{2, 1}); }), ErrorKind::Range);
}

TEST(RenderModelInput, NeverLeaksSpeakerNames) {
    Pcg32 rng(9, 9);
    for (int trial = 0; trial < 500; ++trial) {
        Conversation c;
        const auto n = 1 + rng.bounded(6);
        for (std::uint32_t i = 0; i < n; ++i) {
            c.turns.push_back({"Zq" + std::to_string(rng.bounded(1000)) + "x", "turn " + std::to_string(i), {}});
        }
        const auto text = render_model_input(c);
        for (const auto& t : c.turns) EXPECT_EQ(text.find(t.speaker), std::string::npos);
    }
}

TEST(SegmentLabels, OrOverRange) {
    const auto c = labeled({{"a", {1, 0}}, {"b", {0, 0}}, {"c", {0, 1}}});
    EXPECT_EQ(segment_labels(c, make_segment(c, {0, 2})), bits({1, 0}));
    EXPECT_EQ(segment_labels(c, make_segment(c, {1, 2})), bits({0, 0}));
    EXPECT_EQ(segment_labels(c, make_segment(c, {0, 3})), bits({1, 1}));
}

TEST(SegmentLabels, UnlabeledTurnInRange) {
    auto c = labeled({{"a", {1, 0}}, {"b", {0, 0}}});
    c.turns[1].labels.reset();
    EXPECT_EQ(kind_of([&] { range_labels(c, {0, 2}); }), ErrorKind::UnlabeledTurn);
    EXPECT_EQ(range_labels(c, {0, 1}), bits({1, 0}));
}

TEST(SegmentLabels, FullRangeEqualsConversationLabels) {
    auto c = labeled({{"a", {0, 0}}, {"b", {0, 1}}});
    c.labels = bits({0, 1});
    EXPECT_EQ(segment_labels(c, make_segment(c, {0, 2})), *c.labels);
    EXPECT_EQ(conversation_labels(c), *c.labels);
}

TEST(Validate, ConversationInvariants) {
    const auto schema = IntentSchema::default_schema();
    auto c = labeled({{"a", {1, 0}}, {"b", {0, 0}}});
    c.labels = bits({1, 0});
    EXPECT_NO_THROW(validate(c, schema));
    c.labels = bits({1, 1});
    EXPECT_ANY_THROW(validate(c, schema));
    c.labels.reset();
    c.turns[0].text = "   ";
    EXPECT_ANY_THROW(validate(c, schema));
    Conversation empty;
    empty.id = "e";
    EXPECT_ANY_THROW(validate(empty, schema));
}

TEST(DropBlankTurns, RemovesWhitespaceOnlyTurns) {
    Conversation c;
    c.turns = {{"a", "x", {}}, {"b", " \t", {}}, {"c", "", {}}, {"d", "y", {}}};
    EXPECT_EQ(drop_blank_turns(c), 2u);
    ASSERT_EQ(c.turns.size(), 2u);
    EXPECT_EQ(c.turns[1].text, "y");
}

// Any partition of a fully labeled conversation ORs back to its label.
TEST(LabelAlgebra, RandomPartitionsAggregateToConversationLabel) {
    Pcg32 rng(2024, 3);
    for (int trial = 0; trial < 2000; ++trial) {
        const auto k = 1 + rng.bounded(4);
        const auto n = 1 + rng.bounded(12);
        Conversation c;
        std::vector<int> oracle(k, 0);
        for (std::uint32_t t = 0; t < n; ++t) {
            std::vector<int> l(k);
            for (auto& b : l) {
                b = rng.bernoulli(0.2) ? 1 : 0;
            }
            for (std::uint32_t i = 0; i < k; ++i) oracle[i] |= l[i];
            c.turns.push_back({"", "t", bits(l)});
        }
        std::vector<IntentVector> parts;
        std::size_t start = 0;
        while (start < n) {
            const std::size_t len = 1 + rng.bounded(static_cast<std::uint32_t>(n - start));
            parts.push_back(segment_labels(c, make_segment(c, {start, start + len})));
            start += len;
        }
        ASSERT_EQ(aggregate_labels(std::span<const IntentVector>(parts)), bits(oracle));
    }
}
