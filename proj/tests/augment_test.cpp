#include <gtest/gtest.h>

#include "convo_gate.hpp"
#include "support/random_corpus.hpp"

using namespace convo_gate;

namespace {

Conversation n_turns(std::size_t n, std::size_t words_per_turn = 1) {
    Conversation c;
    c.id = "w";
    for (std::size_t i = 0; i < n; ++i) {
        std::string text;
        for (std::size_t w = 0; w < words_per_turn; ++w) text += (w ? " w" : "w") + std::to_string(i);
        c.turns.push_back({"s", text, IntentVector::binary({static_cast<int>(i % 3 == 0), static_cast<int>(i % 4 == 1)})});
    }
    return c;
}

IntentVector brute_or(const Conversation& c, std::size_t b, std::size_t e) {
    std::vector<int> v(c.turns[0].labels->size(), 0);
    for (std::size_t t = b; t < e; ++t) {
        for (std::size_t i = 0; i < v.size(); ++i) v[i] |= c.turns[t].labels->test(i) ? 1 : 0;
    }
    return IntentVector::binary(v);
}

}  // namespace

TEST(Tokens, WhitespaceCount) {
    EXPECT_EQ(count_whitespace_tokens("set a reminder"), 3u);
    EXPECT_EQ(count_whitespace_tokens(""), 0u);
    EXPECT_EQ(count_whitespace_tokens("  a   b "), 2u);
    EXPECT_EQ(count_whitespace_tokens("a\tb\nc\r\nd"), 4u);
    EXPECT_EQ(TokenCounter::whitespace().truncate("a b  c d", 2), "a b");
}

TEST(Tokens, ParseCounterKind) {
    EXPECT_EQ(parse_counter_kind("whitespace"), CounterKind::Whitespace);
    EXPECT_EQ(parse_counter_kind("external-tokenizer"), CounterKind::ExternalTokenizer);
    EXPECT_THROW(parse_counter_kind("bpe"), Error);
    try {
        TokenCounter::external(nullptr);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Backend);
    }
}

TEST(WordPiece, GreedyLongestMatchFirst) {
    WordPieceTokenizer tok({"[PAD]", "[UNK]", "[CLS]", "[SEP]", "un", "##aff", "##able", "hello", ",", "!", "remind"},
                           {});
    EXPECT_EQ(tok.tokenize("unaffable"), (std::vector<std::string>{"un", "##aff", "##able"}));
    EXPECT_EQ(tok.tokenize("Hello, World!"), (std::vector<std::string>{"hello", ",", "[UNK]", "!"}));
    EXPECT_EQ(tok.tokenize("remind [SEP] hello"), (std::vector<std::string>{"remind", "[SEP]", "hello"}));
    const auto enc = tok.encode("hello hello hello", 4);
    EXPECT_EQ(enc.input_ids, (std::vector<std::int64_t>{2, 7, 7, 3}));
    EXPECT_EQ(enc.attention_mask, (std::vector<std::int64_t>{1, 1, 1, 1}));
    const auto counter = TokenCounter::external(std::make_shared<const WordPieceTokenizer>(tok));
    EXPECT_EQ(counter.count("unaffable hello"), 4u);
}

TEST(WordPiece, MissingSpecialTokenRejected) {
    EXPECT_THROW(WordPieceTokenizer({"a", "b"}, {}), Error);
}

TEST(Windows, TenTurnsDefaultConfig) {
    const auto c = n_turns(10);
    WindowConfig cfg;
    Pcg32 rng(3, 1);
    const auto segs = sample_windows(c, cfg, rng);
    EXPECT_LE(segs.size(), 2u);
    EXPECT_GE(segs.size(), 1u);
    for (const auto& s : segs) {
        EXPECT_GE(s.size(), 1u);
        EXPECT_LE(s.size(), 5u);
        EXPECT_LE(s.end_turn, 10u);
        EXPECT_EQ(*s.labels, brute_or(c, s.start_turn, s.end_turn));
    }
}

TEST(Windows, SingleTurnAndTooShort) {
    Pcg32 rng(1, 1);
    for (const auto& s : sample_windows(n_turns(1), WindowConfig{}, rng)) EXPECT_EQ(s.size(), 1u);
    WindowConfig four{4, 5, 2, 0.5, 0};
    EXPECT_TRUE(sample_windows(n_turns(3), four, rng).empty());
}

TEST(Windows, DeterministicPerSeed) {
    const auto c = n_turns(12);
    Pcg32 a(99, 7), b(99, 7);
    for (int i = 0; i < 100; ++i) {
        const auto sa = sample_windows(c, WindowConfig{}, a);
        const auto sb = sample_windows(c, WindowConfig{}, b);
        ASSERT_EQ(sa.size(), sb.size());
        for (std::size_t k = 0; k < sa.size(); ++k) {
            EXPECT_EQ(sa[k].start_turn, sb[k].start_turn);
            EXPECT_EQ(sa[k].end_turn, sb[k].end_turn);
        }
    }
}

TEST(Windows, ConfigValidation) {
    EXPECT_THROW((WindowConfig{0, 5, 2, 0.5, 0}).validate(), Error);
    EXPECT_THROW((WindowConfig{3, 2, 2, 0.5, 0}).validate(), Error);
    EXPECT_THROW((WindowConfig{1, 5, 2, 1.5, 0}).validate(), Error);
}

TEST(Windows, RandomDrawsStayInBounds) {
    Pcg32 rng(11, 11);
    for (int trial = 0; trial < 3000; ++trial) {
        const auto c = gen::random_conversation(rng, 2, trial, 15, gen::LabelStyle::Turns);
        WindowConfig cfg;
        cfg.min_turns = 1 + rng.bounded(4);
        cfg.max_turns = cfg.min_turns + rng.bounded(5);
        cfg.max_segments_per_conversation = rng.bounded(5);
        const auto segs = sample_windows(c, cfg, rng);
        ASSERT_LE(segs.size(), cfg.max_segments_per_conversation);
        const std::size_t n = c.turns.size();
        if (n < cfg.min_turns) {
            ASSERT_TRUE(segs.empty());
        }
        for (const auto& s : segs) {
            ASSERT_GE(s.size(), cfg.min_turns);
            ASSERT_LE(s.size(), std::min(cfg.max_turns, n));
            ASSERT_LE(s.end_turn, n);
            ASSERT_EQ(*s.labels, brute_or(c, s.start_turn, s.end_turn));
        }
    }
}

TEST(BatchAugmentation, ProbabilityZeroAndOne) {
    std::vector<Conversation> batch{n_turns(10), n_turns(10), n_turns(10)};
    Pcg32 rng(5, 5);
    WindowConfig never;
    never.batch_probability = 0.0;
    WindowConfig always;
    always.batch_probability = 1.0;
    for (int i = 0; i < 100; ++i) {
        EXPECT_TRUE(plan_batch_augmentation(batch, never, rng).empty());
        const auto segs = plan_batch_augmentation(batch, always, rng);
        EXPECT_LE(segs.size(), 6u);
        EXPECT_GE(segs.size(), 3u);
    }
}

TEST(BatchAugmentation, HalfTheBatchesWithinBinomialBound) {
    std::vector<Conversation> batch{n_turns(6), n_turns(8)};
    Pcg32 rng(2024, 17);
    int augmented = 0;
    for (int i = 0; i < 1000; ++i) augmented += !plan_batch_augmentation(batch, WindowConfig{}, rng).empty();
    // 3 sigma for Binomial(1000, 0.5) is about 47.
    EXPECT_GE(augmented, 460);
    EXPECT_LE(augmented, 540);
}

TEST(ContextBudget, FitsInOneSegment) {
    const auto c = n_turns(3);
    const auto segs = split_to_context_budget(c, 100, TokenCounter::whitespace(), "[SEP]");
    ASSERT_EQ(segs.size(), 1u);
    EXPECT_EQ(segs[0].start_turn, 0u);
    EXPECT_EQ(segs[0].end_turn, 3u);
    EXPECT_FALSE(segs[0].over_budget);
}

TEST(ContextBudget, HandCountedPacking) {
    // 3 + 1 (separator) + 3 = 7 fits; a third turn would make 11.
    const auto c = n_turns(4, 3);
    const auto segs = split_to_context_budget(c, 7, TokenCounter::whitespace(), "[SEP]");
    ASSERT_EQ(segs.size(), 2u);
    EXPECT_EQ(segs[0].range().begin, 0u);
    EXPECT_EQ(segs[0].range().end, 2u);
    EXPECT_EQ(segs[1].range().begin, 2u);
    EXPECT_EQ(segs[1].range().end, 4u);
}

TEST(ContextBudget, OverBudgetTurnFlagged) {
    const auto c = n_turns(1, 100);
    const auto segs = split_to_context_budget(c, 10, TokenCounter::whitespace(), "[SEP]");
    ASSERT_EQ(segs.size(), 1u);
    EXPECT_TRUE(segs[0].over_budget);
}

TEST(ContextBudget, PartitionsEveryInput) {
    Pcg32 rng(8, 8);
    const auto counter = TokenCounter::whitespace();
    for (int trial = 0; trial < 2000; ++trial) {
        const auto c = gen::random_conversation(rng, 2, trial, 12, gen::LabelStyle::Turns);
        const std::size_t budget = 1 + rng.bounded(30);
        const auto segs = split_to_context_budget(c, budget, counter, "[SEP]");
        std::size_t expect_start = 0;
        for (const auto& s : segs) {
            ASSERT_EQ(s.start_turn, expect_start);
            ASSERT_LT(s.start_turn, s.end_turn);
            expect_start = s.end_turn;
            const auto tokens = counter.count(render_model_input(c, s.range(), "[SEP]"));
            if (s.over_budget) {
                ASSERT_EQ(s.size(), 1u);
                ASSERT_GT(tokens, budget);
            } else {
                ASSERT_LE(tokens, budget);
            }
            ASSERT_EQ(*s.labels, brute_or(c, s.start_turn, s.end_turn));
        }
        ASSERT_EQ(expect_start, c.turns.size());
    }
}
