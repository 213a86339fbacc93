#include <gtest/gtest.h>

#include "convo_gate.hpp"
#include "support/random_corpus.hpp"

using namespace convo_gate;

namespace {

IntentVector bits(std::vector<int> v) { return IntentVector::binary(std::move(v)); }

/// Conversations whose whitespace token counts are exactly `tokens`.
std::vector<Conversation> sized(const std::vector<std::size_t>& tokens, const std::vector<std::vector<int>>& labels) {
    std::vector<Conversation> out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        Conversation c;
        c.id = "c" + std::to_string(i);
        std::string text;
        for (std::size_t t = 0; t < tokens[i]; ++t) text += "tok ";
        c.turns = {{"s", text, {}}};
        c.labels = bits(labels[i]);
        out.push_back(std::move(c));
    }
    return out;
}

/// Fixed-score classifier keyed by input text, for report tests.
class TableModel final : public Classifier {
public:
    TableModel(IntentSchema schema, std::map<std::string, std::vector<double>> table)
        : schema_(std::move(schema)), table_(std::move(table)) {
        thresholds_.assign(schema_.size(), 0.5);
    }
    BackendKind kind() const noexcept override { return BackendKind::Baseline; }
    const IntentSchema& schema() const noexcept override { return schema_; }
    IntentVector predict(std::string_view text) const override {
        auto it = table_.find(std::string(text));
        return IntentVector::scores(it == table_.end() ? std::vector<double>(schema_.size(), 0.0) : it->second);
    }

private:
    IntentSchema schema_;
    std::map<std::string, std::vector<double>> table_;
};

}  // namespace

TEST(Prf1, HandCase) {
    const auto m = prf1(Confusion{2, 1, 1, 0});
    EXPECT_NEAR(m.precision, 0.6667, 1e-4);
    EXPECT_NEAR(m.recall, 0.6667, 1e-4);
    EXPECT_NEAR(m.f1, 0.6667, 1e-4);
    EXPECT_FALSE(m.degenerate);
}

TEST(Prf1, PerfectAndDegenerate) {
    const auto p = prf1(Confusion{5, 0, 0, 3});
    EXPECT_DOUBLE_EQ(p.precision, 1.0);
    EXPECT_DOUBLE_EQ(p.recall, 1.0);
    EXPECT_DOUBLE_EQ(p.f1, 1.0);
    const auto d = prf1(Confusion{0, 0, 0, 4});
    EXPECT_DOUBLE_EQ(d.precision, 0.0);
    EXPECT_DOUBLE_EQ(d.recall, 0.0);
    EXPECT_DOUBLE_EQ(d.f1, 0.0);
    EXPECT_TRUE(d.degenerate);
}

TEST(Prf1, MatchesBruteForceRecount) {
    Pcg32 rng(31, 4);
    for (int trial = 0; trial < 2000; ++trial) {
        const std::size_t k = 1 + rng.bounded(3);
        const std::size_t n = rng.bounded(40);
        ConfusionCounts counts(k);
        std::vector<IntentVector> refs, preds;
        for (std::size_t i = 0; i < n; ++i) {
            refs.push_back(gen::random_bits(rng, k, 0.4));
            preds.push_back(gen::random_bits(rng, k, 0.4));
            counts.add(refs.back(), preds.back());
        }
        for (std::size_t j = 0; j < k; ++j) {
            double tp = 0, fp = 0, fn = 0;
            for (std::size_t i = 0; i < n; ++i) {
                tp += refs[i].test(j) && preds[i].test(j);
                fp += !refs[i].test(j) && preds[i].test(j);
                fn += refs[i].test(j) && !preds[i].test(j);
            }
            const double p = tp + fp > 0 ? tp / (tp + fp) : 0.0;
            const double r = tp + fn > 0 ? tp / (tp + fn) : 0.0;
            const double f = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
            const auto m = prf1(counts, j);
            ASSERT_DOUBLE_EQ(m.precision, p);
            ASSERT_DOUBLE_EQ(m.recall, r);
            ASSERT_DOUBLE_EQ(m.f1, f);
            ASSERT_EQ(counts.per_intent[j].total(), n);
        }
    }
}

TEST(Reduction, HandSums) {
    const auto convs = sized({10, 20, 30}, {{0, 0}, {1, 0}, {0, 0}});
    const auto action = Predicate::intent(0, "action-triggering");
    EXPECT_NEAR(expected_reduction(convs, action), 100.0 * (1.0 - 20.0 / 60.0), 1e-12);
    EXPECT_NEAR(expected_reduction(convs, action), 66.67, 5e-3);
    const std::vector<IntentVector> preds{bits({1, 0}), bits({0, 0}), bits({1, 0})};
    EXPECT_NEAR(actual_reduction(convs, preds, action), 33.33, 5e-3);
}

TEST(Reduction, AllOrNothing) {
    const auto all = sized({3, 4}, {{1, 0}, {1, 1}});
    const auto none = sized({3, 4}, {{0, 0}, {0, 1}});
    const auto action = Predicate::intent(0, "a");
    EXPECT_DOUBLE_EQ(expected_reduction(all, action), 0.0);
    EXPECT_DOUBLE_EQ(expected_reduction(none, action), 100.0);
    const std::vector<IntentVector> yes{bits({1, 1}), bits({1, 1})};
    EXPECT_DOUBLE_EQ(actual_reduction(none, yes, action), 0.0);
}

TEST(Reduction, ErrorsForEmptyTotalsAndMissingPredictions) {
    try {
        expected_reduction({}, Predicate::any());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::UndefinedReport);
    }
    const auto convs = sized({3, 4}, {{1, 0}, {0, 0}});
    const std::vector<IntentVector> one{bits({1, 0})};
    try {
        actual_reduction(convs, one, Predicate::any());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Coverage);
    }
}

TEST(Reduction, OracleIdentityAndAnyDominance) {
    Pcg32 rng(12, 12);
    const auto counter = TokenCounter::whitespace();
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<Conversation> convs;
        const auto n = 1 + rng.bounded(30);
        for (std::uint32_t i = 0; i < n; ++i) {
            convs.push_back(gen::random_conversation(rng, 2, i, 5, gen::LabelStyle::Turns));
        }
        std::vector<IntentVector> oracle;
        for (const auto& c : convs) oracle.push_back(conversation_labels(c));
        const auto tokens = token_counts(convs, counter);
        const std::vector<Predicate> preds{Predicate::intent(0, "a"), Predicate::intent(1, "i"), Predicate::any()};
        for (const auto& p : preds) {
            ASSERT_NEAR(actual_reduction(convs, oracle, p), expected_reduction(convs, p), 1e-9);
            const auto t = tally_tokens(tokens, oracle, p);
            std::size_t negative = 0;
            for (std::size_t i = 0; i < convs.size(); ++i) negative += p.satisfied(oracle[i]) ? 0 : tokens[i];
            ASSERT_EQ(t.selected_tokens + negative, t.total_tokens);
        }
        const double any = expected_reduction(convs, Predicate::any());
        ASSERT_LE(any, expected_reduction(convs, preds[0]) + 1e-12);
        ASSERT_LE(any, expected_reduction(convs, preds[1]) + 1e-12);
    }
}

TEST(Predicates, ParseList) {
    const auto schema = IntentSchema::default_schema();
    const auto list = Predicate::parse_list("action-triggering, information-seeking,any", schema);
    ASSERT_EQ(list.size(), 3u);
    EXPECT_EQ(list[0].index(), 0u);
    EXPECT_EQ(list[1].index(), 1u);
    EXPECT_TRUE(list[2].is_any());
    EXPECT_THROW(Predicate::parse("complaint", schema), Error);
}

TEST(Decide, ThresholdRule) {
    const std::vector<double> half{0.5, 0.5};
    EXPECT_EQ(decide(IntentVector::scores({0.7, 0.2}), half), bits({1, 0}));
    EXPECT_EQ(decide(IntentVector::scores({0.5, 0.49}), half), bits({1, 0}));
    const std::vector<double> skew{0.9, 0.1};
    EXPECT_EQ(decide(IntentVector::scores({0.7, 0.2}), skew), bits({0, 1}));
}

TEST(Report, EmptyDatasetList) {
    TableModel model(IntentSchema::default_schema(), {});
    EXPECT_TRUE(build_report({}, model, {Predicate::any()}, TokenCounter::whitespace()).empty());
}

TEST(Report, OracleRowsAndTableLayout) {
    const auto schema = IntentSchema::default_schema();
    auto convs = sized({2, 3, 4}, {{1, 0}, {0, 1}, {0, 0}});
    std::map<std::string, std::vector<double>> table;
    const std::vector<std::vector<double>> scores{{0.9, 0.1}, {0.2, 0.8}, {0.1, 0.1}};
    for (std::size_t i = 0; i < convs.size(); ++i) table[render_model_input(convs[i])] = scores[i];
    TableModel model(schema, table);
    const auto preds = Predicate::parse_list("action-triggering,information-seeking,any", schema);
    const auto reports = build_report({{"zeta", convs}, {"alpha", convs}}, model, preds, TokenCounter::whitespace());
    ASSERT_EQ(reports.size(), 2u);
    EXPECT_EQ(reports[0].dataset, "alpha");
    EXPECT_EQ(reports[0].reduction.predicates.size(), 3u);
    for (const auto& p : reports[0].reduction.predicates) {
        EXPECT_DOUBLE_EQ(p.actual_reduction_pct, p.expected_reduction_pct);
        EXPECT_LE(p.reference_tokens, reports[0].reduction.total_tokens);
    }
    EXPECT_DOUBLE_EQ(reports[0].metrics[0].f1, 1.0);
    const auto table_text = render_report_table(reports);
    EXPECT_NE(table_text.find("any"), std::string::npos);
    EXPECT_NE(table_text.find("alpha"), std::string::npos);
    const auto j = report_to_json(reports[1]);
    EXPECT_EQ(j["dataset"], "zeta");
    EXPECT_TRUE(j["reduction"].contains("any"));
}
