#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "convo_gate.hpp"
#include "support/random_corpus.hpp"

using namespace convo_gate;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("cg_corpus_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                            "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

void write_text(const fs::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary);
    out << s;
}

Conversation with_conv_labels(std::string id, std::vector<int> l) {
    Conversation c;
    c.id = std::move(id);
    c.turns = {{"a", "x", {}}};
    c.labels = IntentVector::binary(std::move(l));
    return c;
}

}  // namespace

TEST(CorpusIo, RoundTripRandomConversations) {
    TempDir dir;
    const auto schema = IntentSchema::default_schema();
    Pcg32 rng(5, 5);
    std::vector<Conversation> convs;
    for (std::size_t i = 0; i < 100; ++i) convs.push_back(gen::random_conversation(rng, 2, i));
    const auto path = dir.path / "c.jsonl";
    EXPECT_EQ(write_corpus(convs, path, schema), 100u);
    EXPECT_EQ(read_corpus(path, schema), convs);
}

TEST(CorpusIo, EmptyStreamWritesEmptyFile) {
    TempDir dir;
    const auto path = dir.path / "empty.jsonl";
    EXPECT_EQ(write_corpus({}, path, IntentSchema::default_schema()), 0u);
    EXPECT_TRUE(fs::exists(path));
    EXPECT_EQ(fs::file_size(path), 0u);
    EXPECT_TRUE(read_corpus(path, IntentSchema::default_schema()).empty());
}

TEST(CorpusIo, UnicodeRoundTripsByteIdentically) {
    TempDir dir;
    const auto schema = IntentSchema::default_schema();
    Conversation c;
    c.id = "u1";
    c.source_dataset = "\xe6\x97\xa5\xe6\x9c\xac";
    c.turns = {{"Zo\xc3\xab", "caf\xc3\xa9 \xf0\x9f\x98\x80 \xd8\xb3\xd9\x84\xd8\xa7\xd9\x85", {}}};
    const auto path = dir.path / "u.jsonl";
    write_corpus(std::vector{c}, path, schema);
    const auto back = read_corpus(path, schema);
    ASSERT_EQ(back.size(), 1u);
    EXPECT_EQ(back[0].turns[0].text, c.turns[0].text);
    EXPECT_EQ(back[0].source_dataset, c.source_dataset);
    EXPECT_EQ(to_line(back[0], schema), to_line(c, schema));
}

TEST(CorpusIo, InvalidUtf8IsRejectedOnWrite) {
    Conversation c;
    c.id = "bad";
    c.turns = {{"", "\xff\xfe", {}}};
    EXPECT_THROW(to_line(c, IntentSchema::default_schema()), Error);
}

TEST(CorpusIo, ThreeValidLinesInOrder) {
    TempDir dir;
    const auto path = dir.path / "three.jsonl";
    write_text(path,
               R"({"id":"a","source_dataset":"d","turns":[{"speaker":"x","text":"one"}]})"
               "\n"
               R"({"id":"b","source_dataset":"d","turns":[{"speaker":"x","text":"two"}]})"
               "\n"
               R"({"id":"c","source_dataset":"d","turns":[{"speaker":"x","text":"three"}]})"
               "\n");
    const auto convs = read_corpus(path, IntentSchema::default_schema());
    ASSERT_EQ(convs.size(), 3u);
    EXPECT_EQ(convs[0].id, "a");
    EXPECT_EQ(convs[1].id, "b");
    EXPECT_EQ(convs[2].id, "c");
}

TEST(CorpusIo, MalformedLineSkipModeLogsLineNumber) {
    TempDir dir;
    const auto path = dir.path / "bad.jsonl";
    write_text(path,
               R"({"id":"a","turns":[{"speaker":"x","text":"one"}]})"
               "\n{not json\n"
               R"({"id":"c","turns":[{"speaker":"x","text":"three"}]})"
               "\n");
    ReadOptions opts;
    opts.policy = MalformedPolicy::SkipAndLog;
    std::size_t callbacks = 0;
    opts.on_issue = [&](const ReadIssue&) { ++callbacks; };
    std::vector<ReadIssue> issues;
    const auto convs = read_corpus(path, IntentSchema::default_schema(), opts, &issues);
    EXPECT_EQ(convs.size(), 2u);
    ASSERT_EQ(issues.size(), 1u);
    EXPECT_EQ(issues[0].line, 2u);
    EXPECT_EQ(callbacks, 1u);
}

TEST(CorpusIo, MalformedLineAbortModeThrowsParseError) {
    TempDir dir;
    const auto path = dir.path / "bad.jsonl";
    write_text(path, "{\"id\":\"a\",\"turns\":[{\"text\":\"one\"}]}\n[1,2]\n");
    try {
        read_corpus(path, IntentSchema::default_schema());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Parse);
        EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos);
    }
}

TEST(CorpusIo, LabelDomainAndSchemaChecks) {
    const auto schema = IntentSchema::default_schema();
    auto kind = [&](const std::string& line) {
        try {
            conversation_from_line(line, schema);
        } catch (const Error& e) {
            return e.kind();
        }
        return ErrorKind::InvalidArgument;
    };
    EXPECT_EQ(kind(R"({"id":"a","turns":[{"text":"x"}],"labels":{"action-triggering":2,"information-seeking":0}})"),
              ErrorKind::Domain);
    EXPECT_EQ(kind(R"({"id":"a","turns":[{"text":"x"}],"labels":{"action-triggering":1}})"), ErrorKind::SchemaMismatch);
    EXPECT_EQ(kind(R"({"id":"a","turns":[{"text":"x"}],"labels":{"action-triggering":1,"bogus":0}})"),
              ErrorKind::SchemaMismatch);
    EXPECT_EQ(kind(R"({"turns":[{"text":"x"}]})"), ErrorKind::Parse);
}

TEST(CorpusIo, BlankTurnsDroppedAtIngestWhenAsked) {
    TempDir dir;
    const auto path = dir.path / "blank.jsonl";
    write_text(path, R"({"id":"a","turns":[{"text":"x"},{"text":"  "},{"text":"y"}]})" "\n");
    EXPECT_THROW(read_corpus(path, IntentSchema::default_schema()), Error);
    ReadOptions opts;
    opts.drop_blank_turns = true;
    CorpusReader reader(path, IntentSchema::default_schema(), opts);
    const auto c = reader.next();
    ASSERT_TRUE(c);
    EXPECT_EQ(c->turns.size(), 2u);
    EXPECT_EQ(reader.dropped_turns(), 1u);
}

TEST(CorpusIo, MissingFileIsIoError) {
    try {
        read_corpus("/nonexistent/dir/x.jsonl", IntentSchema::default_schema());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Io);
    }
}

TEST(Manifest, LoadsSectionsAndResolvesPaths) {
    TempDir dir;
    write_text(dir.path / "a.jsonl", "");
    write_text(dir.path / "b.jsonl", "");
    write_text(dir.path / "m.ini", "[ami]\npath = a.jsonl\nrole = test\nnotes = 1 min chunks\n\n[syn]\npath = b.jsonl\nrole = train\n");
    const auto m = CorpusManifest::load(dir.path / "m.ini");
    ASSERT_EQ(m.datasets.size(), 2u);
    EXPECT_EQ(m.datasets[0].name, "ami");
    EXPECT_EQ(m.datasets[0].role, DatasetRole::Test);
    EXPECT_EQ(m.datasets[0].notes, "1 min chunks");
    EXPECT_EQ(m.datasets[0].path, dir.path / "a.jsonl");
    EXPECT_EQ(m.with_role(DatasetRole::Train).size(), 1u);
}

TEST(Manifest, MissingPathAndDuplicateNames) {
    TempDir dir;
    write_text(dir.path / "m.ini", "[x]\npath = nothere.jsonl\n");
    try {
        CorpusManifest::load(dir.path / "m.ini");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Io);
    }
    write_text(dir.path / "a.jsonl", "");
    write_text(dir.path / "d.ini", "[x]\npath = a.jsonl\n[x]\npath = a.jsonl\n");
    EXPECT_THROW(CorpusManifest::load(dir.path / "d.ini"), Error);
    write_text(dir.path / "r.ini", "[x]\npath = a.jsonl\nrole = dev\n");
    EXPECT_THROW(CorpusManifest::load(dir.path / "r.ini"), Error);
}

TEST(Schema, JsonRoundTrip) {
    const auto s = IntentSchema::default_schema();
    const auto back = schema_from_json(schema_to_json(s));
    ASSERT_EQ(back.ids(), s.ids());
    EXPECT_EQ(back[0].definition, s[0].definition);
    EXPECT_EQ(back[1].positive_examples, s[1].positive_examples);
}

TEST(Stats, DirectCounts) {
    const std::vector<Conversation> two{with_conv_labels("a", {1, 0}), with_conv_labels("b", {0, 1})};
    const auto s = compute_stats(two, 2);
    EXPECT_EQ(s.total, 2u);
    EXPECT_EQ(s.per_intent_positive, (std::vector<std::size_t>{1, 1}));
    EXPECT_EQ(s.per_intent_negative, (std::vector<std::size_t>{1, 1}));
    EXPECT_EQ(s.total_tokens, 2u);

    const auto zero = compute_stats({}, 2);
    EXPECT_EQ(zero.total, 0u);
    EXPECT_EQ(zero.per_intent_positive, (std::vector<std::size_t>{0, 0}));

    std::vector<Conversation> four(4, with_conv_labels("c", {1, 1}));
    const auto s4 = compute_stats(four, 2);
    EXPECT_EQ(s4.per_intent_positive, (std::vector<std::size_t>{4, 4}));
    EXPECT_EQ(s4.per_intent_negative, (std::vector<std::size_t>{0, 0}));
}

TEST(Stats, UnlabeledConversationNamesId) {
    Conversation c;
    c.id = "mystery-7";
    c.turns = {{"", "x", {}}};
    try {
        compute_stats(std::vector{c}, 2);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("mystery-7"), std::string::npos);
    }
}

TEST(Stats, MatchesBruteForceRecount) {
    Pcg32 rng(77, 1);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Conversation> convs;
        const auto n = rng.bounded(60);
        for (std::uint32_t i = 0; i < n; ++i) {
            convs.push_back(gen::random_conversation(rng, 3, i, 6, gen::LabelStyle::Turns));
        }
        const auto s = compute_stats(convs, 3);
        for (std::size_t k = 0; k < 3; ++k) {
            std::size_t pos = 0;
            for (const auto& c : convs) {
                bool any = false;
                for (const auto& t : c.turns) any = any || t.labels->test(k);
                pos += any;
            }
            EXPECT_EQ(s.per_intent_positive[k], pos);
            EXPECT_EQ(s.per_intent_positive[k] + s.per_intent_negative[k], s.total);
        }
    }
}

TEST(SampleBalanced, ReachesFeasibleOptimum) {
    std::vector<Conversation> convs;
    for (int i = 0; i < 100; ++i) convs.push_back(with_conv_labels("c" + std::to_string(i), {i < 90 ? 1 : 0, 0}));
    const auto picked = sample_balanced(convs, 20, 3);
    ASSERT_EQ(picked.size(), 20u);
    std::size_t pos = 0;
    for (const auto& c : picked) pos += c.labels->test(0);
    // Only 10 negatives exist, so 10/10 is the best achievable split.
    EXPECT_EQ(pos, 10u);
}

TEST(SampleBalanced, TargetEqualToInputKeepsSet) {
    std::vector<Conversation> convs;
    for (int i = 0; i < 10; ++i) convs.push_back(with_conv_labels("c" + std::to_string(i), {i % 2, 0}));
    const auto picked = sample_balanced(convs, 10, 1);
    std::set<std::string> a, b;
    for (const auto& c : convs) a.insert(c.id);
    for (const auto& c : picked) b.insert(c.id);
    EXPECT_EQ(a, b);
}

TEST(SampleBalanced, IdenticalLabelsStillDeterministic) {
    std::vector<Conversation> convs;
    for (int i = 0; i < 30; ++i) convs.push_back(with_conv_labels("c" + std::to_string(i), {1, 1}));
    const auto a = sample_balanced(convs, 7, 9);
    const auto b = sample_balanced(convs, 7, 9);
    EXPECT_EQ(a, b);
    const auto s = compute_stats(a, 2);
    EXPECT_EQ(s.per_intent_positive[0], 7u);
}

TEST(SampleBalanced, DeterministicAndNoDuplicateIds) {
    Pcg32 rng(4, 4);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<Conversation> convs;
        for (std::size_t i = 0; i < 80; ++i) {
            auto c = gen::random_conversation(rng, 2, i % 60, 4, gen::LabelStyle::ConversationOnly);
            convs.push_back(std::move(c));
        }
        const auto target = rng.bounded(70);
        const auto a = sample_balanced(convs, target, trial);
        EXPECT_EQ(a, sample_balanced(convs, target, trial));
        std::set<std::string> ids;
        for (const auto& c : a) EXPECT_TRUE(ids.insert(c.id).second);
        EXPECT_EQ(a.size(), std::min<std::size_t>(target, 60));
    }
}
