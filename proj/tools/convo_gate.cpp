// convo-gate command line: corpus tooling, teacher labeling and generation,
// baseline training, evaluation and the filtering gateway.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <pthread.h>
#include <thread>

#include "CLI11.hpp"
#include "convo_gate.hpp"

using namespace convo_gate;
namespace fs = std::filesystem;

namespace {

RunConfig load_config(const std::string& path) { return path.empty() ? RunConfig{} : RunConfig::load(path); }

std::unique_ptr<TeacherClient> make_teacher(const RunConfig& cfg, bool mock) {
    if (mock) return std::make_unique<MockTeacher>();
    TeacherConfig tc = cfg.teacher;
    if (tc.endpoint.empty()) {
        throw Error(ErrorKind::InvalidArgument, "no [teacher] endpoint configured; pass --mock-teacher for the keyword teacher");
    }
    tc.load_key_from_env();
    return std::make_unique<HttpTeacher>(tc);
}

TokenCounter pick_counter(const std::string& name, const Classifier* model) {
    if (parse_counter_kind(name) == CounterKind::Whitespace) return TokenCounter::whitespace();
    if (!model || model->kind() != BackendKind::External) {
        throw Error(ErrorKind::Backend, "the external-tokenizer counter needs an external model bundle");
    }
    return model->native_counter();
}

std::vector<Conversation> read_all(const std::vector<std::string>& paths, const IntentSchema& schema) {
    std::vector<Conversation> out;
    for (const auto& p : paths) {
        auto part = read_corpus(p, schema);
        out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
    return out;
}

std::vector<std::string> manifest_paths(const CorpusManifest& m, DatasetRole role) {
    std::vector<std::string> out;
    for (const auto& d : m.with_role(role)) out.push_back(d.path.string());
    return out;
}

std::string labels_text(const std::optional<IntentVector>& labels, const IntentSchema& schema) {
    if (!labels) return "-";
    std::string out;
    for (std::size_t i = 0; i < labels->size(); ++i) {
        if (labels->test(i)) out += (out.empty() ? "" : ",") + schema[i].id;
    }
    return out.empty() ? "none" : out;
}

// ---------------------------------------------------------------------------

int cmd_ingest(const std::string& manifest_path, const std::string& out_dir, const std::string& schema_path,
               bool drop_blank, bool skip_malformed) {
    const auto schema = schema_path.empty() ? IntentSchema::default_schema() : load_schema(schema_path);
    const auto manifest = CorpusManifest::load(manifest_path);
    fs::create_directories(out_dir);
    std::ofstream out_manifest(fs::path(out_dir) / "manifest.ini");
    for (const auto& d : manifest.datasets) {
        ReadOptions opts;
        opts.drop_blank_turns = drop_blank;
        opts.policy = skip_malformed ? MalformedPolicy::SkipAndLog : MalformedPolicy::Abort;
        opts.on_issue = [&](const ReadIssue& issue) {
            std::cerr << d.name << ": line " << issue.line << ": " << issue.message << "\n";
        };
        const auto convs = read_corpus(d.path, schema, opts);
        for (const auto& c : convs) validate(c, schema);
        const auto target = fs::path(out_dir) / (d.name + ".jsonl");
        write_corpus(convs, target, schema);
        out_manifest << "[" << d.name << "]\npath = " << target.filename().string() << "\nrole = " << to_string(d.role)
                     << "\n";
        if (!d.notes.empty()) out_manifest << "notes = " << d.notes << "\n";
        out_manifest << "\n";
        std::cout << d.name << "\t" << to_string(d.role) << "\t" << convs.size() << " conversations -> " << target.string()
                  << "\n";
    }
    std::ofstream(fs::path(out_dir) / "schema.json") << schema_to_json(schema).dump(2) << "\n";
    return 0;
}

int cmd_stats(const std::string& in, const std::string& schema_path, bool as_json) {
    const auto schema = schema_path.empty() ? IntentSchema::default_schema() : load_schema(schema_path);
    ReadOptions opts;
    opts.policy = MalformedPolicy::SkipAndLog;
    opts.on_issue = [](const ReadIssue& issue) { std::cerr << "line " << issue.line << ": " << issue.message << "\n"; };
    std::vector<ReadIssue> issues;
    const auto convs = read_corpus(in, schema, opts, &issues);
    const auto stats = compute_stats(convs, schema.size());
    if (as_json) {
        Json per = Json::object();
        for (std::size_t i = 0; i < schema.size(); ++i) {
            per[schema[i].id] = {{"positive", stats.per_intent_positive[i]}, {"negative", stats.per_intent_negative[i]}};
        }
        std::cout << Json{{"total", stats.total}, {"total_tokens", stats.total_tokens}, {"skipped_lines", issues.size()},
                          {"intents", per}}
                         .dump(2)
                  << "\n";
        return 0;
    }
    std::printf("conversations  %zu\ntokens         %zu\nskipped lines  %zu\n", stats.total, stats.total_tokens,
                issues.size());
    for (std::size_t i = 0; i < schema.size(); ++i) {
        const double rate = stats.total ? 100.0 * stats.per_intent_positive[i] / stats.total : 0.0;
        std::printf("%-22s positive %6zu  negative %6zu  (%.1f%% positive)\n", schema[i].id.c_str(),
                    stats.per_intent_positive[i], stats.per_intent_negative[i], rate);
    }
    return 0;
}

int cmd_augment_preview(const std::string& in, const std::string& config, std::uint64_t seed, std::size_t limit) {
    const auto cfg = load_config(config);
    const auto schema = cfg.schema();
    const auto convs = read_corpus(in, schema);
    Pcg32 rng(seed, cfg.window.seed);
    std::size_t shown = 0;
    for (const auto& conv : convs) {
        if (shown++ >= limit) break;
        if (!conv.fully_turn_labeled()) {
            std::cout << conv.id << ": skipped (turns are not all labeled)\n";
            continue;
        }
        const auto segs = sample_windows(conv, cfg.window, rng);
        std::cout << conv.id << " (" << conv.turns.size() << " turns, " << segs.size() << " segments)\n";
        for (const auto& s : segs) {
            std::cout << "  turns [" << s.start_turn << ", " << s.end_turn << ")  labels "
                      << labels_text(s.labels, schema) << "\n    " << render_model_input(conv, s.range()) << "\n";
        }
    }
    return 0;
}

int cmd_label(const std::string& in, const std::string& out, const std::string& config, bool mock) {
    const auto cfg = load_config(config);
    const auto schema = cfg.schema();
    auto teacher = make_teacher(cfg, mock);
    ReadOptions opts;
    opts.drop_blank_turns = true;
    const auto convs = read_corpus(in, schema, opts);
    LabelOptions lo;
    lo.max_in_flight = cfg.teacher.max_in_flight;
    lo.temperature = cfg.teacher.temperature;
    lo.templates = cfg.prompts();
    const auto labeled = label_corpus(convs, schema, *teacher, lo);
    write_corpus(labeled, out, schema);
    const auto stats = compute_stats(labeled, schema.size());
    std::cout << "labeled " << labeled.size() << " conversations -> " << out << "\n";
    for (std::size_t i = 0; i < schema.size(); ++i) {
        std::cout << "  " << schema[i].id << ": " << stats.per_intent_positive[i] << " positive\n";
    }
    return 0;
}

int cmd_generate(const std::string& seeds_path, const std::string& intent, std::size_t personas, std::size_t count,
                 const std::string& topic, const std::string& out, const std::string& config, bool mock,
                 const std::string& dataset) {
    const auto cfg = load_config(config);
    const auto schema = cfg.schema();
    auto teacher = make_teacher(cfg, mock);
    GenerateOptions go;
    go.templates = cfg.prompts();
    go.source_dataset = dataset;
    std::vector<Conversation> convs;
    if (!seeds_path.empty()) {
        const auto idx = schema.index_of(intent);
        if (!idx) throw Error(ErrorKind::InvalidArgument, "unknown intent '" + intent + "'");
        std::ifstream in(seeds_path);
        if (!in) throw Error(ErrorKind::Io, "cannot open seed file " + seeds_path);
        std::vector<std::string> seeds;
        for (std::string line; std::getline(in, line);) {
            if (!is_blank(line)) seeds.push_back(line);
        }
        go.id_prefix = dataset + "-seed";
        convs = generate_from_seeds(seeds, schema[*idx], *teacher, go);
    } else {
        const std::optional<std::string> hint = topic.empty() ? std::nullopt : std::optional<std::string>(topic);
        for (std::size_t i = 0; i < count; ++i) {
            convs.push_back(generate_persona_conversation(personas, hint, *teacher, go,
                                                          dataset + "-persona-" + std::to_string(i)));
        }
    }
    write_corpus(convs, out, schema);
    std::cout << "generated " << convs.size() << " conversations -> " << out << "\n";
    return 0;
}

int cmd_train(const std::vector<std::string>& train_files, const std::vector<std::string>& val_files,
              const std::string& manifest, const std::string& out, const std::string& config, const std::string& log_path,
              std::optional<std::uint64_t> seed) {
    const auto cfg = load_config(config);
    const auto schema = cfg.schema();
    std::vector<std::string> train_paths = train_files, val_paths = val_files;
    if (!manifest.empty()) {
        const auto m = CorpusManifest::load(manifest);
        if (train_paths.empty()) train_paths = manifest_paths(m, DatasetRole::Train);
        if (val_paths.empty()) val_paths = manifest_paths(m, DatasetRole::Validation);
    }
    if (train_paths.empty() || val_paths.empty()) {
        throw Error(ErrorKind::InvalidArgument, "training needs train and validation data (--train/--val or --manifest)");
    }
    const auto train = read_all(train_paths, schema);
    const auto val = read_all(val_paths, schema);
    TrainConfig tc = cfg.train;
    if (seed) tc.seed = *seed;
    if (tc.trained_on.empty()) tc.trained_on = fs::path(train_paths.front()).stem().string();
    const auto result = train_baseline(train, val, schema, tc);
    save_baseline(result.model, out);
    if (!log_path.empty()) std::ofstream(log_path) << to_json(result.log, schema).dump(2) << "\n";
    std::cout << "trained on " << train.size() << " conversations, " << result.log.steps.size() << " steps\n";
    for (const auto& snap : result.log.snapshots) {
        std::printf("  step %6zu  mean F1 %.4f%s\n", snap.step, snap.mean_f1,
                    snap.step == result.log.best_step ? "  <- best" : "");
    }
    std::cout << "model -> " << out << "\n";
    return 0;
}

int cmd_eval(const std::string& manifest_path, const std::string& model_path, const std::string& predicates,
             const std::string& counter_name, const std::string& schema_path, const std::string& out,
             std::size_t context_budget, bool all_roles) {
    const auto schema = schema_path.empty() ? IntentSchema::default_schema() : load_schema(schema_path);
    const auto model = load_model(model_path, schema);
    const auto counter = pick_counter(counter_name, model.get());
    const auto preds = Predicate::parse_list(predicates, schema);
    const auto manifest = CorpusManifest::load(manifest_path);
    std::vector<NamedDataset> datasets;
    ReadOptions opts;
    opts.policy = MalformedPolicy::SkipAndLog;
    opts.on_issue = [](const ReadIssue& issue) { std::cerr << "line " << issue.line << ": " << issue.message << "\n"; };
    for (const auto& d : manifest.datasets) {
        if (!all_roles && d.role != DatasetRole::Test) continue;
        datasets.push_back({d.name, read_corpus(d.path, schema, opts)});
    }
    ScoringOptions scoring;
    scoring.context_budget = context_budget;
    const auto reports = build_report(std::move(datasets), *model, preds, counter, scoring);
    std::cout << render_report_table(reports);
    if (!out.empty()) write_report_jsonl(reports, out);
    return 0;
}

int cmd_filter(const std::string& in, const std::string& model_path, const std::string& predicate,
               const std::string& out, const std::string& config, const std::string& decisions_path,
               const std::string& counter_name) {
    const auto cfg = load_config(config);
    const auto schema = cfg.schema();
    std::shared_ptr<const Classifier> model = load_model(model_path.empty() ? cfg.gateway.model_path : fs::path(model_path), schema);
    GatewayConfig gc = cfg.gateway;
    if (!predicate.empty()) gc.predicate = predicate;
    gc.downstream_url.clear();
    Gateway gateway(model, gc, pick_counter(counter_name, model.get()));
    ReadOptions opts;
    opts.drop_blank_turns = true;
    CorpusReader reader(in, schema, opts);
    CorpusWriter writer(out, schema);
    std::ofstream decisions;
    if (!decisions_path.empty()) decisions.open(decisions_path, std::ios::trunc);
    while (auto conv = reader.next()) {
        if (conv->turns.empty()) continue;
        const auto d = gateway.classify_snippet(*conv);
        if (d.decision == Verdict::Forward) writer.write(*conv);
        if (decisions) decisions << to_json(d, schema).dump() << "\n";
    }
    writer.close();
    const auto s = gateway.stats();
    std::cout << to_json(s, schema).dump(2) << "\n";
    return 0;
}

int cmd_serve(const std::string& config, const std::string& listen, const std::string& model_override) {
    const auto cfg = load_config(config);
    const auto schema = cfg.schema();
    GatewayConfig gc = cfg.gateway;
    if (!model_override.empty()) gc.model_path = model_override;
    if (!listen.empty()) RunConfig::parse_listen(listen, gc.listen_host, gc.listen_port);
    if (gc.model_path.empty()) throw Error(ErrorKind::InvalidArgument, "no [gateway] model configured");
    std::shared_ptr<const Classifier> model = load_model(gc.model_path, schema);
    const auto counter =
        gc.counter == CounterKind::Whitespace ? TokenCounter::whitespace() : pick_counter("external", model.get());

    // Signals are taken synchronously by a waiter thread, which stops the server.
    sigset_t stop_signals;
    sigemptyset(&stop_signals);
    sigaddset(&stop_signals, SIGINT);
    sigaddset(&stop_signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);

    Gateway gateway(model, gc, counter);
    GatewayServer server(gateway);
    const int port = server.bind(gc.listen_host, gc.listen_port);
    std::cout << "listening on " << gc.listen_host << ":" << port << " (predicate " << gateway.predicate().name()
              << ")" << std::endl;
    std::thread waiter([&] {
        int sig = 0;
        sigwait(&stop_signals, &sig);
        server.stop();
    });
    server.listen_after_bind();
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
    std::cout << to_json(gateway.stats(), schema).dump(2) << std::endl;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"convo-gate: distil conversational intents into a small filter and gate snippets with it"};
    app.require_subcommand(1);

    std::string manifest, out, schema, in, config, model, predicate, log_path, decisions, listen;
    std::string counter = "whitespace";
    bool drop_blank = false, skip_malformed = false, as_json = false, mock = false, all_roles = false;

    auto* ingest = app.add_subcommand("ingest", "Validate and normalise the datasets of a manifest");
    ingest->add_option("--manifest", manifest, "Dataset manifest (INI)")->required();
    ingest->add_option("--out", out, "Output directory")->required();
    ingest->add_option("--schema", schema, "Intent schema JSON");
    ingest->add_flag("--drop-blank", drop_blank, "Drop whitespace-only turns");
    ingest->add_flag("--skip-malformed", skip_malformed, "Skip malformed lines instead of aborting");

    auto* stats = app.add_subcommand("stats", "Per-intent label counts and token totals");
    stats->add_option("--in", in, "Corpus file")->required();
    stats->add_option("--schema", schema, "Intent schema JSON");
    stats->add_flag("--json", as_json, "Print JSON");

    std::uint64_t seed = 0;
    std::size_t limit = 20;
    auto* preview = app.add_subcommand("augment-preview", "Print rolling-window segments sampled from a corpus");
    preview->add_option("--in", in, "Corpus file")->required();
    preview->add_option("--config", config, "Run configuration (INI)");
    preview->add_option("--seed", seed, "Sampler seed");
    preview->add_option("--limit", limit, "Conversations to show");

    auto* label = app.add_subcommand("label", "Label every turn with the teacher");
    label->add_option("--in", in, "Unlabeled corpus")->required();
    label->add_option("--out", out, "Labeled corpus")->required();
    label->add_option("--config", config, "Run configuration (INI)");
    label->add_flag("--mock-teacher", mock, "Use the offline keyword teacher");

    std::string seeds, intent = "action-triggering", topic, dataset = "synthetic";
    std::size_t personas = 0, count = 1;
    auto* generate = app.add_subcommand("generate", "Generate synthetic conversations with the teacher");
    auto* seeds_opt = generate->add_option("--seeds", seeds, "File with one seed query per line");
    generate->add_option("--intent", intent, "Target intent for seed-conditioned generation");
    auto* personas_opt = generate->add_option("--personas", personas, "Speakers per persona conversation (>= 2)");
    seeds_opt->excludes(personas_opt);
    generate->add_option("--count", count, "Persona conversations to generate");
    generate->add_option("--topic", topic, "Topic hint for persona conversations");
    generate->add_option("--dataset", dataset, "source_dataset value and id prefix");
    generate->add_option("--out", out, "Output corpus")->required();
    generate->add_option("--config", config, "Run configuration (INI)");
    generate->add_flag("--mock-teacher", mock, "Use the offline template teacher");

    std::vector<std::string> train_files, val_files;
    std::optional<std::uint64_t> train_seed;
    auto* train = app.add_subcommand("train", "Train the baseline classifier");
    train->add_option("--train", train_files, "Training corpus files");
    train->add_option("--val", val_files, "Validation corpus files");
    train->add_option("--manifest", manifest, "Manifest; train/validation roles fill missing --train/--val");
    train->add_option("--out", out, "Model file")->required();
    train->add_option("--config", config, "Run configuration (INI)");
    train->add_option("--log", log_path, "Write the training log as JSON");
    train->add_option("--seed", train_seed, "Override the training seed");

    std::string predicates = "action-triggering,information-seeking,any";
    std::size_t context_budget = 0;
    auto* eval = app.add_subcommand("eval", "Per-intent metrics and token reduction on test datasets");
    eval->add_option("--manifest", manifest, "Dataset manifest (test role is evaluated)")->required();
    eval->add_option("--model", model, "Baseline file or external bundle directory")->required();
    eval->add_option("--predicates", predicates, "Comma-separated intents and/or any");
    eval->add_option("--counter", counter, "whitespace or external-tokenizer");
    eval->add_option("--schema", schema, "Intent schema JSON");
    eval->add_option("--out", out, "Write the report as JSON lines");
    eval->add_option("--context-budget", context_budget, "Split conversations to this many tokens (0 = off)");
    eval->add_flag("--all-roles", all_roles, "Evaluate every dataset, not only the test role");

    auto* filter = app.add_subcommand("filter", "Batch-filter a corpus like the gateway would");
    filter->add_option("--in", in, "Snippet corpus")->required();
    filter->add_option("--model", model, "Baseline file or external bundle directory");
    filter->add_option("--predicate", predicate, "Intent id or any");
    filter->add_option("--out", out, "Forwarded snippets")->required();
    filter->add_option("--config", config, "Run configuration (INI)");
    filter->add_option("--decisions", decisions, "Write one decision per snippet (JSON lines)");
    filter->add_option("--counter", counter, "whitespace or external-tokenizer");

    auto* serve = app.add_subcommand("serve", "Run the filtering gateway");
    serve->add_option("--config", config, "Run configuration (INI)")->required();
    serve->add_option("--listen", listen, "host:port, overrides the config");
    serve->add_option("--model", model, "Model, overrides the config");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ingest) return cmd_ingest(manifest, out, schema, drop_blank, skip_malformed);
        if (*stats) return cmd_stats(in, schema, as_json);
        if (*preview) return cmd_augment_preview(in, config, seed, limit);
        if (*label) return cmd_label(in, out, config, mock);
        if (*generate) {
            if (seeds.empty() && personas == 0) throw Error(ErrorKind::InvalidArgument, "pass --seeds or --personas");
            return cmd_generate(seeds, intent, personas, count, topic, out, config, mock, dataset);
        }
        if (*train) return cmd_train(train_files, val_files, manifest, out, config, log_path, train_seed);
        if (*eval) return cmd_eval(manifest, model, predicates, counter, schema, out, context_budget, all_roles);
        if (*filter) return cmd_filter(in, model, predicate, out, config, decisions, counter);
        if (*serve) return cmd_serve(config, listen, model);
    } catch (const Error& e) {
        std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
        if (!e.context().empty() && e.context().size() < 2000) std::cerr << "  context: " << e.context() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
