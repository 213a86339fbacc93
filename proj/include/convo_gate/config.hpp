#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "convo_gate/augment.hpp"
#include "convo_gate/corpus.hpp"
#include "convo_gate/error.hpp"
#include "convo_gate/gateway.hpp"
#include "convo_gate/http_teacher.hpp"
#include "convo_gate/training.hpp"

namespace convo_gate {

/// Run configuration file (INI):
///
///     [run]       schema, prompts
///     [window]    min_turns, max_turns, max_segments, probability, seed
///     [train]     learning_rate, batch_size, epochs, l2, eval_every, seed,
///                 context_budget, hash_buckets, hash_seed, threshold
///     [gateway]   model, predicate, thresholds, downstream_url,
///                 downstream_timeout_ms, counter, listen, context_budget,
///                 fail_open, audit_log, worker_threads
///     [teacher]   endpoint, model, max_retries, timeout_ms, backoff_ms,
///                 temperature, max_in_flight
///
/// Every key is optional. Relative paths resolve against the file's directory.
struct RunConfig {
    std::optional<std::filesystem::path> schema_path;
    std::optional<std::filesystem::path> prompts_dir;
    WindowConfig window;
    TrainConfig train;
    GatewayConfig gateway;
    TeacherConfig teacher;

    IntentSchema schema() const { return schema_path ? load_schema(*schema_path) : IntentSchema::default_schema(); }

    PromptTemplates prompts() const {
        return prompts_dir ? PromptTemplates::load(*prompts_dir) : PromptTemplates::defaults();
    }

    static RunConfig parse(std::istream& in, const std::filesystem::path& base = {}) {
        boost::property_tree::ptree tree;
        try {
            boost::property_tree::read_ini(in, tree);
        } catch (const boost::property_tree::ini_parser_error& e) {
            throw Error(ErrorKind::Parse, std::string("run config: ") + e.what());
        }
        RunConfig cfg;
        auto resolve = [&](const std::string& p) {
            const std::filesystem::path path(p);
            return path.is_absolute() || base.empty() ? path : base / path;
        };
        auto set = [](const boost::property_tree::ptree& node, const char* key, auto& field) {
            if (node.get_child_optional(key)) field = node.get<std::remove_reference_t<decltype(field)>>(key);
        };
        auto set_ms = [](const boost::property_tree::ptree& node, const char* key, std::chrono::milliseconds& field) {
            if (node.get_child_optional(key)) field = std::chrono::milliseconds(node.get<long long>(key));
        };
        try {
            if (auto run = tree.get_child_optional("run")) {
                if (auto s = run->get_optional<std::string>("schema")) cfg.schema_path = resolve(*s);
                if (auto s = run->get_optional<std::string>("prompts")) cfg.prompts_dir = resolve(*s);
            }
            if (auto w = tree.get_child_optional("window")) {
                set(*w, "min_turns", cfg.window.min_turns);
                set(*w, "max_turns", cfg.window.max_turns);
                set(*w, "max_segments", cfg.window.max_segments_per_conversation);
                set(*w, "probability", cfg.window.batch_probability);
                set(*w, "seed", cfg.window.seed);
            }
            cfg.window.validate();
            cfg.train.window = cfg.window;
            if (auto t = tree.get_child_optional("train")) {
                auto& tc = cfg.train;
                set(*t, "learning_rate", tc.learning_rate);
                set(*t, "batch_size", tc.batch_size);
                set(*t, "epochs", tc.epochs);
                set(*t, "l2", tc.l2);
                set(*t, "eval_every", tc.eval_every);
                set(*t, "seed", tc.seed);
                set(*t, "context_budget", tc.context_budget);
                set(*t, "hash_buckets", tc.hash_buckets);
                set(*t, "hash_seed", tc.hash_seed);
                set(*t, "threshold", tc.threshold);
                set(*t, "trained_on", tc.trained_on);
            }
            cfg.train.validate();
            if (auto g = tree.get_child_optional("gateway")) {
                auto& gc = cfg.gateway;
                if (auto s = g->get_optional<std::string>("model")) gc.model_path = resolve(*s);
                set(*g, "predicate", gc.predicate);
                if (auto s = g->get_optional<std::string>("thresholds")) gc.thresholds_override = parse_doubles(*s);
                set(*g, "downstream_url", gc.downstream_url);
                set_ms(*g, "downstream_timeout_ms", gc.downstream_timeout);
                if (auto s = g->get_optional<std::string>("counter")) gc.counter = parse_counter_kind(*s);
                if (auto s = g->get_optional<std::string>("listen")) parse_listen(*s, gc.listen_host, gc.listen_port);
                set(*g, "context_budget", gc.context_budget);
                set(*g, "fail_open", gc.fail_open);
                if (auto s = g->get_optional<std::string>("audit_log")) gc.audit_log = resolve(*s);
                set(*g, "worker_threads", gc.worker_threads);
            }
            if (cfg.schema_path) cfg.gateway.schema_path = *cfg.schema_path;
            if (auto t = tree.get_child_optional("teacher")) {
                auto& tc = cfg.teacher;
                set(*t, "endpoint", tc.endpoint);
                set(*t, "model", tc.model);
                set(*t, "max_retries", tc.max_retries);
                set_ms(*t, "timeout_ms", tc.timeout);
                set_ms(*t, "backoff_ms", tc.backoff);
                set(*t, "temperature", tc.temperature);
                set(*t, "max_in_flight", tc.max_in_flight);
                if (t->get_optional<std::string>("api_key")) {
                    throw Error(ErrorKind::InvalidArgument,
                                std::string("teacher api_key must come from ") + kTeacherKeyEnv + ", not the config file");
                }
            }
        } catch (const boost::property_tree::ptree_error& e) {
            throw Error(ErrorKind::Parse, std::string("run config: ") + e.what());
        }
        return cfg;
    }

    static RunConfig load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw Error(ErrorKind::Io, "cannot open run config " + path.string());
        return parse(in, path.parent_path());
    }

    static std::vector<double> parse_doubles(const std::string& csv) {
        std::vector<double> out;
        std::stringstream ss(csv);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (is_blank(item)) continue;
            try {
                out.push_back(std::stod(item));
            } catch (const std::exception&) {
                throw Error(ErrorKind::Parse, "not a number: '" + item + "'");
            }
        }
        return out;
    }

    /// "host:port" or ":port".
    static void parse_listen(const std::string& s, std::string& host, int& port) {
        const auto colon = s.rfind(':');
        if (colon == std::string::npos) throw Error(ErrorKind::Parse, "listen address needs host:port, got '" + s + "'");
        if (colon > 0) host = s.substr(0, colon);
        try {
            port = std::stoi(s.substr(colon + 1));
        } catch (const std::exception&) {
            throw Error(ErrorKind::Parse, "bad listen port in '" + s + "'");
        }
    }
};

}  // namespace convo_gate
