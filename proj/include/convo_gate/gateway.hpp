#pragma once

#include <atomic>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "convo_gate/classifier.hpp"
#include "convo_gate/corpus.hpp"
#include "convo_gate/error.hpp"
#include "convo_gate/tokens.hpp"

namespace convo_gate {

struct GatewayConfig {
    std::filesystem::path model_path;
    std::filesystem::path schema_path;
    std::string predicate = "any";
    /// Empty keeps the model's own thresholds.
    std::vector<double> thresholds_override;
    /// Empty disables forwarding; /v1/filter then only records decisions.
    std::string downstream_url;
    std::chrono::milliseconds downstream_timeout{10000};
    CounterKind counter = CounterKind::Whitespace;
    std::string listen_host = "127.0.0.1";
    int listen_port = 8080;
    std::size_t context_budget = 0;
    std::string separator = "[SEP]";
    bool fail_open = false;
    std::filesystem::path audit_log;
    std::size_t worker_threads = 16;

    void validate(const IntentSchema& schema) const {
        (void)Predicate::parse(predicate, schema);
        if (!thresholds_override.empty() && thresholds_override.size() != schema.size()) {
            throw Error(ErrorKind::SchemaMismatch, "threshold override count does not match intent count");
        }
        if (downstream_timeout.count() <= 0) throw Error(ErrorKind::InvalidArgument, "downstream timeout must be > 0");
        if (listen_port < 0 || listen_port > 65535) throw Error(ErrorKind::InvalidArgument, "listen port out of range");
        if (worker_threads == 0) throw Error(ErrorKind::InvalidArgument, "worker_threads must be > 0");
    }
};

enum class Verdict { Forward, Filter };

inline std::string_view to_string(Verdict v) { return v == Verdict::Forward ? "forward" : "filter"; }

struct FilterDecision {
    std::string snippet_id;
    IntentVector scores;
    Verdict decision = Verdict::Filter;
    std::vector<std::string> matched_intents;
    std::size_t token_count = 0;
    std::string timestamp;
    std::size_t sub_segments = 0;
    /// Classification failed; the verdict then follows the fail-open flag.
    bool errored = false;
    std::string error;
};

struct GatewayStats {
    std::uint64_t total_snippets = 0;
    std::uint64_t forwarded_snippets = 0;
    std::uint64_t filtered_snippets = 0;
    std::uint64_t errored_snippets = 0;
    std::uint64_t delivery_failures = 0;
    std::uint64_t total_tokens = 0;
    std::uint64_t forwarded_tokens = 0;
    std::uint64_t filtered_tokens = 0;
    std::vector<std::uint64_t> per_intent_positive;

    /// 100 * (1 - forwarded / total) so far; empty before any token is seen.
    std::optional<double> actual_reduction_pct() const {
        if (total_tokens == 0) return std::nullopt;
        return 100.0 * (1.0 - static_cast<double>(forwarded_tokens) / static_cast<double>(total_tokens));
    }

    bool operator==(const GatewayStats&) const = default;
};

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const auto secs = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    char out[40];
    std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
    return out;
}

inline Json to_json(const FilterDecision& d, const IntentSchema& schema) {
    Json scores = Json::object();
    for (std::size_t i = 0; i < d.scores.size() && i < schema.size(); ++i) scores[schema[i].id] = d.scores[i];
    Json j{{"snippet_id", d.snippet_id},
           {"scores", scores},
           {"decision", std::string(to_string(d.decision))},
           {"matched_intents", d.matched_intents},
           {"token_count", d.token_count},
           {"timestamp", d.timestamp},
           {"sub_segments", d.sub_segments}};
    if (d.errored) {
        j["errored"] = true;
        j["error"] = d.error;
    }
    return j;
}

inline Json to_json(const GatewayStats& s, const IntentSchema& schema) {
    Json per = Json::object();
    for (std::size_t i = 0; i < schema.size() && i < s.per_intent_positive.size(); ++i) {
        per[schema[i].id] = s.per_intent_positive[i];
    }
    Json j{{"total_snippets", s.total_snippets},       {"forwarded_snippets", s.forwarded_snippets},
           {"filtered_snippets", s.filtered_snippets}, {"errored_snippets", s.errored_snippets},
           {"delivery_failures", s.delivery_failures}, {"total_tokens", s.total_tokens},
           {"forwarded_tokens", s.forwarded_tokens},   {"filtered_tokens", s.filtered_tokens},
           {"per_intent_positive", per}};
    const auto r = s.actual_reduction_pct();
    j["actual_reduction_pct"] = r ? Json(*r) : Json(nullptr);
    return j;
}

// ---------------------------------------------------------------------------
// Audit log

/// Append-only JSONL log; one writer, records never interleave.
class AuditLog {
public:
    AuditLog() = default;
    explicit AuditLog(const std::filesystem::path& path) : path_(path) {
        if (path.empty()) return;
        out_.open(path, std::ios::app);
        if (!out_) throw Error(ErrorKind::Io, "cannot open audit log " + path.string());
    }

    bool enabled() const noexcept { return out_.is_open(); }
    const std::filesystem::path& path() const noexcept { return path_; }

    void append(const Json& record) {
        if (!enabled()) return;
        const std::string line = record.dump() + "\n";
        std::lock_guard lock(mu_);
        out_ << line;
        out_.flush();
        if (!out_) throw Error(ErrorKind::Io, "audit log write failed on " + path_.string());
    }

private:
    std::filesystem::path path_;
    std::ofstream out_;
    std::mutex mu_;
};

inline std::vector<Json> read_audit_log(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open audit log " + path.string());
    std::vector<Json> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (is_blank(line)) continue;
        try {
            out.push_back(Json::parse(line));
        } catch (const Json::parse_error& e) {
            throw Error(ErrorKind::Parse, "audit log line " + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Downstream

struct DownstreamResponse {
    int status = 0;
    std::string body;
    std::string content_type;
};

using HeaderList = std::vector<std::pair<std::string, std::string>>;

class DownstreamClient {
public:
    virtual ~DownstreamClient() = default;
    /// Throws on transport failure; non-2xx statuses are returned as-is.
    virtual DownstreamResponse post(const std::string& body, const HeaderList& headers) = 0;
};

/// "http://host:port/path" -> ("http://host:port", "/path").
inline std::pair<std::string, std::string> split_url(const std::string& url) {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos) throw Error(ErrorKind::InvalidArgument, "URL lacks a scheme: " + url);
    const auto slash = url.find('/', scheme + 3);
    if (slash == std::string::npos) return {url, "/"};
    return {url.substr(0, slash), url.substr(slash)};
}

class HttpDownstream final : public DownstreamClient {
public:
    HttpDownstream(std::string url, std::chrono::milliseconds timeout) : timeout_(timeout) {
        std::tie(base_, path_) = split_url(url);
    }

    DownstreamResponse post(const std::string& body, const HeaderList& headers) override {
        // httplib::Client is not safe for concurrent use; one per call.
        httplib::Client cli(base_);
        cli.set_connection_timeout(timeout_);
        cli.set_read_timeout(timeout_);
        cli.set_write_timeout(timeout_);
        httplib::Headers h;
        for (const auto& [k, v] : headers) h.emplace(k, v);
        auto res = cli.Post(path_, h, body, "application/json");
        if (!res) {
            throw Error(ErrorKind::Forwarding, "downstream unreachable: " + httplib::to_string(res.error()), base_ + path_);
        }
        return {res->status, res->body, res->get_header_value("Content-Type")};
    }

private:
    std::string base_, path_;
    std::chrono::milliseconds timeout_;
};

struct ForwardOutcome {
    std::optional<DownstreamResponse> response;
    /// Set when delivery failed (transport error or non-2xx status).
    std::optional<std::string> error;

    bool delivered() const noexcept { return response && !error; }
};

// ---------------------------------------------------------------------------
// Gateway core

/// Classifies snippets, keeps token accounting and relays positives
/// downstream. Thread-safe: the model is read-only, counters sit behind one
/// mutex so snapshots are consistent, downstream calls hold no lock.
class Gateway {
public:
    Gateway(std::shared_ptr<const Classifier> model, GatewayConfig config, TokenCounter counter = {},
            std::shared_ptr<DownstreamClient> downstream = nullptr)
        : model_(std::move(model)),
          config_(std::move(config)),
          counter_(std::move(counter)),
          predicate_(Predicate::parse(config_.predicate, model_->schema())),
          downstream_(std::move(downstream)),
          audit_(config_.audit_log) {
        config_.validate(model_->schema());
        thresholds_ = config_.thresholds_override.empty() ? model_->thresholds() : config_.thresholds_override;
        stats_.per_intent_positive.assign(model_->schema().size(), 0);
        if (!downstream_ && !config_.downstream_url.empty()) {
            downstream_ = std::make_shared<HttpDownstream>(config_.downstream_url, config_.downstream_timeout);
        }
    }

    const IntentSchema& schema() const noexcept { return model_->schema(); }
    const GatewayConfig& config() const noexcept { return config_; }
    const Predicate& predicate() const noexcept { return predicate_; }
    const std::vector<double>& thresholds() const noexcept { return thresholds_; }
    const TokenCounter& counter() const noexcept { return counter_; }

    ScoringOptions scoring() const { return {config_.separator, config_.context_budget, true}; }

    /// Pure decision without accounting: the offline reference for a snippet.
    FilterDecision decide_offline(const Conversation& snippet) const {
        FilterDecision d;
        d.snippet_id = snippet.id;
        d.token_count = conversation_tokens(snippet, counter_);
        const ConversationScore s = score_with_thresholds(snippet);
        d.scores = s.scores;
        d.sub_segments = s.sub_segments;
        for (std::size_t i = 0; i < s.decision.size(); ++i) {
            if (s.decision.test(i)) d.matched_intents.push_back(schema()[i].id);
        }
        d.decision = predicate_.satisfied(s.decision) ? Verdict::Forward : Verdict::Filter;
        return d;
    }

    /// Classifies, updates counters and appends an audit record. Backend
    /// failures do not throw: the snippet is marked errored and filtered
    /// unless fail_open is set.
    FilterDecision classify_snippet(const Conversation& snippet) {
        FilterDecision d;
        try {
            d = decide_offline(snippet);
        } catch (const std::exception& e) {
            d = FilterDecision{};
            d.snippet_id = snippet.id;
            d.token_count = conversation_tokens(snippet, counter_);
            d.scores = IntentVector::zeros(schema().size());
            d.errored = true;
            d.error = e.what();
            d.decision = config_.fail_open ? Verdict::Forward : Verdict::Filter;
        }
        if (d.snippet_id.empty()) d.snippet_id = "snippet-" + std::to_string(next_id_.fetch_add(1));
        d.timestamp = utc_timestamp();
        {
            std::lock_guard lock(stats_mu_);
            ++stats_.total_snippets;
            stats_.total_tokens += d.token_count;
            if (d.errored) ++stats_.errored_snippets;
            if (d.decision == Verdict::Forward) {
                ++stats_.forwarded_snippets;
                stats_.forwarded_tokens += d.token_count;
            } else {
                ++stats_.filtered_snippets;
                stats_.filtered_tokens += d.token_count;
            }
            for (const auto& id : d.matched_intents) ++stats_.per_intent_positive[*schema().index_of(id)];
        }
        Json record = to_json(d, schema());
        record["type"] = "decision";
        record["predicate"] = predicate_.name();
        record["thresholds"] = thresholds_;
        audit_.append(record);
        return d;
    }

    /// Relays `body` verbatim with decision headers. Counters were settled at
    /// decision time; a failed delivery is recorded, not retried.
    ForwardOutcome forward(const std::string& body, const FilterDecision& decision) {
        if (decision.decision != Verdict::Forward) {
            throw Error(ErrorKind::Precondition, "forward called for a filtered snippet", decision.snippet_id);
        }
        ForwardOutcome out;
        if (!downstream_) {
            out.error = "no downstream configured";
        } else {
            try {
                out.response = downstream_->post(body, decision_headers(decision));
                if (out.response->status < 200 || out.response->status >= 300) {
                    out.error = "downstream returned status " + std::to_string(out.response->status);
                }
            } catch (const std::exception& e) {
                out.error = e.what();
            }
        }
        if (out.error) {
            {
                std::lock_guard lock(stats_mu_);
                ++stats_.delivery_failures;
            }
            audit_.append({{"type", "delivery_failure"},
                           {"snippet_id", decision.snippet_id},
                           {"status", out.response ? Json(out.response->status) : Json(nullptr)},
                           {"error", *out.error},
                           {"timestamp", utc_timestamp()}});
        }
        return out;
    }

    GatewayStats stats() const {
        std::lock_guard lock(stats_mu_);
        return stats_;
    }

    HeaderList decision_headers(const FilterDecision& d) const {
        std::string matched, scores;
        for (const auto& id : d.matched_intents) matched += (matched.empty() ? "" : ",") + id;
        for (std::size_t i = 0; i < d.scores.size(); ++i) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%s=%.6f", schema()[i].id.c_str(), d.scores[i]);
            scores += (scores.empty() ? "" : ",") + std::string(buf);
        }
        return {{"X-Convo-Gate-Snippet-Id", d.snippet_id},
                {"X-Convo-Gate-Decision", std::string(to_string(d.decision))},
                {"X-Convo-Gate-Matched-Intents", matched},
                {"X-Convo-Gate-Scores", scores},
                {"X-Convo-Gate-Token-Count", std::to_string(d.token_count)}};
    }

private:
    ConversationScore score_with_thresholds(const Conversation& snippet) const {
        if (snippet.turns.empty()) throw Error(ErrorKind::Precondition, "snippet has no turns", snippet.id);
        return score_conversation(*model_, snippet, scoring(), counter_, thresholds_);
    }

    std::shared_ptr<const Classifier> model_;
    GatewayConfig config_;
    TokenCounter counter_;
    Predicate predicate_;
    std::vector<double> thresholds_;
    std::shared_ptr<DownstreamClient> downstream_;
    AuditLog audit_;
    mutable std::mutex stats_mu_;
    GatewayStats stats_;
    std::atomic<std::uint64_t> next_id_{0};
};

// ---------------------------------------------------------------------------
// Web API

/// POST /v1/classify, POST /v1/filter, GET /v1/stats, GET /healthz.
/// Snippet bodies use the conversation line object shape.
class GatewayServer {
public:
    explicit GatewayServer(Gateway& gateway) : gateway_(gateway) {
        const std::size_t workers = gateway_.config().worker_threads;
        server_.new_task_queue = [workers] { return new httplib::ThreadPool(workers); };
        server_.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
            res.set_content(R"({"status":"ok"})", "application/json");
        });
        server_.Get("/v1/stats", [this](const httplib::Request&, httplib::Response& res) {
            res.set_content(to_json(gateway_.stats(), gateway_.schema()).dump(), "application/json");
        });
        server_.Post("/v1/classify", [this](const httplib::Request& req, httplib::Response& res) {
            handle(req, res, false);
        });
        server_.Post("/v1/filter", [this](const httplib::Request& req, httplib::Response& res) {
            handle(req, res, true);
        });
    }

    GatewayServer(const GatewayServer&) = delete;
    GatewayServer& operator=(const GatewayServer&) = delete;

    /// Binds; port 0 picks a free port. Returns the bound port.
    int bind(const std::string& host, int port) {
        const int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
        if (bound < 0) throw Error(ErrorKind::Io, "cannot bind " + host + ":" + std::to_string(port));
        return bound;
    }

    /// Blocks until stop().
    void listen_after_bind() { server_.listen_after_bind(); }
    void stop() { server_.stop(); }
    void wait_until_ready() const { server_.wait_until_ready(); }
    bool is_running() const { return server_.is_running(); }

private:
    static void error_reply(httplib::Response& res, int status, const std::string& message) {
        res.status = status;
        res.set_content(Json{{"error", message}}.dump(), "application/json");
    }

    void handle(const httplib::Request& req, httplib::Response& res, bool forward) {
        Conversation snippet;
        try {
            snippet = conversation_from_json(Json::parse(req.body), gateway_.schema(), true);
        } catch (const Json::parse_error& e) {
            return error_reply(res, 400, std::string("malformed JSON: ") + e.what());
        } catch (const Error& e) {
            return error_reply(res, 400, e.what());
        }
        if (snippet.turns.empty()) return error_reply(res, 400, "snippet has no non-blank turns");

        const FilterDecision d = gateway_.classify_snippet(snippet);
        Json body = forward ? Json{{"decision", to_json(d, gateway_.schema())}} : to_json(d, gateway_.schema());
        int status = d.errored ? 503 : 200;
        if (forward) {
            body["downstream"] = nullptr;
            if (d.decision == Verdict::Forward) {
                const auto out = gateway_.forward(req.body, d);
                if (out.response) {
                    body["downstream"] = {{"status", out.response->status}, {"body", out.response->body}};
                }
                if (out.error) {
                    body["error"] = {{"kind", "forwarding"}, {"snippet_id", d.snippet_id}, {"message", *out.error}};
                    status = 502;
                }
            }
        }
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    Gateway& gateway_;
    httplib::Server server_;
};

}  // namespace convo_gate
