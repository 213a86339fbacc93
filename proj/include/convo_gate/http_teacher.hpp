#pragma once

#include <chrono>
#include <cstdlib>
#include <string>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "convo_gate/error.hpp"
#include "convo_gate/gateway.hpp"
#include "convo_gate/teacher.hpp"

namespace convo_gate {

inline constexpr const char* kTeacherKeyEnv = "CONVO_GATE_TEACHER_KEY";

struct TeacherConfig {
    /// Full chat-completions URL, e.g. "https://host/v1/chat/completions".
    std::string endpoint;
    std::string model;
    std::string api_key;
    std::size_t max_retries = 3;
    std::chrono::milliseconds timeout{60000};
    std::chrono::milliseconds backoff{500};
    double temperature = 0.0;
    std::size_t max_in_flight = 4;

    void validate() const {
        if (endpoint.empty()) throw Error(ErrorKind::InvalidArgument, "teacher endpoint is not set");
        if (timeout.count() <= 0) throw Error(ErrorKind::InvalidArgument, "teacher timeout must be > 0");
        if (max_in_flight == 0) throw Error(ErrorKind::InvalidArgument, "teacher max_in_flight must be > 0");
    }

    /// Fills api_key from the environment when it is not already set.
    void load_key_from_env() {
        if (!api_key.empty()) return;
        if (const char* key = std::getenv(kTeacherKeyEnv)) api_key = key;
    }
};

/// Chat-completions client. Retries transport failures, 429 and 5xx with
/// exponential backoff; other statuses fail at once.
class HttpTeacher final : public TeacherClient {
public:
    explicit HttpTeacher(TeacherConfig config) : config_(std::move(config)) {
        config_.validate();
        std::tie(base_, path_) = split_url(config_.endpoint);
    }

    const TeacherConfig& config() const noexcept { return config_; }

    static nlohmann::json request_body(const TeacherRequest& req, const std::string& model) {
        nlohmann::json messages = nlohmann::json::array();
        for (const auto& m : req.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
        nlohmann::json body{{"messages", messages}, {"temperature", req.temperature}};
        if (!model.empty()) body["model"] = model;
        return body;
    }

    std::string complete(const TeacherRequest& req) override {
        const std::string body = request_body(req, config_.model).dump();
        httplib::Headers headers;
        if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
        std::string last_error;
        for (std::size_t attempt = 0; attempt <= config_.max_retries; ++attempt) {
            if (attempt > 0) std::this_thread::sleep_for(config_.backoff * (1LL << std::min<std::size_t>(attempt - 1, 10)));
            httplib::Client cli(base_);
            cli.set_connection_timeout(config_.timeout);
            cli.set_read_timeout(config_.timeout);
            cli.set_write_timeout(config_.timeout);
            auto res = cli.Post(path_, headers, body, "application/json");
            if (!res) {
                last_error = "transport failure: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status == 429 || res->status >= 500) {
                last_error = "provider returned status " + std::to_string(res->status);
                continue;
            }
            if (res->status < 200 || res->status >= 300) {
                throw Error(ErrorKind::Transport, "provider returned status " + std::to_string(res->status), res->body);
            }
            return extract_content(res->body);
        }
        throw Error(ErrorKind::Transport,
                    "teacher request failed after " + std::to_string(config_.max_retries + 1) + " attempts: " + last_error,
                    config_.endpoint);
    }

    static std::string extract_content(const std::string& raw) {
        try {
            const auto j = nlohmann::json::parse(raw);
            return j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::Parse, std::string("unexpected provider response: ") + e.what(), raw);
        }
    }

private:
    TeacherConfig config_;
    std::string base_, path_;
};

}  // namespace convo_gate
