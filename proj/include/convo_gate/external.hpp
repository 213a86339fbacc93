#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "convo_gate/baseline.hpp"
#include "convo_gate/classifier.hpp"
#include "convo_gate/error.hpp"
#include "convo_gate/tokens.hpp"

#ifdef CONVO_GATE_WITH_ONNXRUNTIME
#include <onnxruntime_cxx_api.h>
#endif

namespace convo_gate {

/// Executes an exported classifier graph on one tokenised input and returns
/// raw logits, one per intent.
class GraphRuntime {
public:
    virtual ~GraphRuntime() = default;
    virtual std::vector<double> run(const std::vector<std::int64_t>& input_ids,
                                    const std::vector<std::int64_t>& attention_mask) const = 0;
};

using RuntimeFactory =
    std::function<std::unique_ptr<GraphRuntime>(const std::filesystem::path& graph, std::size_t n_outputs)>;

#ifdef CONVO_GATE_WITH_ONNXRUNTIME
class OnnxRuntimeGraph final : public GraphRuntime {
public:
    OnnxRuntimeGraph(const std::filesystem::path& graph, std::size_t n_outputs)
        : env_(ORT_LOGGING_LEVEL_WARNING, "convo-gate"), n_outputs_(n_outputs) {
        Ort::SessionOptions opts;
        opts.SetIntraOpNumThreads(1);
        session_ = std::make_unique<Ort::Session>(env_, graph.c_str(), opts);
    }

    std::vector<double> run(const std::vector<std::int64_t>& input_ids,
                            const std::vector<std::int64_t>& attention_mask) const override {
        auto mem = Ort::MemoryInfo::CreateCpu(OrtArenaAllocator, OrtMemTypeDefault);
        const std::int64_t shape[2] = {1, static_cast<std::int64_t>(input_ids.size())};
        std::vector<Ort::Value> inputs;
        inputs.push_back(Ort::Value::CreateTensor<std::int64_t>(
            mem, const_cast<std::int64_t*>(input_ids.data()), input_ids.size(), shape, 2));
        inputs.push_back(Ort::Value::CreateTensor<std::int64_t>(
            mem, const_cast<std::int64_t*>(attention_mask.data()), attention_mask.size(), shape, 2));
        const char* in_names[] = {"input_ids", "attention_mask"};
        const char* out_names[] = {"logits"};
        auto out = session_->Run(Ort::RunOptions{nullptr}, in_names, inputs.data(), 2, out_names, 1);
        const float* logits = out.front().GetTensorData<float>();
        return std::vector<double>(logits, logits + n_outputs_);
    }

private:
    Ort::Env env_;
    std::unique_ptr<Ort::Session> session_;
    std::size_t n_outputs_;
};
#endif

inline RuntimeFactory default_runtime_factory() {
    return [](const std::filesystem::path& graph, std::size_t n_outputs) -> std::unique_ptr<GraphRuntime> {
#ifdef CONVO_GATE_WITH_ONNXRUNTIME
        try {
            return std::make_unique<OnnxRuntimeGraph>(graph, n_outputs);
        } catch (const Ort::Exception& e) {
            throw Error(ErrorKind::Backend, std::string("cannot load graph: ") + e.what(), graph.string());
        }
#else
        (void)n_outputs;
        throw Error(ErrorKind::Backend, "this build has no ONNX runtime; rebuild with ONNX Runtime to run graphs",
                    graph.string());
#endif
    };
}

/// Bundle metadata.json:
///   {"intents": [ids in output order], "thresholds": [...], "max_length": 128,
///    "do_lower_case": true, "graph": "model.onnx", "tokenizer": "vocab.txt",
///    "trained_on": "...", "steps": N}
struct BundleMetadata {
    std::vector<std::string> intents;
    std::vector<double> thresholds;
    std::size_t max_length = 512;
    bool do_lower_case = true;
    std::string graph = "model.onnx";
    std::string tokenizer = "vocab.txt";
    ModelMetadata model;

    static BundleMetadata parse(const nlohmann::json& j) {
        BundleMetadata m;
        if (!j.is_object() || !j.contains("intents") || !j["intents"].is_array()) {
            throw Error(ErrorKind::Parse, "bundle metadata lacks an 'intents' array");
        }
        try {
            m.intents = j["intents"].get<std::vector<std::string>>();
            m.thresholds = j.value("thresholds", std::vector<double>(m.intents.size(), 0.5));
            m.max_length = j.value("max_length", m.max_length);
            m.do_lower_case = j.value("do_lower_case", true);
            m.graph = j.value("graph", m.graph);
            m.tokenizer = j.value("tokenizer", m.tokenizer);
            m.model.trained_on = j.value("trained_on", std::string());
            m.model.steps = j.value("steps", std::uint64_t{0});
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::Parse, std::string("bad bundle metadata: ") + e.what());
        }
        if (m.thresholds.size() != m.intents.size()) {
            throw Error(ErrorKind::Parse, "bundle metadata has " + std::to_string(m.thresholds.size()) +
                                              " thresholds for " + std::to_string(m.intents.size()) + " intents");
        }
        if (m.max_length < 2) throw Error(ErrorKind::Parse, "bundle max_length must be >= 2");
        return m;
    }
};

/// Classifier backed by an exported transformer graph and its tokenizer.
class ExternalModel final : public Classifier {
public:
    ExternalModel(IntentSchema schema, std::shared_ptr<const WordPieceTokenizer> tokenizer,
                  std::unique_ptr<GraphRuntime> runtime, std::size_t max_length)
        : schema_(std::move(schema)),
          tokenizer_(std::move(tokenizer)),
          runtime_(std::move(runtime)),
          max_length_(max_length) {
        thresholds_.assign(schema_.size(), 0.5);
    }

    BackendKind kind() const noexcept override { return BackendKind::External; }
    const IntentSchema& schema() const noexcept override { return schema_; }

    IntentVector predict(std::string_view text) const override {
        const auto enc = tokenizer_->encode(text, max_length_);
        std::vector<double> logits;
        try {
            logits = runtime_->run(enc.input_ids, enc.attention_mask);
        } catch (const Error&) {
            throw;
        } catch (const std::exception& e) {
            throw Error(ErrorKind::Backend, std::string("graph execution failed: ") + e.what());
        }
        if (logits.size() != schema_.size()) {
            throw Error(ErrorKind::Backend, "graph returned " + std::to_string(logits.size()) + " logits for " +
                                                std::to_string(schema_.size()) + " intents");
        }
        for (auto& z : logits) z = sigmoid(z);
        return IntentVector::scores(std::move(logits));
    }

    TokenCounter native_counter() const override { return TokenCounter::external(tokenizer_); }
    std::shared_ptr<const WordPieceTokenizer> tokenizer() const { return tokenizer_; }
    std::size_t max_length() const noexcept { return max_length_; }

private:
    IntentSchema schema_;
    std::shared_ptr<const WordPieceTokenizer> tokenizer_;
    std::unique_ptr<GraphRuntime> runtime_;
    std::size_t max_length_;
};

inline BundleMetadata read_bundle_metadata(const std::filesystem::path& dir) {
    const auto meta_path = dir / "metadata.json";
    if (!std::filesystem::is_directory(dir)) throw Error(ErrorKind::Io, "model bundle is not a directory", dir.string());
    std::ifstream in(meta_path);
    if (!in) throw Error(ErrorKind::Io, "model bundle lacks metadata.json", dir.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::Parse, std::string("corrupt bundle metadata: ") + e.what(), meta_path.string());
    }
    return BundleMetadata::parse(j);
}

/// Loads a bundle directory (metadata.json, WordPiece vocabulary, graph).
/// The bundle's intent order must equal the run schema's.
inline std::unique_ptr<ExternalModel> load_external(const std::filesystem::path& dir, const IntentSchema& schema,
                                                    const RuntimeFactory& factory = default_runtime_factory()) {
    const auto meta = read_bundle_metadata(dir);
    if (meta.intents != schema.ids()) {
        std::string got;
        for (const auto& id : meta.intents) got += (got.empty() ? "" : ",") + id;
        throw Error(ErrorKind::SchemaMismatch, "bundle intent order does not match the run schema", got);
    }
    const auto vocab = dir / meta.tokenizer;
    if (!std::filesystem::exists(vocab)) throw Error(ErrorKind::Io, "model bundle lacks its tokenizer", vocab.string());
    const auto graph = dir / meta.graph;
    if (!std::filesystem::exists(graph)) throw Error(ErrorKind::Io, "model bundle lacks its graph", graph.string());

    WordPieceTokenizer::Options opts;
    opts.do_lower_case = meta.do_lower_case;
    auto tokenizer = std::make_shared<const WordPieceTokenizer>(WordPieceTokenizer::from_file(vocab.string(), opts));
    auto model = std::make_unique<ExternalModel>(schema, std::move(tokenizer), factory(graph, schema.size()),
                                                 meta.max_length);
    model->set_thresholds(meta.thresholds);
    model->set_metadata(meta.model);
    return model;
}

/// Baseline file (CGBL1 magic) or external bundle directory.
inline std::unique_ptr<Classifier> load_model(const std::filesystem::path& path, const IntentSchema& schema,
                                              const RuntimeFactory& factory = default_runtime_factory()) {
    if (std::filesystem::is_directory(path)) return load_external(path, schema, factory);
    return std::make_unique<BaselineModel>(load_baseline(path, &schema));
}

}  // namespace convo_gate
