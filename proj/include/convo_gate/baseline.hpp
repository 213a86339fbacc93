#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "convo_gate/classifier.hpp"
#include "convo_gate/core.hpp"
#include "convo_gate/error.hpp"
#include "convo_gate/random.hpp"

namespace convo_gate {

inline constexpr std::uint32_t kDefaultBuckets = 1u << 18;
inline constexpr std::uint64_t kDefaultHashSeed = 0x6367626c31ULL;

/// Sparse feature vector: (bucket, value) pairs sorted by bucket.
using HashedFeatures = std::vector<std::pair<std::uint32_t, double>>;

/// Lowercased word tokens for hashing. Alphanumeric runs (with apostrophes
/// and any non-ASCII bytes) form words; every other visible ASCII character
/// is a token of its own, so "?" survives as a feature.
inline std::vector<std::string> feature_tokens(std::string_view text) {
    std::vector<std::string> out;
    std::string word;
    auto flush = [&] {
        if (!word.empty()) out.push_back(std::move(word));
        word.clear();
    };
    for (unsigned char c : text) {
        if (std::isalnum(c) || c == '\'' || c >= 0x80) {
            word += static_cast<char>(std::tolower(c));
        } else {
            flush();
            if (!is_ascii_space(c)) out.emplace_back(1, static_cast<char>(c));
        }
    }
    flush();
    return out;
}

/// Unigram + bigram bag hashed into a fixed number of buckets. A pure
/// function of (text, seed, bucket count).
class FeatureHasher {
public:
    FeatureHasher(std::uint64_t seed = kDefaultHashSeed, std::uint32_t buckets = kDefaultBuckets)
        : seed_(seed), buckets_(buckets) {
        if (buckets_ == 0) throw Error(ErrorKind::InvalidArgument, "bucket count must be positive");
        std::array<char, 8> raw{};
        for (int i = 0; i < 8; ++i) raw[static_cast<std::size_t>(i)] = static_cast<char>((seed_ >> (8 * i)) & 0xff);
        basis_ = fnv1a64(std::string_view(raw.data(), raw.size()));
    }

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint32_t buckets() const noexcept { return buckets_; }

    std::uint32_t bucket(std::string_view feature) const {
        return static_cast<std::uint32_t>(fnv1a64(feature, basis_) % buckets_);
    }

    HashedFeatures operator()(std::string_view text) const {
        const auto tokens = feature_tokens(text);
        std::vector<std::uint32_t> hits;
        hits.reserve(tokens.size() * 2);
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            hits.push_back(bucket(tokens[i]));
            if (i + 1 < tokens.size()) hits.push_back(bucket(tokens[i] + '\x1f' + tokens[i + 1]));
        }
        std::sort(hits.begin(), hits.end());
        HashedFeatures out;
        for (auto h : hits) {
            if (!out.empty() && out.back().first == h) {
                out.back().second += 1.0;
            } else {
                out.emplace_back(h, 1.0);
            }
        }
        return out;
    }

private:
    std::uint64_t seed_;
    std::uint32_t buckets_;
    std::uint64_t basis_ = 0;
};

inline double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

/// log(1 + e^z) without overflow.
inline double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

/// Hashed n-gram bag with one logistic head per intent.
class BaselineModel final : public Classifier {
public:
    BaselineModel(IntentSchema schema, FeatureHasher hasher = {})
        : schema_(std::move(schema)),
          hasher_(hasher),
          weights_(schema_.size() * static_cast<std::size_t>(hasher.buckets()), 0.0),
          bias_(schema_.size(), 0.0) {
        thresholds_.assign(schema_.size(), 0.5);
    }

    BackendKind kind() const noexcept override { return BackendKind::Baseline; }
    const IntentSchema& schema() const noexcept override { return schema_; }
    const FeatureHasher& hasher() const noexcept { return hasher_; }

    std::size_t intents() const noexcept { return schema_.size(); }
    std::uint32_t buckets() const noexcept { return hasher_.buckets(); }

    double& weight(std::size_t intent, std::uint32_t bucket) { return weights_[intent * buckets() + bucket]; }
    double weight(std::size_t intent, std::uint32_t bucket) const { return weights_[intent * buckets() + bucket]; }
    std::span<double> weights() noexcept { return weights_; }
    std::span<const double> weights() const noexcept { return weights_; }
    std::span<double> bias() noexcept { return bias_; }
    std::span<const double> bias() const noexcept { return bias_; }

    double logit(const HashedFeatures& x, std::size_t intent) const {
        double z = bias_[intent];
        const double* row = weights_.data() + intent * buckets();
        for (const auto& [j, v] : x) z += row[j] * v;
        return z;
    }

    IntentVector predict_features(const HashedFeatures& x) const {
        std::vector<double> scores(intents());
        for (std::size_t k = 0; k < intents(); ++k) scores[k] = sigmoid(logit(x, k));
        return IntentVector::scores(std::move(scores));
    }

    IntentVector predict(std::string_view input_text) const override { return predict_features(hasher_(input_text)); }

    double squared_norm() const {
        double s = 0.0;
        for (double w : weights_) s += w * w;
        return s;
    }

    bool same_parameters(const BaselineModel& other) const {
        return weights_ == other.weights_ && bias_ == other.bias_;
    }

private:
    IntentSchema schema_;
    FeatureHasher hasher_;
    std::vector<double> weights_;
    std::vector<double> bias_;
};

// ---------------------------------------------------------------------------
// Objective and gradient

struct TrainingSample {
    HashedFeatures features;
    /// 0/1 per intent.
    std::vector<double> targets;
};

/// Mean over samples of the summed per-intent BCE; L2 is not included.
inline double data_loss(const BaselineModel& model, std::span<const TrainingSample> batch) {
    if (batch.empty()) return 0.0;
    double total = 0.0;
    for (const auto& s : batch) {
        for (std::size_t k = 0; k < model.intents(); ++k) {
            const double z = model.logit(s.features, k);
            total += softplus(z) - s.targets[k] * z;
        }
    }
    return total / static_cast<double>(batch.size());
}

/// data_loss + (l2 / 2) * ||W||^2 (biases unregularised).
inline double objective(const BaselineModel& model, std::span<const TrainingSample> batch, double l2) {
    return data_loss(model, batch) + 0.5 * l2 * model.squared_norm();
}

/// Gradient of data_loss: dense per-intent bias part, sparse weight part
/// keyed by intent * buckets + bucket. The L2 part is l2 * w and is added
/// by the caller where needed.
struct DataGradient {
    std::vector<double> bias;
    std::unordered_map<std::uint64_t, double> weights;
};

inline DataGradient data_gradient(const BaselineModel& model, std::span<const TrainingSample> batch) {
    DataGradient g;
    g.bias.assign(model.intents(), 0.0);
    if (batch.empty()) return g;
    const double scale = 1.0 / static_cast<double>(batch.size());
    for (const auto& s : batch) {
        for (std::size_t k = 0; k < model.intents(); ++k) {
            const double residual = (sigmoid(model.logit(s.features, k)) - s.targets[k]) * scale;
            g.bias[k] += residual;
            for (const auto& [j, v] : s.features) {
                g.weights[static_cast<std::uint64_t>(k) * model.buckets() + j] += residual * v;
            }
        }
    }
    return g;
}

/// One gradient step on the objective: w <- (1 - lr*l2) w - lr * dL/dw.
/// Returns the objective at the pre-step parameters.
inline double sgd_step(BaselineModel& model, std::span<const TrainingSample> batch, double lr, double l2) {
    const double loss = objective(model, batch, l2);
    const DataGradient g = data_gradient(model, batch);
    if (lr == 0.0) return loss;
    if (l2 != 0.0) {
        const double decay = 1.0 - lr * l2;
        for (double& w : model.weights()) w *= decay;
    }
    auto weights = model.weights();
    for (const auto& [key, value] : g.weights) weights[key] -= lr * value;
    for (std::size_t k = 0; k < model.intents(); ++k) model.bias()[k] -= lr * g.bias[k];
    return loss;
}

struct GradientCheckResult {
    double max_relative_error = 0.0;
    std::size_t coordinates = 0;
};

/// Compares the analytic gradient with central finite differences of the
/// objective on every bias, every weight the batch touches and a few weights
/// it does not touch (whose gradient is pure L2).
inline GradientCheckResult gradient_check(const BaselineModel& model, std::span<const TrainingSample> batch,
                                          double l2, double eps = 1e-5, std::size_t untouched_probes = 16,
                                          std::uint64_t probe_seed = 7) {
    BaselineModel probe = model;
    const DataGradient g = data_gradient(model, batch);
    const double norm = model.squared_norm();

    auto objective_with = [&](double* param, double value, bool is_weight) {
        const double saved = *param;
        *param = value;
        const double reg = is_weight ? norm - saved * saved + value * value : norm;
        const double f = data_loss(probe, batch) + 0.5 * l2 * reg;
        *param = saved;
        return f;
    };
    GradientCheckResult result;
    auto compare = [&](double analytic, double* param, bool is_weight) {
        const double x = *param;
        const double numeric =
            (objective_with(param, x + eps, is_weight) - objective_with(param, x - eps, is_weight)) / (2.0 * eps);
        const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
        result.max_relative_error = std::max(result.max_relative_error, std::abs(analytic - numeric) / denom);
        ++result.coordinates;
    };

    for (std::size_t k = 0; k < model.intents(); ++k) compare(g.bias[k], &probe.bias()[k], false);

    std::vector<std::uint64_t> keys;
    keys.reserve(g.weights.size());
    for (const auto& [key, value] : g.weights) keys.push_back(key);
    std::sort(keys.begin(), keys.end());
    for (auto key : keys) {
        compare(g.weights.at(key) + l2 * probe.weights()[key], &probe.weights()[key], true);
    }
    Pcg32 rng(probe_seed);
    const std::uint64_t total = static_cast<std::uint64_t>(model.intents()) * model.buckets();
    for (std::size_t i = 0; i < untouched_probes; ++i) {
        const std::uint64_t key = (static_cast<std::uint64_t>(rng.next()) << 32 | rng.next()) % total;
        if (g.weights.contains(key)) continue;
        compare(l2 * probe.weights()[key], &probe.weights()[key], true);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Binary serialisation
//
//   "CGBL1"
//   u64 hash seed, u32 bucket count
//   u32 intent count, then per intent: u32 id length, id bytes, f64 threshold
//   u64 steps, u32 length + bytes of trained_on
//   per intent: f64 bias, bucket-count f64 weights
//
// Integers and IEEE doubles are little-endian.

namespace detail {
class ByteWriter {
public:
    explicit ByteWriter(std::ostream& out) : out_(out) {}
    void u32(std::uint32_t v) { uint(v, 4); }
    void u64(std::uint64_t v) { uint(v, 8); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        out_.write(s.data(), static_cast<std::streamsize>(s.size()));
    }
    void raw(std::string_view s) { out_.write(s.data(), static_cast<std::streamsize>(s.size())); }

private:
    void uint(std::uint64_t v, int bytes) {
        char buf[8];
        for (int i = 0; i < bytes; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
        out_.write(buf, bytes);
    }
    std::ostream& out_;
};

class ByteReader {
public:
    ByteReader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}
    std::uint32_t u32() { return static_cast<std::uint32_t>(uint(4)); }
    std::uint64_t u64() { return uint(8); }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str(std::size_t limit = 1u << 20) {
        const auto n = u32();
        if (n > limit) fail("string length out of range");
        std::string s(n, '\0');
        in_.read(s.data(), static_cast<std::streamsize>(n));
        if (!in_) fail("truncated file");
        return s;
    }
    std::string raw(std::size_t n) {
        std::string s(n, '\0');
        in_.read(s.data(), static_cast<std::streamsize>(n));
        if (!in_) fail("truncated file");
        return s;
    }
    [[noreturn]] void fail(const std::string& why) const {
        throw Error(ErrorKind::Parse, "corrupt baseline model " + path_ + ": " + why);
    }

private:
    std::uint64_t uint(int bytes) {
        unsigned char buf[8];
        in_.read(reinterpret_cast<char*>(buf), bytes);
        if (!in_) fail("truncated file");
        std::uint64_t v = 0;
        for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
        return v;
    }
    std::istream& in_;
    std::string path_;
};
}  // namespace detail

inline constexpr std::string_view kBaselineMagic = "CGBL1";

inline void save_baseline(const BaselineModel& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    detail::ByteWriter w(out);
    w.raw(kBaselineMagic);
    w.u64(model.hasher().seed());
    w.u32(model.buckets());
    w.u32(static_cast<std::uint32_t>(model.intents()));
    for (std::size_t k = 0; k < model.intents(); ++k) {
        w.str(model.schema()[k].id);
        w.f64(model.thresholds()[k]);
    }
    w.u64(model.metadata().steps);
    w.str(model.metadata().trained_on);
    for (std::size_t k = 0; k < model.intents(); ++k) {
        w.f64(model.bias()[k]);
        for (std::uint32_t j = 0; j < model.buckets(); ++j) w.f64(model.weight(k, j));
    }
    out.flush();
    if (!out) throw Error(ErrorKind::Io, "write failed on " + path.string());
}

inline bool has_baseline_magic(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::string head(kBaselineMagic.size(), '\0');
    in.read(head.data(), static_cast<std::streamsize>(head.size()));
    return in && head == kBaselineMagic;
}

/// Loads a model; when `expected` is given its intent order must match.
inline BaselineModel load_baseline(const std::filesystem::path& path, const IntentSchema* expected = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open baseline model " + path.string());
    detail::ByteReader r(in, path.string());
    if (r.raw(kBaselineMagic.size()) != kBaselineMagic) r.fail("bad magic header");
    const std::uint64_t seed = r.u64();
    const std::uint32_t buckets = r.u32();
    const std::uint32_t n = r.u32();
    if (buckets == 0 || buckets > (1u << 26) || n == 0 || n > 1024) r.fail("implausible dimensions");
    std::vector<std::string> ids;
    std::vector<double> thresholds;
    for (std::uint32_t k = 0; k < n; ++k) {
        ids.push_back(r.str(256));
        thresholds.push_back(r.f64());
    }
    IntentSchema schema = IntentSchema::from_ids(ids);
    if (expected && !expected->same_ids(schema)) {
        throw Error(ErrorKind::SchemaMismatch, "model intents do not match the configured schema");
    }
    BaselineModel model(expected ? *expected : schema, FeatureHasher(seed, buckets));
    ModelMetadata meta;
    meta.steps = r.u64();
    meta.trained_on = r.str();
    model.set_metadata(meta);
    model.set_thresholds(thresholds);
    for (std::uint32_t k = 0; k < n; ++k) {
        model.bias()[k] = r.f64();
        for (std::uint32_t j = 0; j < buckets; ++j) model.weight(k, j) = r.f64();
    }
    return model;
}

}  // namespace convo_gate
