#pragma once

#include <cstdint>
#include <string_view>

namespace convo_gate {

/// PCG32 (XSH-RR 64/32), seeded exactly as the reference pcg32_srandom_r.
/// All sampling helpers below are defined on top of the raw 32-bit stream
/// so that draws are reproducible in any language that implements PCG32.
class Pcg32 {
public:
    using result_type = std::uint32_t;

    explicit Pcg32(std::uint64_t seed = 0x853c49e6748fea9bULL,
                   std::uint64_t stream = 0xda3e39cb94b95bdbULL) {
        reseed(seed, stream);
    }

    void reseed(std::uint64_t seed, std::uint64_t stream) {
        state_ = 0;
        inc_ = (stream << 1u) | 1u;
        next();
        state_ += seed;
        next();
    }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return 0xffffffffu; }
    result_type operator()() { return next(); }

    std::uint32_t next() {
        const std::uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        const auto xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
        const auto rot = static_cast<std::uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((-rot) & 31u));
    }

    /// Uniform in [0, bound) by rejection (pcg32_boundedrand_r).
    std::uint32_t bounded(std::uint32_t bound) {
        if (bound <= 1) return 0;
        const std::uint32_t threshold = (0u - bound) % bound;
        for (;;) {
            const std::uint32_t r = next();
            if (r >= threshold) return r % bound;
        }
    }

    /// Uniform integer in the closed range [lo, hi].
    std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi) {
        return lo + bounded(static_cast<std::uint32_t>(hi - lo + 1));
    }

    /// 53-bit uniform double in [0, 1) from two draws (27 + 26 bits).
    double uniform01() {
        const std::uint64_t a = next() >> 5u;
        const std::uint64_t b = next() >> 6u;
        return (static_cast<double>(a) * 67108864.0 + static_cast<double>(b)) *
               (1.0 / 9007199254740992.0);
    }

    bool bernoulli(double p) { return uniform01() < p; }

    bool operator==(const Pcg32&) const = default;

private:
    std::uint64_t state_ = 0;
    std::uint64_t inc_ = 0;
};

/// 64-bit FNV-1a, optionally continued from a previous hash value.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t hash = 0xcbf29ce484222325ULL) {
    for (unsigned char c : bytes) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

/// Independent stream for one conversation, so per-conversation sampling can
/// be parallelised without sharing generator state.
inline Pcg32 stream_for(std::uint64_t seed, std::string_view key) {
    return Pcg32(seed, fnv1a64(key));
}

}  // namespace convo_gate
