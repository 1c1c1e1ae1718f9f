#pragma once

/**
 * Core vocabulary, token-sequence and probability types, plus the seeded
 * randomness primitives every other module builds on.
 *
 * All randomness flows through SeedPath-derived 64-bit seeds so that any
 * experiment is bit-reproducible regardless of how work is parallelised.
 * The mixing primitive is the splitmix64 finalizer; derived values chain
 * with wrapping addition (an XOR chain would self-cancel when a caller
 * feeds mix(key) back in as data, which the n=1 sentinel hash does).
 */

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace wmlab {

using Token = std::uint32_t;

struct Vocab {
    std::uint32_t size = 0;

    explicit Vocab(std::uint32_t n = 0) : size(n) {
        if (n < 2) throw std::invalid_argument("Vocab: size must be >= 2");
    }
};

/// Ordered token ids; the first prompt_len tokens are prompt, the rest
/// continuation. Continuation tokens are the ones scored by detectors and
/// used as fitting targets.
struct TokenSeq {
    std::vector<Token> tokens;
    std::size_t prompt_len = 0;

    std::size_t size() const { return tokens.size(); }
    std::span<const Token> all() const { return tokens; }
    std::span<const Token> continuation() const {
        return std::span<const Token>(tokens).subspan(prompt_len);
    }
};

struct Dist {
    std::vector<double> probs;

    std::size_t size() const { return probs.size(); }
    double operator[](std::size_t i) const { return probs[i]; }
};

struct LogitVec {
    std::vector<double> logits;

    std::size_t size() const { return logits.size(); }
};

// ---------------------------------------------------------------------------
// splitmix64-style avalanche mixing

inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Keyed PRF over a small tuple: mix(first), then fold the rest in with
/// wrapping addition. Used for green partitions, g-values and seed paths.
inline std::uint64_t prf_chain(std::uint64_t acc, std::uint64_t part) {
    return mix64(acc + part);
}

template <typename... Rest>
std::uint64_t prf(std::uint64_t first, Rest... rest) {
    std::uint64_t acc = mix64(first);
    ((acc = prf_chain(acc, static_cast<std::uint64_t>(rest))), ...);
    return acc;
}

inline std::uint64_t hash_label(std::string_view label) {
    // FNV-1a, then avalanched.
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : label) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return mix64(h);
}

/// Hierarchical seed derivation: a master seed plus a path of
/// (label, index) pairs. Identical paths always produce identical seeds.
struct SeedPath {
    std::uint64_t master_seed = 0;
    std::vector<std::pair<std::string, std::uint64_t>> path;

    SeedPath() = default;
    explicit SeedPath(std::uint64_t master) : master_seed(master) {}

    SeedPath child(std::string_view label, std::uint64_t index = 0) const {
        SeedPath out = *this;
        out.path.emplace_back(std::string(label), index);
        return out;
    }
};

inline std::uint64_t derive_seed(const SeedPath& s) {
    std::uint64_t h = mix64(s.master_seed);
    for (const auto& [label, index] : s.path) {
        h = prf_chain(h, hash_label(label));
        h = prf_chain(h, index);
    }
    return h;
}

/// Shorthand: one derivation step off an already-derived seed.
inline std::uint64_t derive_sub(std::uint64_t seed, std::string_view label,
                                std::uint64_t index = 0) {
    std::uint64_t h = prf_chain(mix64(seed), hash_label(label));
    return prf_chain(h, index);
}

/// Uniform double in [0,1) from the top 53 bits of a mixed draw.
inline double unit_uniform(std::uint64_t seed) {
    return static_cast<double>(mix64(seed) >> 11) * 0x1.0p-53;
}

// ---------------------------------------------------------------------------

/// Numerically stable softmax with max subtraction. Output sums to 1
/// within 1e-12; rejects non-finite logits and non-positive temperature.
Dist softmax(const LogitVec& l, double temperature = 1.0);

/// Inverse-CDF sample from d using one uniform draw derived from seed.
/// Pure function of (d, seed); rejects an all-zero distribution.
Token sample(const Dist& d, std::uint64_t seed);

/// Sequential deterministic RNG stream for internal samplers (Dirichlet
/// rows). Distinct streams come from distinct derived seeds.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() { return mix64(state_++); }
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Standard normal via polar Box-Muller with a cached spare.
    double next_normal();

    /// Gamma(shape) for shape > 0, Marsaglia-Tsang with the alpha<1 boost.
    double next_gamma(double shape);

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace wmlab
