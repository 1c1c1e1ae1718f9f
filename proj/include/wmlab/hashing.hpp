#pragma once

/**
 * Context hashing and keyed pseudo-random vocabulary structure.
 *
 * window_hash maps the n-1 tokens before the current position to a hash;
 * green_partition and g_value derive the per-context watermark rule from
 * (key, hash) with the core PRF. Both are pure; the caches at the bottom
 * memoize them per (key, hash) and must behave identically to
 * recomputation.
 */

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <unordered_map>
#include <vector>

#include "wmlab/core.hpp"

namespace wmlab {

struct WatermarkKey {
    std::uint64_t key = 0;
};

enum class HashKind { Multiplicative, MinToken, SkipLeftmost };

/// Keyed bipartition of the vocabulary. Exactly floor(gamma*|V|) green
/// entries for every (key, hash) pair.
struct GreenPartition {
    std::vector<bool> green;
    double gamma = 0.0;

    bool is_green(Token t) const { return green[t]; }
    std::size_t popcount() const {
        std::size_t n = 0;
        for (bool b : green) n += b;
        return n;
    }
    GreenPartition complemented() const {
        GreenPartition out = *this;
        out.green.flip();
        out.gamma = 1.0 - gamma;
        return out;
    }
};

/// Sentinel hash for the n=1 global rule (no window to hash).
inline std::uint64_t sentinel_hash(WatermarkKey key) { return mix64(key.key); }

/// Hash of a window of at least one token. Multiplicative offsets each id
/// by +2 before multiplying so ids 0 and 1 are not absorbing; result < |V|.
std::uint64_t window_hash(std::span<const Token> window, HashKind kind,
                          const Vocab& vocab);

/// Rank all ids by prf(key, h, id); the floor(gamma*|V|) smallest are green.
GreenPartition green_partition(std::uint64_t h, WatermarkKey key, double gamma,
                               const Vocab& vocab);

/// One tournament layer bit: LSB of prf(key, h, layer, token).
inline bool g_value(std::uint64_t h, WatermarkKey key, std::uint32_t layer,
                    Token token) {
    return (prf(key.key, h, layer, token) & 1ull) != 0;
}

// ---------------------------------------------------------------------------
// Read-mostly memoization. Shared across generation and detection workers.

/// Process-unique ids let thread-local pointer memos key cache instances
/// without dangling across instance lifetimes.
std::uint64_t next_cache_id();

class GreenCache {
public:
    GreenCache(WatermarkKey key, double gamma, Vocab vocab, bool complement = false)
        : key_(key), gamma_(gamma), vocab_(vocab), complement_(complement),
          id_(next_cache_id()) {}

    const GreenPartition& get(std::uint64_t h) const;

    WatermarkKey key() const { return key_; }
    double gamma() const { return complement_ ? 1.0 - gamma_ : gamma_; }
    const Vocab& vocab() const { return vocab_; }

private:
    const GreenPartition& get_locked(std::uint64_t h) const;

    WatermarkKey key_;
    double gamma_;
    Vocab vocab_;
    bool complement_;
    std::uint64_t id_;
    mutable std::mutex mu_;
    mutable std::unordered_map<std::uint64_t, std::unique_ptr<GreenPartition>> cache_;
};

/// g-vectors for all m layers at one hash, packed one byte per (layer, token).
class GCache {
public:
    GCache(WatermarkKey key, std::uint32_t layers, Vocab vocab)
        : key_(key), layers_(layers), vocab_(vocab), id_(next_cache_id()) {}

    /// Row pointer, layout [layer][token], values 0.0/1.0 (doubles keep the
    /// tournament inner loop branch-free).
    const double* get(std::uint64_t h) const;

    std::uint32_t layers() const { return layers_; }
    const Vocab& vocab() const { return vocab_; }

private:
    const double* get_locked(std::uint64_t h) const;

    WatermarkKey key_;
    std::uint32_t layers_;
    Vocab vocab_;
    std::uint64_t id_;
    mutable std::mutex mu_;
    mutable std::unordered_map<std::uint64_t, std::unique_ptr<double[]>> cache_;
};

}  // namespace wmlab
