#include "wmlab/hashing.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace wmlab {

std::uint64_t window_hash(std::span<const Token> window, HashKind kind,
                          const Vocab& vocab) {
    if (window.empty())
        throw std::invalid_argument(
            "window_hash: empty window (n=1 uses the sentinel hash)");

    switch (kind) {
        case HashKind::Multiplicative: {
            std::uint64_t h = 1;
            for (Token t : window)
                h = (h * ((static_cast<std::uint64_t>(t) + 2) % vocab.size)) % vocab.size;
            return h;
        }
        case HashKind::MinToken: {
            Token m = window[0];
            for (Token t : window) m = std::min(m, t);
            return m;
        }
        case HashKind::SkipLeftmost:
            return window[0];
    }
    throw std::logic_error("window_hash: unknown kind");
}

GreenPartition green_partition(std::uint64_t h, WatermarkKey key, double gamma,
                               const Vocab& vocab) {
    if (!(gamma > 0.0 && gamma < 1.0))
        throw std::invalid_argument("green_partition: gamma must be in (0,1)");

    const std::size_t n = vocab.size;
    const std::size_t n_green =
        static_cast<std::size_t>(gamma * static_cast<double>(n));

    std::vector<std::pair<std::uint64_t, Token>> ranks(n);
    for (std::size_t i = 0; i < n; ++i)
        ranks[i] = {prf(key.key, h, static_cast<std::uint64_t>(i)),
                    static_cast<Token>(i)};
    std::nth_element(ranks.begin(), ranks.begin() + n_green, ranks.end());

    GreenPartition out;
    out.gamma = gamma;
    out.green.assign(n, false);
    for (std::size_t i = 0; i < n_green; ++i) out.green[ranks[i].second] = true;
    return out;
}

std::uint64_t next_cache_id() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1);
}

namespace {

/// Thread-local memo of cache id -> (h -> entry pointer). Entries are
/// stable for the owning cache's lifetime; ids are never reused.
template <typename T>
std::unordered_map<std::uint64_t, std::unordered_map<std::uint64_t, T*>>&
memo_map() {
    thread_local std::unordered_map<std::uint64_t,
                                    std::unordered_map<std::uint64_t, T*>>
        memo;
    return memo;
}

}  // namespace

const GreenPartition& GreenCache::get(std::uint64_t h) const {
    auto& mine = memo_map<const GreenPartition>()[id_];
    auto it = mine.find(h);
    if (it != mine.end()) return *it->second;
    const GreenPartition& out = get_locked(h);
    mine.emplace(h, &out);
    return out;
}

const GreenPartition& GreenCache::get_locked(std::uint64_t h) const {
    std::lock_guard lock(mu_);
    auto it = cache_.find(h);
    if (it == cache_.end()) {
        auto part = std::make_unique<GreenPartition>(
            green_partition(h, key_, gamma_, vocab_));
        if (complement_) *part = part->complemented();
        it = cache_.emplace(h, std::move(part)).first;
    }
    return *it->second;
}

const double* GCache::get(std::uint64_t h) const {
    auto& mine = memo_map<const double>()[id_];
    auto it = mine.find(h);
    if (it != mine.end()) return it->second;
    const double* out = get_locked(h);
    mine.emplace(h, out);
    return out;
}

const double* GCache::get_locked(std::uint64_t h) const {
    std::lock_guard lock(mu_);
    auto it = cache_.find(h);
    if (it == cache_.end()) {
        const std::size_t n = vocab_.size;
        auto row = std::make_unique<double[]>(layers_ * n);
        for (std::uint32_t l = 0; l < layers_; ++l)
            for (std::size_t t = 0; t < n; ++t)
                row[l * n + t] = g_value(h, key_, l + 1, static_cast<Token>(t)) ? 1.0 : 0.0;
        it = cache_.emplace(h, std::move(row)).first;
    }
    return it->second.get();
}

}  // namespace wmlab
