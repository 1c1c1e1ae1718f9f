#pragma once

/**
 * Watermark stealing: estimate the token preferences a watermark imposes
 * by comparing the trained student W with the original student O, averaged
 * over corpus contexts sharing a trailing prefix.
 *
 * Per-token scores d follow the half-clamped ratio rule (codomain
 * {0} U (0.5, 1]); windowed scores only exist for prefixes whose corpus
 * frequency clears theta, and enter the final confidence D weighted by a
 * log-frequency ratio. A RuleTable stores the global row densely and the
 * windowed rows sparsely with the weight already applied, so a decode-time
 * lookup is a plain sum over matching rows.
 */

#include <cstdint>
#include <iosfwd>
#include <span>
#include <unordered_map>
#include <vector>

#include "wmlab/core.hpp"
#include "wmlab/lm.hpp"

namespace wmlab {

struct PrefixStats {
    struct PerK {
        std::unordered_map<std::uint64_t, std::uint64_t> counts;  // k-gram key
        std::uint64_t total = 0;   // positions counted for this k
        double max_freq = 0.0;
    };
    std::vector<PerK> per_k;  // index k-1, k = 1..n_prime-1

    double freq(std::uint32_t k, std::uint64_t key) const {
        const auto& pk = per_k.at(k - 1);
        auto it = pk.counts.find(key);
        if (it == pk.counts.end() || pk.total == 0) return 0.0;
        return static_cast<double>(it->second) / static_cast<double>(pk.total);
    }
};

/// Frequencies of trailing k-grams over continuation positions, k=1..n'-1.
PrefixStats prefix_frequencies(const Corpus& corpus, std::uint32_t n_prime);

/// Mean of next_dist(model, context) over every continuation position of
/// the corpus whose trailing tokens equal prefix. Rejects absent prefixes.
Dist avg_next_dist(const NGramModel& model, const Corpus& corpus,
                   std::span<const Token> prefix);

/// Eq-8 shift score: 0.5*min(2, pW/pO) when pW > pO, else 0.
inline double d_score(double pW, double pO) {
    if (!(pO > 0.0)) throw std::invalid_argument("d_score: pO must be > 0");
    if (pW <= pO) return 0.0;
    const double r = pW / pO;
    return 0.5 * (r < 2.0 ? r : 2.0);
}

/// Global (prefix-independent) scores from position-averaged distributions.
std::vector<double> global_d(const NGramModel& model_o, const NGramModel& model_w,
                             const Corpus& corpus);

/// Log-frequency prefix weight; 0 at or below theta. Rejects max_f = 1.
double weight(double f, double max_f, double alpha, double theta);

struct RuleTable {
    std::uint32_t vocab_size = 0;
    std::uint32_t n_prime = 1;
    double theta = 0.0;
    double alpha = 0.0;

    std::vector<double> global;  // d(x), dense over tokens

    struct Row {
        std::vector<Token> toks;    // sorted
        std::vector<double> vals;   // weight(prefix) * d(x; prefix), > 0
    };
    /// windowed[k-1]: k-gram prefix key -> weighted row
    std::vector<std::unordered_map<std::uint64_t, Row>> windowed;

    /// Composed Eq-9 confidence for token x with the trailing window
    /// (up to n'-1 tokens; shorter windows use the suffixes they have).
    double lookup(Token x, std::span<const Token> window) const;

    /// Adds the full composed row for the window into out (size |V|).
    void accumulate_row(std::span<const Token> window, std::span<double> out) const;

    std::size_t windowed_entries() const;

    /// `window_len,prefix_tokens,token,D` rows, sorted, with a header.
    void write_csv(std::ostream& os) const;
    static RuleTable read_csv(std::istream& is, std::uint32_t vocab_size);
};

/// Full stealing pipeline: global row plus weighted windowed rows for
/// every prefix with freq > theta (entries kept only where d > 0).
RuleTable aggregate(const NGramModel& model_o, const NGramModel& model_w,
                    const Corpus& corpus, std::uint32_t n_prime, double theta,
                    double alpha);

}  // namespace wmlab
