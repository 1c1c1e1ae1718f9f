#pragma once

/**
 * Toy language-model substrate.
 *
 * NGramModel is an order-k conditional categorical model. Two storages
 * share the contract next_dist(ctx) = (count + beta) / (total + beta*|V|):
 *
 *  - fitted: sparse per-context count rows accumulated from a corpus
 *    (the "distillation" step is nothing but this fit);
 *  - dirichlet: the seeded synthetic teacher whose context rows are
 *    symmetric-Dirichlet draws, materialized lazily and deterministically
 *    from (seed, context) so bit-reproducibility is independent of visit
 *    order and worker count.
 *
 * Generation runs the autoregressive loop with an optional StepProcessor
 * chain (watermarks, inverse-watermark attacks) applied to each step's
 * distribution before sampling.
 */

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "wmlab/core.hpp"
#include "wmlab/schemes.hpp"

namespace wmlab {

enum class Provenance {
    TeacherWatermarked,
    TeacherClean,
    ParaphrasedUP,
    ParaphrasedTP,
    Mixed,
};

std::string provenance_name(Provenance p);

struct Corpus {
    Vocab vocab{2};
    std::vector<TokenSeq> seqs;
    Provenance provenance = Provenance::TeacherClean;

    /// Continuation positions across all sequences.
    std::size_t continuation_tokens() const {
        std::size_t n = 0;
        for (const auto& s : seqs) n += s.size() - s.prompt_len;
        return n;
    }
};

/// `5 17 3 | 9 12 4 4` per line; prompt before the bar.
void write_corpus(std::ostream& os, const Corpus& c);
Corpus read_corpus(std::istream& is, Vocab vocab);

/// Injective variable-length packing of a context window into a key.
inline std::uint64_t pack_ctx(std::span<const Token> ctx, std::uint32_t vocab_size) {
    std::uint64_t k = 0;
    const std::uint64_t base = vocab_size + 1ull;
    for (Token t : ctx) k = k * base + (t + 1ull);
    return k;
}

/// Source of conditional next-token distributions; lets knowledge metrics
/// treat a model and a decode-time-transformed model uniformly.
class DistSource {
public:
    virtual ~DistSource() = default;
    virtual Dist next_dist(std::span<const Token> ctx) const = 0;
};

class NGramModel final : public DistSource {
public:
    /// Maximum-likelihood counts over every continuation position of the
    /// corpus (prompt tokens serve as context only). Positions with fewer
    /// than order-1 preceding tokens are skipped.
    static NGramModel fit(const Corpus& corpus, std::uint32_t order, double beta);

    /// Synthetic teacher: each context row is a symmetric Dirichlet(skew)
    /// draw seeded by (seed, context key).
    static NGramModel dirichlet_teacher(Vocab vocab, std::uint32_t order,
                                        std::uint64_t seed, double skew);

    Dist next_dist(std::span<const Token> ctx) const override;

    std::uint32_t order() const { return order_; }
    double beta() const { return beta_; }
    const Vocab& vocab() const { return vocab_; }
    bool is_teacher() const { return kind_ == Kind::Dirichlet; }

    /// Fitted-model snapshot, WMLM binary layout (little-endian):
    ///   magic "WMLM" | u32 version=1 | u32 order | u32 vocab | f64 beta |
    ///   u64 n_triples | n_triples * { (order-1) x u32 context, u32 token,
    ///   f64 count } in (context, token) sorted order.
    void save(std::ostream& os) const;
    static NGramModel load(std::istream& is);

    /// Total recorded count mass for a context (0 when unseen).
    double context_total(std::span<const Token> ctx) const;

private:
    enum class Kind { Fitted, Dirichlet };

    struct Row {
        std::vector<Token> toks;       // sorted
        std::vector<double> counts;    // parallel to toks
        double total = 0.0;
    };

    NGramModel() = default;

    Dist row_dist(const Row* row) const;
    const float* teacher_row(std::uint64_t key) const;

    Kind kind_ = Kind::Fitted;
    std::uint32_t order_ = 1;
    double beta_ = 0.01;
    Vocab vocab_{2};

    // fitted
    std::unordered_map<std::uint64_t, Row> rows_;

    // dirichlet teacher
    std::uint64_t seed_ = 0;
    double skew_ = 1.0;
    static constexpr std::size_t kShards = 64;
    struct Shard {
        std::mutex mu;
        std::unordered_map<std::uint64_t, std::unique_ptr<float[]>> rows;
    };
    struct TeacherCache {
        std::uint64_t id;
        std::array<Shard, kShards> shards;
    };
    std::shared_ptr<TeacherCache> tcache_;

    const float* teacher_row_locked(std::uint64_t key) const;
};

/// Autoregressive generation: at each step, the model's next_dist is pushed
/// through the processor chain in order, then sampled with a per-step
/// derived seed. begin_sequence() is called on every processor first.
TokenSeq generate(const NGramModel& model, const TokenSeq& prompt,
                  std::size_t length, std::span<StepProcessor* const> chain,
                  std::uint64_t seed);

inline TokenSeq generate(const NGramModel& model, const TokenSeq& prompt,
                         std::size_t length, std::uint64_t seed) {
    return generate(model, prompt, length, {}, seed);
}

/// Mean cross-entropy (nats/token) of q against p over the context set.
double cross_entropy(const DistSource& p, const DistSource& q,
                     std::span<const std::vector<Token>> contexts);

/// Mean KL(p || q) in nats over the context set.
double kl(const DistSource& p, const DistSource& q,
          std::span<const std::vector<Token>> contexts);

}  // namespace wmlab
