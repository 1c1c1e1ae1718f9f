#pragma once

/**
 * Watermark embedding.
 *
 * KGW adds a constant bias to green-list logits; SynthID-Text runs an
 * m-layer tournament over keyed binary g-functions. The tournament is
 * applied through its exact per-layer closed form (identical in law to
 * the pairwise Monte Carlo tournament, which is kept for small m as an
 * oracle). Repeated context masking skips the transform when a context
 * hash has been seen recently.
 *
 * Both schemes plug into generation as StepProcessor instances that map
 * the model's next-token distribution to the watermarked one; sampling
 * happens outside.
 */

#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <span>
#include <unordered_set>

#include "wmlab/core.hpp"
#include "wmlab/hashing.hpp"

namespace wmlab {

enum class SchemeKind { KGW, SynthID };

struct WatermarkSpec {
    SchemeKind kind = SchemeKind::KGW;
    std::uint32_t n = 1;  // window size; rule uses the n-1 preceding tokens
    WatermarkKey key;
    HashKind hash_kind = HashKind::Multiplicative;
    double delta = 3.0;     // KGW
    double gamma = 0.5;     // KGW
    std::uint32_t m = 30;   // SynthID layers
    std::uint32_t masking_capacity = 0;  // 0 = masking off
    bool complement = false;  // use the complemented green partition (multi-source case 1)

    bool masking_on() const { return masking_capacity > 0; }
};

/// Hash of the rule context at the current position: the sentinel for n=1,
/// otherwise the window hash of the trailing n-1 tokens of ctx.
/// Rejects contexts shorter than the window.
std::uint64_t rule_hash(std::span<const Token> ctx, const WatermarkSpec& spec,
                        const Vocab& vocab);

/// Insertion-ordered set of (key, hash) entries with FIFO eviction.
/// Membership is exact for retained entries; re-seeing a member does not
/// refresh its position.
class ContextMask {
public:
    explicit ContextMask(std::size_t capacity);

    /// True if the entry was already present (watermark must be skipped).
    /// Otherwise inserts it, evicting the oldest entry on overflow.
    bool seen_or_insert(std::uint64_t key, std::uint64_t h);

    std::size_t size() const { return order_.size(); }
    std::size_t capacity() const { return capacity_; }
    void clear();

private:
    std::size_t capacity_;
    std::deque<std::uint64_t> order_;
    std::unordered_set<std::uint64_t> present_;
};

// ---------------------------------------------------------------------------
// KGW

/// Eq-style logit bias: l'_i = l_i + delta for green i. prefix_window must
/// hold exactly n-1 tokens (empty for n=1, where the sentinel hash is used).
LogitVec kgw_process(const LogitVec& l, std::span<const Token> prefix_window,
                     const WatermarkSpec& spec, const Vocab& vocab);

// ---------------------------------------------------------------------------
// SynthID tournament

/// One exact tournament layer: with q0 the mass on g=0 tokens,
/// d'(x) = d(x)*(1+q0) if g(x)=1 else d(x)*q0. Output sums to 1.
Dist synthid_layer_exact(const Dist& d, std::span<const std::uint8_t> gbits);

/// Full m-layer exact chain for the rule context, then one sample.
Token synthid_sample(const Dist& d, std::span<const Token> prefix_window,
                     const WatermarkSpec& spec, const Vocab& vocab,
                     std::uint64_t seed);

/// The distribution the exact chain samples from (g rows via cache).
Dist synthid_adjusted(const Dist& d, std::uint64_t h, const GCache& g);

/// Monte Carlo pairwise tournament oracle: samples 2^m candidates and runs
/// the bracket with uniform random tie-breaking. For small m only.
Token synthid_sample_mc(const Dist& d, std::span<const Token> prefix_window,
                        const WatermarkSpec& spec, const Vocab& vocab,
                        std::uint64_t seed);

// ---------------------------------------------------------------------------
// Generation-time processor chain

/// Transforms the model's next-token distribution at one step of
/// autoregressive generation. ctx holds every token before the position.
/// Stateful processors (context masking) are per-sequence: the generation
/// driver calls begin_sequence() at each sequence start and clone() when
/// fanning out across workers.
class StepProcessor {
public:
    virtual ~StepProcessor() = default;
    virtual Dist process(const Dist& d, std::span<const Token> ctx) = 0;
    virtual void begin_sequence() {}
    virtual std::unique_ptr<StepProcessor> clone() const = 0;
};

class KgwProcessor final : public StepProcessor {
public:
    KgwProcessor(const WatermarkSpec& spec, Vocab vocab,
                 std::shared_ptr<GreenCache> cache = nullptr);

    Dist process(const Dist& d, std::span<const Token> ctx) override;
    void begin_sequence() override;
    std::unique_ptr<StepProcessor> clone() const override;

private:
    WatermarkSpec spec_;
    Vocab vocab_;
    std::shared_ptr<GreenCache> cache_;
    std::optional<ContextMask> mask_;
};

class SynthIdProcessor final : public StepProcessor {
public:
    SynthIdProcessor(const WatermarkSpec& spec, Vocab vocab,
                     std::shared_ptr<GCache> cache = nullptr);

    Dist process(const Dist& d, std::span<const Token> ctx) override;
    void begin_sequence() override;
    std::unique_ptr<StepProcessor> clone() const override;

private:
    WatermarkSpec spec_;
    Vocab vocab_;
    std::shared_ptr<GCache> cache_;
    std::optional<ContextMask> mask_;
};

/// Builds the processor for a spec with shared rule caches.
std::unique_ptr<StepProcessor> make_watermark_processor(const WatermarkSpec& spec,
                                                        const Vocab& vocab);

}  // namespace wmlab
