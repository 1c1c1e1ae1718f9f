#pragma once

/**
 * Watermark removal attacks.
 *
 * UP/TP rewrite a training corpus position-by-position through a
 * fidelity mixture with a paraphraser model; TP additionally subtracts
 * the stolen-rule confidence times delta' from the mixture logits before
 * sampling. WN applies the same inverse bias at the trained student's
 * decode time; its effective next-token distribution is available in
 * closed form (WnView), so knowledge metrics need no sampling.
 */

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "wmlab/core.hpp"
#include "wmlab/lm.hpp"
#include "wmlab/steal.hpp"

namespace wmlab {

struct InverseSpec {
    const RuleTable* rules = nullptr;
    double delta_prime = 2.5;
};

struct ParaphraseSpec {
    const NGramModel* paraphraser = nullptr;
    double lambda = 0.5;               // fidelity: weight of the original token
    std::optional<InverseSpec> inverse;  // present = TP, absent = UP
};

/// Regenerates every continuation token from
/// lambda*pointmass(original) + (1-lambda)*paraphraser(generated context),
/// with the optional inverse-watermark bias applied in logit space.
/// Prompts are preserved verbatim; output keeps per-position alignment.
Corpus paraphrase(const Corpus& corpus, const ParaphraseSpec& spec,
                  std::uint64_t seed, std::uint32_t workers = 1);

/// Eq-5 logit neutralization: l'(x) = l(x) - D(x; window) * delta'.
LogitVec wn_process(const LogitVec& l, std::span<const Token> window,
                    const RuleTable& rules, double delta_prime);

struct MixSpec {
    std::vector<double> shares;  // one per source, sums to 1
};

/// Stratified deterministic sampling without replacement. Share counts use
/// largest-remainder rounding so they sum to total_sequences exactly.
Corpus mix_corpora(std::span<const Corpus> sources, const MixSpec& spec,
                   std::size_t total_sequences, std::uint64_t seed);

/// Decode-time watermark neutralization as a generation processor.
class WnProcessor final : public StepProcessor {
public:
    WnProcessor(const RuleTable& rules, double delta_prime);
    Dist process(const Dist& d, std::span<const Token> ctx) override;
    std::unique_ptr<StepProcessor> clone() const override;

private:
    const RuleTable* rules_;
    double delta_prime_;
};

/// Closed-form WN-student: softmax(log p_model - delta' * D) per context.
class WnView final : public DistSource {
public:
    WnView(const NGramModel& model, const RuleTable& rules, double delta_prime)
        : model_(&model), rules_(&rules), delta_prime_(delta_prime) {}

    Dist next_dist(std::span<const Token> ctx) const override;

private:
    const NGramModel* model_;
    const RuleTable* rules_;
    double delta_prime_;
};

}  // namespace wmlab
