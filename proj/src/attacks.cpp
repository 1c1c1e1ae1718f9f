#include "wmlab/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "wmlab/parallel.hpp"

namespace wmlab {

namespace {

/// softmax(log(mix) - delta' * D-row) without leaving probability space.
Dist biased_mixture(const Dist& mix, std::span<const Token> ctx,
                    const RuleTable& rules, double delta_prime) {
    const std::size_t n = mix.size();
    std::vector<double> bias(n, 0.0);
    const std::size_t w = std::min<std::size_t>(ctx.size(), rules.n_prime - 1);
    rules.accumulate_row(ctx.subspan(ctx.size() - w), bias);

    Dist out;
    out.probs.resize(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        out.probs[i] = mix.probs[i] * std::exp(-delta_prime * bias[i]);
        total += out.probs[i];
    }
    if (!(total > 0.0)) throw std::runtime_error("biased_mixture: zero mass");
    for (double& p : out.probs) p /= total;
    return out;
}

}  // namespace

Corpus paraphrase(const Corpus& corpus, const ParaphraseSpec& spec,
                  std::uint64_t seed, std::uint32_t workers) {
    if (!spec.paraphraser) throw std::invalid_argument("paraphrase: no paraphraser");
    if (!(spec.lambda >= 0.0 && spec.lambda <= 1.0))
        throw std::invalid_argument("paraphrase: lambda must be in [0,1]");
    if (spec.paraphraser->vocab().size != corpus.vocab.size)
        throw std::invalid_argument("paraphrase: vocab mismatch");
    if (spec.inverse && !(spec.inverse->delta_prime >= 0.0))
        throw std::invalid_argument("paraphrase: delta_prime must be >= 0");

    Corpus out;
    out.vocab = corpus.vocab;
    out.provenance = spec.inverse ? Provenance::ParaphrasedTP : Provenance::ParaphrasedUP;
    out.seqs.resize(corpus.seqs.size());

    const NGramModel& R = *spec.paraphraser;
    parallel_for(corpus.seqs.size(), workers, [&](std::size_t si) {
        const TokenSeq& src = corpus.seqs[si];
        const std::uint64_t sseed = derive_sub(seed, "para", si);
        TokenSeq dst;
        dst.prompt_len = src.prompt_len;
        dst.tokens.assign(src.tokens.begin(), src.tokens.begin() + src.prompt_len);
        dst.tokens.reserve(src.tokens.size());

        for (std::size_t i = src.prompt_len; i < src.tokens.size(); ++i) {
            std::span<const Token> ctx(dst.tokens);
            Dist mix = R.next_dist(ctx);
            for (double& p : mix.probs) p *= (1.0 - spec.lambda);
            mix.probs[src.tokens[i]] += spec.lambda;
            if (spec.inverse)
                mix = biased_mixture(mix, ctx, *spec.inverse->rules,
                                     spec.inverse->delta_prime);
            dst.tokens.push_back(
                sample(mix, derive_sub(sseed, "step", i - src.prompt_len)));
        }
        out.seqs[si] = std::move(dst);
    });
    return out;
}

LogitVec wn_process(const LogitVec& l, std::span<const Token> window,
                    const RuleTable& rules, double delta_prime) {
    if (!(delta_prime >= 0.0))
        throw std::invalid_argument("wn_process: delta_prime must be >= 0");
    if (l.size() != rules.vocab_size)
        throw std::invalid_argument("wn_process: logit size != vocab");

    std::vector<double> bias(l.size(), 0.0);
    rules.accumulate_row(window, bias);
    LogitVec out = l;
    for (std::size_t i = 0; i < out.logits.size(); ++i)
        out.logits[i] -= bias[i] * delta_prime;
    return out;
}

Corpus mix_corpora(std::span<const Corpus> sources, const MixSpec& spec,
                   std::size_t total_sequences, std::uint64_t seed) {
    if (sources.empty()) throw std::invalid_argument("mix_corpora: no sources");
    if (spec.shares.size() != sources.size())
        throw std::invalid_argument("mix_corpora: shares/sources size mismatch");
    double sum = std::accumulate(spec.shares.begin(), spec.shares.end(), 0.0);
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("mix_corpora: shares must sum to 1");
    for (std::size_t i = 1; i < sources.size(); ++i)
        if (sources[i].vocab.size != sources[0].vocab.size)
            throw std::invalid_argument("mix_corpora: vocab mismatch");

    // largest-remainder apportionment
    const std::size_t k = sources.size();
    std::vector<std::size_t> take(k);
    std::vector<std::pair<double, std::size_t>> rem(k);
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < k; ++i) {
        const double exact = spec.shares[i] * static_cast<double>(total_sequences);
        take[i] = static_cast<std::size_t>(exact);
        rem[i] = {exact - static_cast<double>(take[i]), i};
        assigned += take[i];
    }
    std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t j = 0; assigned < total_sequences; ++j, ++assigned)
        ++take[rem[j % k].second];

    Corpus out;
    out.vocab = sources[0].vocab;
    out.provenance = Provenance::Mixed;
    for (std::size_t i = 0; i < k; ++i) {
        const auto& src = sources[i].seqs;
        if (take[i] > src.size())
            throw std::invalid_argument("mix_corpora: source " + std::to_string(i) +
                                        " smaller than its share demands");
        // partial Fisher-Yates to pick take[i] indices, then restore order
        std::vector<std::size_t> idx(src.size());
        std::iota(idx.begin(), idx.end(), 0);
        RngStream rng(derive_sub(seed, "mix", i));
        for (std::size_t j = 0; j < take[i]; ++j) {
            const std::size_t r = j + static_cast<std::size_t>(
                                          rng.next_u64() % (idx.size() - j));
            std::swap(idx[j], idx[r]);
        }
        std::vector<std::size_t> chosen(idx.begin(), idx.begin() + take[i]);
        std::sort(chosen.begin(), chosen.end());
        for (std::size_t j : chosen) out.seqs.push_back(src[j]);
    }
    return out;
}

WnProcessor::WnProcessor(const RuleTable& rules, double delta_prime)
    : rules_(&rules), delta_prime_(delta_prime) {
    if (!(delta_prime >= 0.0))
        throw std::invalid_argument("WnProcessor: delta_prime must be >= 0");
}

Dist WnProcessor::process(const Dist& d, std::span<const Token> ctx) {
    const std::size_t w = std::min<std::size_t>(ctx.size(), rules_->n_prime - 1);
    std::vector<double> bias(d.size(), 0.0);
    rules_->accumulate_row(ctx.subspan(ctx.size() - w), bias);

    Dist out;
    out.probs.resize(d.size());
    double total = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        out.probs[i] = d.probs[i] * std::exp(-delta_prime_ * bias[i]);
        total += out.probs[i];
    }
    for (double& p : out.probs) p /= total;
    return out;
}

std::unique_ptr<StepProcessor> WnProcessor::clone() const {
    return std::make_unique<WnProcessor>(*rules_, delta_prime_);
}

Dist WnView::next_dist(std::span<const Token> ctx) const {
    Dist d = model_->next_dist(ctx);
    WnProcessor p(*rules_, delta_prime_);
    return p.process(d, ctx);
}

}  // namespace wmlab
