#include "wmlab/schemes.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace wmlab {

std::uint64_t rule_hash(std::span<const Token> ctx, const WatermarkSpec& spec,
                        const Vocab& vocab) {
    if (spec.n == 1) return sentinel_hash(spec.key);
    const std::size_t w = spec.n - 1;
    if (ctx.size() < w)
        throw std::invalid_argument("rule_hash: context shorter than the window");
    return window_hash(ctx.subspan(ctx.size() - w), spec.hash_kind, vocab);
}

ContextMask::ContextMask(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0)
        throw std::invalid_argument("ContextMask: capacity must be >= 1");
}

bool ContextMask::seen_or_insert(std::uint64_t key, std::uint64_t h) {
    const std::uint64_t entry = prf(key, h);
    if (present_.count(entry)) return true;
    if (order_.size() == capacity_) {
        present_.erase(order_.front());
        order_.pop_front();
    }
    order_.push_back(entry);
    present_.insert(entry);
    return false;
}

void ContextMask::clear() {
    order_.clear();
    present_.clear();
}

// ---------------------------------------------------------------------------

LogitVec kgw_process(const LogitVec& l, std::span<const Token> prefix_window,
                     const WatermarkSpec& spec, const Vocab& vocab) {
    if (spec.kind != SchemeKind::KGW)
        throw std::invalid_argument("kgw_process: spec is not KGW");
    if (l.size() != vocab.size)
        throw std::invalid_argument("kgw_process: logit size != |V|");
    const std::size_t want = spec.n >= 2 ? spec.n - 1 : 0;
    if (prefix_window.size() != want)
        throw std::invalid_argument("kgw_process: window length mismatch");

    const std::uint64_t h = spec.n == 1
                                ? sentinel_hash(spec.key)
                                : window_hash(prefix_window, spec.hash_kind, vocab);
    GreenPartition part = green_partition(h, spec.key, spec.gamma, vocab);
    if (spec.complement) part = part.complemented();

    LogitVec out = l;
    for (std::size_t i = 0; i < out.logits.size(); ++i)
        if (part.green[i]) out.logits[i] += spec.delta;
    return out;
}

// ---------------------------------------------------------------------------

Dist synthid_layer_exact(const Dist& d, std::span<const std::uint8_t> gbits) {
    if (gbits.size() != d.size())
        throw std::invalid_argument("synthid_layer_exact: size mismatch");

    double q0 = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i)
        if (!gbits[i]) q0 += d.probs[i];

    Dist out;
    out.probs.resize(d.size());
    double total = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        const double f = gbits[i] ? 1.0 + q0 : q0;
        out.probs[i] = d.probs[i] * f;
        total += out.probs[i];
    }
    // total equals 1 analytically; renormalize away float drift
    for (double& p : out.probs) p /= total;
    return out;
}

Dist synthid_adjusted(const Dist& d, std::uint64_t h, const GCache& g) {
    const std::size_t n = d.size();
    const double* rows = g.get(h);
    Dist cur = d;
    // in-place branch-free layer updates; the per-token multiplier is
    // q0 + bit (1+q0 for g=1, q0 for g=0); renormalize per layer
    for (std::uint32_t l = 0; l < g.layers(); ++l) {
        const double* bits = rows + static_cast<std::size_t>(l) * n;
        double q0 = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            q0 += cur.probs[i] * (1.0 - bits[i]);
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            cur.probs[i] *= q0 + bits[i];
            total += cur.probs[i];
        }
        const double inv = 1.0 / total;
        for (double& p : cur.probs) p *= inv;
    }
    return cur;
}

Token synthid_sample(const Dist& d, std::span<const Token> prefix_window,
                     const WatermarkSpec& spec, const Vocab& vocab,
                     std::uint64_t seed) {
    if (spec.kind != SchemeKind::SynthID)
        throw std::invalid_argument("synthid_sample: spec is not SynthID");
    if (spec.m == 0) return sample(d, seed);

    const std::uint64_t h = spec.n == 1
                                ? sentinel_hash(spec.key)
                                : window_hash(prefix_window, spec.hash_kind, vocab);
    GCache g(spec.key, spec.m, vocab);
    return sample(synthid_adjusted(d, h, g), seed);
}

Token synthid_sample_mc(const Dist& d, std::span<const Token> prefix_window,
                        const WatermarkSpec& spec, const Vocab& vocab,
                        std::uint64_t seed) {
    if (spec.kind != SchemeKind::SynthID)
        throw std::invalid_argument("synthid_sample_mc: spec is not SynthID");
    if (spec.m == 0) return sample(d, seed);
    if (spec.m > 16)
        throw std::invalid_argument("synthid_sample_mc: m too large for 2^m candidates");

    const std::uint64_t h = spec.n == 1
                                ? sentinel_hash(spec.key)
                                : window_hash(prefix_window, spec.hash_kind, vocab);

    std::vector<Token> pool(1ull << spec.m);
    for (std::size_t i = 0; i < pool.size(); ++i)
        pool[i] = sample(d, derive_sub(seed, "cand", i));

    std::uint64_t tie_ctr = 0;
    for (std::uint32_t l = 1; l <= spec.m; ++l) {
        std::vector<Token> next;
        next.reserve(pool.size() / 2);
        for (std::size_t i = 0; i + 1 < pool.size(); i += 2) {
            const Token a = pool[i], b = pool[i + 1];
            const bool ga = g_value(h, spec.key, l, a);
            const bool gb = g_value(h, spec.key, l, b);
            Token win;
            if (ga != gb) {
                win = ga ? a : b;
            } else {
                win = (mix64(derive_sub(seed, "tie", tie_ctr++)) & 1ull) ? a : b;
            }
            next.push_back(win);
        }
        pool = std::move(next);
    }
    return pool[0];
}

// ---------------------------------------------------------------------------

KgwProcessor::KgwProcessor(const WatermarkSpec& spec, Vocab vocab,
                           std::shared_ptr<GreenCache> cache)
    : spec_(spec), vocab_(vocab), cache_(std::move(cache)) {
    if (spec.kind != SchemeKind::KGW)
        throw std::invalid_argument("KgwProcessor: spec is not KGW");
    if (!cache_)
        cache_ = std::make_shared<GreenCache>(spec.key, spec.gamma, vocab,
                                              spec.complement);
    if (spec_.masking_on()) mask_.emplace(spec_.masking_capacity);
}

void KgwProcessor::begin_sequence() {
    if (mask_) mask_->clear();
}

Dist KgwProcessor::process(const Dist& d, std::span<const Token> ctx) {
    const std::uint64_t h = rule_hash(ctx, spec_, vocab_);
    if (mask_ && mask_->seen_or_insert(spec_.key.key, h)) return d;

    const GreenPartition& part = cache_->get(h);
    const double boost = std::exp(spec_.delta);
    Dist out;
    out.probs.resize(d.size());
    double total = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        out.probs[i] = part.green[i] ? d.probs[i] * boost : d.probs[i];
        total += out.probs[i];
    }
    for (double& p : out.probs) p /= total;
    return out;
}

std::unique_ptr<StepProcessor> KgwProcessor::clone() const {
    auto p = std::make_unique<KgwProcessor>(spec_, vocab_, cache_);
    return p;
}

SynthIdProcessor::SynthIdProcessor(const WatermarkSpec& spec, Vocab vocab,
                                   std::shared_ptr<GCache> cache)
    : spec_(spec), vocab_(vocab), cache_(std::move(cache)) {
    if (spec.kind != SchemeKind::SynthID)
        throw std::invalid_argument("SynthIdProcessor: spec is not SynthID");
    if (!cache_) cache_ = std::make_shared<GCache>(spec.key, spec.m, vocab);
    if (spec_.masking_on()) mask_.emplace(spec_.masking_capacity);
}

void SynthIdProcessor::begin_sequence() {
    if (mask_) mask_->clear();
}

Dist SynthIdProcessor::process(const Dist& d, std::span<const Token> ctx) {
    const std::uint64_t h = rule_hash(ctx, spec_, vocab_);
    if (mask_ && mask_->seen_or_insert(spec_.key.key, h)) return d;
    if (spec_.m == 0) return d;
    return synthid_adjusted(d, h, *cache_);
}

std::unique_ptr<StepProcessor> SynthIdProcessor::clone() const {
    return std::make_unique<SynthIdProcessor>(spec_, vocab_, cache_);
}

std::unique_ptr<StepProcessor> make_watermark_processor(const WatermarkSpec& spec,
                                                        const Vocab& vocab) {
    if (spec.kind == SchemeKind::KGW)
        return std::make_unique<KgwProcessor>(spec, vocab);
    return std::make_unique<SynthIdProcessor>(spec, vocab);
}

}  // namespace wmlab
