#include "wmlab/core.hpp"

#include <algorithm>

namespace wmlab {

Dist softmax(const LogitVec& l, double temperature) {
    if (!(temperature > 0.0))
        throw std::invalid_argument("softmax: temperature must be > 0");
    if (l.logits.empty())
        throw std::invalid_argument("softmax: empty logit vector");

    double mx = -std::numeric_limits<double>::infinity();
    for (double v : l.logits) {
        if (!std::isfinite(v))
            throw std::invalid_argument("softmax: non-finite logit");
        mx = std::max(mx, v);
    }

    Dist out;
    out.probs.resize(l.logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < l.logits.size(); ++i) {
        double e = std::exp((l.logits[i] - mx) / temperature);
        out.probs[i] = e;
        total += e;
    }
    for (double& p : out.probs) p /= total;
    return out;
}

Token sample(const Dist& d, std::uint64_t seed) {
    double total = 0.0;
    for (double p : d.probs) {
        if (p < 0.0) throw std::invalid_argument("sample: negative probability");
        total += p;
    }
    if (!(total > 0.0))
        throw std::invalid_argument("sample: all-zero distribution");

    const double target = unit_uniform(seed) * total;
    double cum = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < d.probs.size(); ++i) {
        if (d.probs[i] > 0.0) last_positive = i;
        cum += d.probs[i];
        if (target < cum && d.probs[i] > 0.0)
            return static_cast<Token>(i);
    }
    // Rounding pushed target past the final cumulative value.
    return static_cast<Token>(last_positive);
}

double RngStream::next_normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u, v, s;
    do {
        u = 2.0 * next_unit() - 1.0;
        v = 2.0 * next_unit() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
}

double RngStream::next_gamma(double shape) {
    if (!(shape > 0.0))
        throw std::invalid_argument("next_gamma: shape must be > 0");
    if (shape < 1.0) {
        // Boost: Gamma(a) = Gamma(a+1) * U^(1/a)
        const double g = next_gamma(shape + 1.0);
        double u = next_unit();
        while (u == 0.0) u = next_unit();
        return g * std::pow(u, 1.0 / shape);
    }
    // Marsaglia & Tsang (2000)
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            x = next_normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = next_unit();
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
            return d * v;
    }
}

}  // namespace wmlab
