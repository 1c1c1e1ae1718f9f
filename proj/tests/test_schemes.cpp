#include <doctest.h>

#include <cmath>
#include <map>
#include <vector>

#include "wmlab/schemes.hpp"

using namespace wmlab;

namespace {

WatermarkSpec kgw_spec(std::uint32_t n, double delta = 3.0, double gamma = 0.5) {
    WatermarkSpec s;
    s.kind = SchemeKind::KGW;
    s.n = n;
    s.key.key = 0xABCDEF;
    s.delta = delta;
    s.gamma = gamma;
    return s;
}

WatermarkSpec synthid_spec(std::uint32_t n, std::uint32_t m) {
    WatermarkSpec s;
    s.kind = SchemeKind::SynthID;
    s.n = n;
    s.key.key = 0xABCDEF;
    s.m = m;
    return s;
}

}  // namespace

TEST_CASE("kgw_process: zero bias is the identity") {
    const Vocab v(16);
    LogitVec l;
    for (int i = 0; i < 16; ++i) l.logits.push_back(0.1 * i);
    std::vector<Token> win{3};
    const LogitVec out = kgw_process(l, win, kgw_spec(2, 0.0), v);
    CHECK(out.logits == l.logits);
}

TEST_CASE("kgw_process: adds delta exactly on green tokens") {
    const Vocab v(16);
    const auto spec = kgw_spec(2, 3.0);
    std::vector<Token> win{7};
    const std::uint64_t h = window_hash(win, spec.hash_kind, v);
    const GreenPartition part = green_partition(h, spec.key, spec.gamma, v);

    LogitVec l;
    for (int i = 0; i < 16; ++i) l.logits.push_back(1.0);
    const LogitVec out = kgw_process(l, win, spec, v);
    for (Token t = 0; t < 16; ++t)
        CHECK(out.logits[t] == doctest::Approx(part.is_green(t) ? 4.0 : 1.0));
}

TEST_CASE("kgw_process: post-softmax green mass for uniform logits") {
    const Vocab v(256);
    const auto spec = kgw_spec(1, 3.0, 0.5);
    LogitVec l;
    l.logits.assign(256, 0.7);
    const LogitVec out = kgw_process(l, {}, spec, v);
    const Dist d = softmax(out);
    const GreenPartition part =
        green_partition(sentinel_hash(spec.key), spec.key, 0.5, v);
    double green_mass = 0.0;
    for (Token t = 0; t < 256; ++t)
        if (part.is_green(t)) green_mass += d.probs[t];
    const double e3 = std::exp(3.0);
    CHECK(green_mass == doctest::Approx(0.5 * e3 / (0.5 * e3 + 0.5)).epsilon(1e-12));
    CHECK(green_mass == doctest::Approx(0.9525741268).epsilon(1e-9));
}

TEST_CASE("kgw_process: rejects a window of the wrong length") {
    const Vocab v(16);
    LogitVec l;
    l.logits.assign(16, 0.0);
    std::vector<Token> win{1, 2};
    CHECK_THROWS_AS(kgw_process(l, win, kgw_spec(2), v), std::invalid_argument);
    CHECK_THROWS_AS(kgw_process(l, win, kgw_spec(1), v), std::invalid_argument);
}

TEST_CASE("kgw_process: preserves pairwise differences within each color") {
    const Vocab v(32);
    const auto spec = kgw_spec(2, 2.5);
    std::vector<Token> win{9};
    RngStream rng(4);
    LogitVec l;
    for (int i = 0; i < 32; ++i) l.logits.push_back(rng.next_unit() * 6.0);
    const LogitVec out = kgw_process(l, win, spec, v);
    const std::uint64_t h = window_hash(win, spec.hash_kind, v);
    const GreenPartition part = green_partition(h, spec.key, spec.gamma, v);
    for (Token a = 0; a < 32; ++a)
        for (Token b = 0; b < 32; ++b)
            if (part.is_green(a) == part.is_green(b))
                CHECK(out.logits[a] - out.logits[b] ==
                      doctest::Approx(l.logits[a] - l.logits[b]).epsilon(1e-12));
}

// ---------------------------------------------------------------------------

namespace {

/// Brute-force oracle for one tournament layer: enumerate ordered candidate
/// pairs (x, y) ~ d x d; higher g advances, ties split evenly.
Dist layer_oracle(const Dist& d, const std::vector<std::uint8_t>& g) {
    Dist out;
    out.probs.assign(d.size(), 0.0);
    for (std::size_t x = 0; x < d.size(); ++x) {
        for (std::size_t y = 0; y < d.size(); ++y) {
            const double pxy = d.probs[x] * d.probs[y];
            if (g[x] > g[y])
                out.probs[x] += pxy;
            else if (g[x] < g[y])
                out.probs[y] += pxy;
            else {
                out.probs[x] += 0.5 * pxy;
                out.probs[y] += 0.5 * pxy;
            }
        }
    }
    return out;
}

}  // namespace

TEST_CASE("synthid_layer_exact: matches the pair-enumeration oracle") {
    Dist d{{0.25, 0.25, 0.25, 0.25}};
    std::vector<std::uint8_t> g{1, 1, 0, 0};
    const Dist got = synthid_layer_exact(d, g);
    const Dist want = layer_oracle(d, g);
    for (int i = 0; i < 4; ++i)
        CHECK(got.probs[i] == doctest::Approx(want.probs[i]).epsilon(1e-12));
    CHECK(got.probs[0] == doctest::Approx(0.375).epsilon(1e-12));
    CHECK(got.probs[2] == doctest::Approx(0.125).epsilon(1e-12));

    RngStream rng(12);
    for (int trial = 0; trial < 200; ++trial) {
        Dist rd;
        double total = 0.0;
        std::vector<std::uint8_t> rg;
        for (int i = 0; i < 16; ++i) {
            rd.probs.push_back(rng.next_unit() + 1e-6);
            total += rd.probs.back();
            rg.push_back(rng.next_u64() & 1 ? 1 : 0);
        }
        for (double& p : rd.probs) p /= total;
        const Dist a = synthid_layer_exact(rd, rg);
        const Dist b = layer_oracle(rd, rg);
        for (int i = 0; i < 16; ++i)
            CHECK(a.probs[i] == doctest::Approx(b.probs[i]).epsilon(1e-10));
    }
}

TEST_CASE("synthid_layer_exact: ties everywhere are the identity") {
    Dist d{{0.7, 0.2, 0.1}};
    for (std::uint8_t bit : {0, 1}) {
        std::vector<std::uint8_t> g(3, bit);
        const Dist out = synthid_layer_exact(d, g);
        for (int i = 0; i < 3; ++i)
            CHECK(out.probs[i] == doctest::Approx(d.probs[i]).epsilon(1e-12));
    }
}

TEST_CASE("synthid_layer_exact: point mass is preserved") {
    Dist d{{0.0, 1.0, 0.0}};
    std::vector<std::uint8_t> g{1, 0, 1};
    const Dist out = synthid_layer_exact(d, g);
    CHECK(out.probs[1] == doctest::Approx(1.0));
}

TEST_CASE("synthid_layer_exact: sums to 1 and green mass never decreases") {
    RngStream rng(77);
    for (int trial = 0; trial < 1000; ++trial) {
        Dist d;
        double total = 0.0;
        std::vector<std::uint8_t> g;
        for (int i = 0; i < 24; ++i) {
            d.probs.push_back(rng.next_unit() + 1e-9);
            total += d.probs.back();
            g.push_back(rng.next_u64() & 1 ? 1 : 0);
        }
        for (double& p : d.probs) p /= total;
        const Dist out = synthid_layer_exact(d, g);
        double s = 0.0, before = 0.0, after = 0.0;
        for (int i = 0; i < 24; ++i) {
            s += out.probs[i];
            if (g[i]) {
                before += d.probs[i];
                after += out.probs[i];
            }
        }
        CHECK(std::abs(s - 1.0) < 1e-12);
        CHECK(after >= before - 1e-12);
    }
}

TEST_CASE("synthid_sample: m=0 is a plain sample") {
    const Vocab v(8);
    Dist d{{0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0}};
    CHECK(synthid_sample(d, {}, synthid_spec(1, 0), v, 9) == 3);
}

TEST_CASE("synthid_sample: one uniform layer boosts green mass to 0.75") {
    const Vocab v(64);
    const auto spec = synthid_spec(1, 1);
    Dist d;
    d.probs.assign(64, 1.0 / 64.0);
    GCache g(spec.key, 1, v);
    const Dist adj = synthid_adjusted(d, sentinel_hash(spec.key), g);
    const double* row = g.get(sentinel_hash(spec.key));
    double q1 = 0.0, mass1 = 0.0;
    for (Token t = 0; t < 64; ++t)
        if (row[t] != 0.0) {
            q1 += 1.0 / 64.0;
            mass1 += adj.probs[t];
        }
    // uniform d with fraction q1 on g=1: post-layer mass = q1*(2-q1);
    // for q1=1/2 that is exactly 3/4
    CHECK(mass1 == doctest::Approx(q1 * (2.0 - q1)).epsilon(1e-12));
}

TEST_CASE("synthid exact chain matches the Monte Carlo tournament") {
    const Vocab v(16);
    const auto spec = synthid_spec(2, 3);
    RngStream rng(21);
    Dist d;
    double total = 0.0;
    for (int i = 0; i < 16; ++i) {
        d.probs.push_back(rng.next_unit() + 0.01);
        total += d.probs.back();
    }
    for (double& p : d.probs) p /= total;

    std::vector<Token> win{5};
    const std::uint64_t h = window_hash(win, spec.hash_kind, v);
    GCache g(spec.key, spec.m, v);
    const Dist exact = synthid_adjusted(d, h, g);

    const std::size_t n = 100000;
    std::vector<std::size_t> counts(16, 0);
    for (std::size_t s = 0; s < n; ++s)
        ++counts[synthid_sample_mc(d, win, spec, v, derive_sub(1234, "draw", s))];

    for (int t = 0; t < 16; ++t) {
        const double expect = exact.probs[t] * static_cast<double>(n);
        const double sigma =
            std::sqrt(exact.probs[t] * (1.0 - exact.probs[t]) * static_cast<double>(n));
        CHECK(std::abs(static_cast<double>(counts[t]) - expect) <= 3.0 * sigma + 1.0);
    }
}

// ---------------------------------------------------------------------------

TEST_CASE("ContextMask: definition and capacity-1 eviction trace") {
    ContextMask m(1);
    CHECK_FALSE(m.seen_or_insert(1, 100));  // A first seen -> watermark applies
    CHECK(m.seen_or_insert(1, 100));        // immediate repeat -> masked
    CHECK_FALSE(m.seen_or_insert(1, 200));  // B evicts A
    CHECK_FALSE(m.seen_or_insert(1, 100));  // A again: was evicted -> watermarked
    CHECK_THROWS_AS(ContextMask(0), std::invalid_argument);
}

TEST_CASE("masked processors: repeats emit the base distribution exactly") {
    const Vocab v(32);
    auto spec = kgw_spec(2, 3.0);
    spec.masking_capacity = 1024;
    KgwProcessor proc(spec, v);
    proc.begin_sequence();

    Dist base;
    base.probs.assign(32, 1.0 / 32.0);
    std::vector<Token> ctx{4, 9};

    const Dist first = proc.process(base, ctx);
    bool differs = false;
    for (int i = 0; i < 32; ++i)
        if (first.probs[i] != base.probs[i]) differs = true;
    CHECK(differs);

    const Dist second = proc.process(base, ctx);
    CHECK(second.probs == base.probs);  // exact equality on the masked path

    // second pass over a whole repeated stream is identical to base
    proc.begin_sequence();
    std::vector<std::vector<Token>> stream{{1, 2}, {3, 4}, {9, 9}, {1, 2}};
    for (const auto& c : stream) (void)proc.process(base, c);
    const Dist again = proc.process(base, std::vector<Token>{3, 4});
    CHECK(again.probs == base.probs);
}

TEST_CASE("begin_sequence resets the mask between sequences") {
    const Vocab v(16);
    auto spec = synthid_spec(2, 4);
    spec.masking_capacity = 8;
    SynthIdProcessor proc(spec, v);

    Dist base;
    base.probs.assign(16, 1.0 / 16.0);
    std::vector<Token> ctx{3, 3};

    proc.begin_sequence();
    const Dist a = proc.process(base, ctx);
    const Dist b = proc.process(base, ctx);
    CHECK(b.probs == base.probs);
    proc.begin_sequence();
    const Dist c = proc.process(base, ctx);
    CHECK(c.probs == a.probs);  // fresh mask: watermarked again
}
