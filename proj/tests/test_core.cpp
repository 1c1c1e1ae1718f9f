#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "wmlab/core.hpp"

using namespace wmlab;

TEST_CASE("softmax: all-equal logits give the uniform distribution") {
    LogitVec l{{2.5, 2.5, 2.5, 2.5}};
    const Dist d = softmax(l);
    for (double p : d.probs) CHECK(p == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("softmax: [0, ln 3] -> [0.25, 0.75]") {
    LogitVec l{{0.0, std::log(3.0)}};
    const Dist d = softmax(l);
    CHECK(d.probs[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(d.probs[1] == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("softmax: huge logits do not overflow") {
    LogitVec l{{1000.0, 1001.0}};
    const Dist d = softmax(l);
    // exact values after subtracting 1000: 1/(1+e), e/(1+e)
    const double e = std::exp(1.0);
    CHECK(d.probs[0] == doctest::Approx(1.0 / (1.0 + e)).epsilon(1e-14));
    CHECK(d.probs[1] == doctest::Approx(e / (1.0 + e)).epsilon(1e-14));
}

TEST_CASE("softmax: invariant to adding a constant to all logits") {
    RngStream rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        LogitVec a, b;
        const double shift = (rng.next_unit() - 0.5) * 40.0;
        for (int i = 0; i < 16; ++i) {
            const double v = (rng.next_unit() - 0.5) * 10.0;
            a.logits.push_back(v);
            b.logits.push_back(v + shift);
        }
        const Dist da = softmax(a), db = softmax(b);
        for (int i = 0; i < 16; ++i)
            CHECK(std::abs(da.probs[i] - db.probs[i]) < 1e-12);
    }
}

TEST_CASE("softmax: output sums to 1 within 1e-12") {
    RngStream rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        LogitVec l;
        for (int i = 0; i < 64; ++i) l.logits.push_back((rng.next_unit() - 0.5) * 30.0);
        const Dist d = softmax(l, 0.25 + 2.0 * rng.next_unit());
        double s = 0.0;
        for (double p : d.probs) s += p;
        CHECK(std::abs(s - 1.0) < 1e-12);
    }
}

TEST_CASE("softmax: rejects bad input") {
    CHECK_THROWS_AS(softmax(LogitVec{{0.0, std::numeric_limits<double>::infinity()}}),
                    std::invalid_argument);
    CHECK_THROWS_AS(softmax(LogitVec{{0.0, std::nan("")}}), std::invalid_argument);
    CHECK_THROWS_AS(softmax(LogitVec{{0.0, 1.0}}, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(softmax(LogitVec{{0.0, 1.0}}, -1.0), std::invalid_argument);
}

TEST_CASE("derive_seed: deterministic, empty path is mix(master)") {
    SeedPath p(42);
    CHECK(derive_seed(p) == derive_seed(p));
    CHECK(derive_seed(p) == mix64(42));
    auto c = p.child("corpus", 3);
    CHECK(derive_seed(c) == derive_seed(c));
    CHECK(derive_seed(c) != derive_seed(p));
}

TEST_CASE("derive_seed: golden vectors and path sensitivity") {
    std::ifstream f(std::string(WMLAB_GOLDEN_DIR) + "/derive_seed.txt");
    REQUIRE(f.good());
    std::string line;
    int n = 0;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::uint64_t master, index, expected;
        std::string label;
        ls >> master >> label >> index >> expected;
        SeedPath p(master);
        auto c = p.child(label, index);
        CHECK(derive_seed(c) == expected);
        // changing any path element changes the output
        CHECK(derive_seed(p.child(label, index + 1)) != expected);
        CHECK(derive_seed(p.child(label + "x", index)) != expected);
        CHECK(derive_seed(SeedPath(master + 1).child(label, index)) != expected);
        ++n;
    }
    CHECK(n == 100);
}

TEST_CASE("sample: point mass returns its token for any seed") {
    Dist d{{0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0}};
    for (std::uint64_t s = 0; s < 64; ++s) CHECK(sample(d, s) == 7);
}

TEST_CASE("sample: deterministic in (d, seed)") {
    Dist d{{0.1, 0.2, 0.3, 0.4}};
    for (std::uint64_t s = 0; s < 32; ++s) CHECK(sample(d, s) == sample(d, s));
}

TEST_CASE("sample: uniform frequencies within 3 sigma over 1e5 seeds") {
    Dist d{{0.25, 0.25, 0.25, 0.25}};
    const std::size_t n = 100000;
    std::size_t counts[4] = {0, 0, 0, 0};
    for (std::size_t s = 0; s < n; ++s) ++counts[sample(d, s)];
    const double sigma = std::sqrt(0.25 * 0.75 * static_cast<double>(n));
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(std::abs(static_cast<double>(counts[i]) - 0.25 * n) < 3.0 * sigma);
}

TEST_CASE("sample: rejects the all-zero distribution") {
    CHECK_THROWS_AS(sample(Dist{{0.0, 0.0}}, 1), std::invalid_argument);
    CHECK_THROWS_AS(sample(Dist{{0.5, -0.1}}, 1), std::invalid_argument);
}

TEST_CASE("RngStream: gamma moments are sane") {
    RngStream rng(11);
    const int n = 200000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double g = rng.next_gamma(2.0);
        sum += g;
        sum2 += g * g;
    }
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    // Gamma(2): mean 2, var 2; generous 5-sigma-ish bounds
    CHECK(std::abs(mean - 2.0) < 0.03);
    CHECK(std::abs(var - 2.0) < 0.1);

    // shape < 1 branch
    double small_sum = 0.0;
    for (int i = 0; i < n; ++i) small_sum += rng.next_gamma(0.3);
    CHECK(std::abs(small_sum / n - 0.3) < 0.02);
}
