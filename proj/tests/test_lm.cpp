#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "wmlab/detect.hpp"
#include "wmlab/lm.hpp"

using namespace wmlab;

namespace {

Corpus one_seq(std::initializer_list<Token> toks, std::size_t prompt_len,
               std::uint32_t vocab) {
    Corpus c;
    c.vocab = Vocab(vocab);
    TokenSeq s;
    s.tokens = toks;
    s.prompt_len = prompt_len;
    c.seqs.push_back(std::move(s));
    return c;
}

}  // namespace

TEST_CASE("fit: MLE on a deterministic pattern") {
    const Corpus c = one_seq({0, 1, 0, 1}, 0, 4);
    const NGramModel m = NGramModel::fit(c, 2, 1e-9);
    std::vector<Token> ctx{0};
    const Dist d = m.next_dist(ctx);
    CHECK(d.probs[1] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("fit: hand-counted smoothing") {
    Corpus c = one_seq({0, 1}, 0, 4);
    c.seqs.push_back(TokenSeq{{0, 2}, 0});
    const NGramModel m = NGramModel::fit(c, 2, 1.0);
    std::vector<Token> ctx{0};
    const Dist d = m.next_dist(ctx);
    // P(1|0) = (1+1)/(2+4)
    CHECK(d.probs[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(d.probs[3] == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
}

TEST_CASE("fit: unseen context is uniform; corpus order does not matter") {
    Corpus c = one_seq({0, 1, 2, 3, 0, 1}, 0, 8);
    c.seqs.push_back(TokenSeq{{5, 5, 5, 2}, 1});
    const NGramModel m = NGramModel::fit(c, 3, 0.5);
    std::vector<Token> unseen{7, 7};
    const Dist d = m.next_dist(unseen);
    for (double p : d.probs) CHECK(p == doctest::Approx(1.0 / 8.0).epsilon(1e-12));

    Corpus shuffled;
    shuffled.vocab = c.vocab;
    shuffled.seqs = {c.seqs[1], c.seqs[0]};
    const NGramModel m2 = NGramModel::fit(shuffled, 3, 0.5);
    for (std::uint64_t a = 0; a < 8; ++a)
        for (std::uint64_t b = 0; b < 8; ++b) {
            std::vector<Token> ctx{static_cast<Token>(a), static_cast<Token>(b)};
            CHECK(m.next_dist(ctx).probs == m2.next_dist(ctx).probs);
        }
}

TEST_CASE("fit: prompt tokens are context, not targets") {
    // prompt [7, 7], continuation [1]: the only count is (7,7) -> 1
    const Corpus c = one_seq({7, 7, 1}, 2, 8);
    const NGramModel m = NGramModel::fit(c, 3, 1e-9);
    std::vector<Token> ctx{7, 7};
    CHECK(m.next_dist(ctx).probs[1] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(m.context_total(std::vector<Token>{7, 1}) == 0.0);
    CHECK_THROWS_AS(NGramModel::fit(Corpus{Vocab(4), {}, {}}, 2, 0.1),
                    std::invalid_argument);
}

TEST_CASE("next_dist: sums to 1 and truncates long contexts") {
    Corpus c = one_seq({0, 1, 2, 3, 4, 5, 6, 7, 0, 2, 4, 6}, 0, 8);
    const NGramModel m = NGramModel::fit(c, 3, 0.2);
    RngStream rng(5);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<Token> ctx;
        const std::size_t len = rng.next_u64() % 6;
        for (std::size_t i = 0; i < len; ++i)
            ctx.push_back(static_cast<Token>(rng.next_u64() % 8));
        const Dist d = m.next_dist(ctx);
        double s = 0.0;
        for (double p : d.probs) s += p;
        CHECK(std::abs(s - 1.0) < 1e-9);
        if (ctx.size() > 2) {
            std::vector<Token> tail(ctx.end() - 2, ctx.end());
            CHECK(d.probs == m.next_dist(tail).probs);
        }
    }
}

TEST_CASE("dirichlet_teacher: deterministic and rows sum to 1") {
    const NGramModel t1 = NGramModel::dirichlet_teacher(Vocab(64), 3, 99, 0.3);
    const NGramModel t2 = NGramModel::dirichlet_teacher(Vocab(64), 3, 99, 0.3);
    const NGramModel t3 = NGramModel::dirichlet_teacher(Vocab(64), 3, 100, 0.3);
    std::vector<Token> ctx{5, 9};
    CHECK(t1.next_dist(ctx).probs == t2.next_dist(ctx).probs);
    CHECK(t1.next_dist(ctx).probs != t3.next_dist(ctx).probs);
    double s = 0.0;
    for (double p : t1.next_dist(ctx).probs) s += p;
    CHECK(std::abs(s - 1.0) < 1e-9);
}

TEST_CASE("dirichlet_teacher: huge skew gives near-uniform rows") {
    const NGramModel t = NGramModel::dirichlet_teacher(Vocab(64), 2, 7, 1e6);
    for (Token c = 0; c < 16; ++c) {
        std::vector<Token> ctx{c};
        const Dist d = t.next_dist(ctx);
        const auto [mn, mx] = std::minmax_element(d.probs.begin(), d.probs.end());
        CHECK(*mx - *mn < 0.01);
    }
}

TEST_CASE("dirichlet_teacher: small skew gives peaked rows") {
    const NGramModel t = NGramModel::dirichlet_teacher(Vocab(256), 2, 7, 0.1);
    std::vector<double> entropies;
    for (Token c = 0; c < 101; ++c) {
        std::vector<Token> ctx{c};
        const Dist d = t.next_dist(ctx);
        double h = 0.0;
        for (double p : d.probs)
            if (p > 0.0) h -= p * std::log(p);
        entropies.push_back(h);
    }
    std::sort(entropies.begin(), entropies.end());
    CHECK(entropies[50] < std::log(256.0) - 1.0);
}

TEST_CASE("teacher round trip: fitted student approaches teacher rows") {
    // order-2 teacher, 1e6 sampled tokens, top contexts by count
    const NGramModel teacher = NGramModel::dirichlet_teacher(Vocab(256), 2, 3, 0.3);
    Corpus c;
    c.vocab = Vocab(256);
    for (int i = 0; i < 250; ++i) {
        TokenSeq p;
        p.prompt_len = 0;
        c.seqs.push_back(generate(teacher, p, 4000, derive_sub(55, "seq", i)));
    }
    const NGramModel student = NGramModel::fit(c, 2, 0.01);

    std::vector<std::pair<double, Token>> by_count;
    for (Token t = 0; t < 256; ++t) {
        std::vector<Token> ctx{t};
        by_count.push_back({student.context_total(ctx), t});
    }
    std::sort(by_count.rbegin(), by_count.rend());
    double tv_sum = 0.0;
    const int top = 50;
    for (int i = 0; i < top; ++i) {
        std::vector<Token> ctx{by_count[i].second};
        const Dist p = teacher.next_dist(ctx);
        const Dist q = student.next_dist(ctx);
        double tv = 0.0;
        for (int j = 0; j < 256; ++j) tv += std::abs(p.probs[j] - q.probs[j]);
        tv_sum += 0.5 * tv;
    }
    // consistency threshold frozen after one calibration run of this exact
    // configuration (measured 0.062 mean TV at ~3900 counts per context)
    CHECK(tv_sum / top < 0.10);
}

TEST_CASE("generate: plain chain, determinism, prompt recording") {
    const NGramModel t = NGramModel::dirichlet_teacher(Vocab(32), 2, 1, 0.5);
    TokenSeq prompt;
    prompt.tokens = {3, 5};
    const TokenSeq a = generate(t, prompt, 20, 111);
    const TokenSeq b = generate(t, prompt, 20, 111);
    const TokenSeq c = generate(t, prompt, 20, 112);
    CHECK(a.tokens == b.tokens);
    CHECK(a.tokens != c.tokens);
    CHECK(a.prompt_len == 2);
    CHECK(a.tokens.size() == 22);
    CHECK_THROWS_AS(generate(t, prompt, 0, 1), std::invalid_argument);
}

TEST_CASE("generate: KGW n=1 on a near-uniform teacher hits the closed form") {
    const NGramModel t = NGramModel::dirichlet_teacher(Vocab(256), 2, 2, 1e6);
    WatermarkSpec spec;
    spec.kind = SchemeKind::KGW;
    spec.n = 1;
    spec.key.key = 0xBEEF;
    spec.delta = 3.0;
    spec.gamma = 0.5;
    KgwProcessor proc(spec, Vocab(256));
    StepProcessor* chain[] = {&proc};

    TokenSeq prompt;
    prompt.tokens = {0};
    const TokenSeq out = generate(t, prompt, 10000, chain, 9);

    const GreenPartition part =
        green_partition(sentinel_hash(spec.key), spec.key, 0.5, Vocab(256));
    std::size_t greens = 0;
    for (std::size_t i = 1; i < out.tokens.size(); ++i)
        greens += part.is_green(out.tokens[i]) ? 1 : 0;
    const double rate = static_cast<double>(greens) / 10000.0;
    const double expect = 0.5 * std::exp(3.0) / (0.5 * std::exp(3.0) + 0.5);
    const double sigma = std::sqrt(expect * (1.0 - expect) / 10000.0);
    CHECK(std::abs(rate - expect) < 3.0 * sigma + 0.003);
}

TEST_CASE("radioactivity: student on a 200k-token KGW n=1 corpus") {
    const NGramModel teacher = NGramModel::dirichlet_teacher(Vocab(256), 3, 21, 0.3);
    WatermarkSpec spec;
    spec.kind = SchemeKind::KGW;
    spec.n = 1;
    spec.key.key = 0xC0FFEE;
    spec.delta = 3.0;
    spec.gamma = 0.5;
    KgwProcessor proc(spec, Vocab(256));

    Corpus c;
    c.vocab = Vocab(256);
    const std::size_t nseq = 3125;  // x64 = 200k tokens
    for (std::size_t i = 0; i < nseq; ++i) {
        TokenSeq prompt = generate(teacher, TokenSeq{}, 8, derive_sub(1, "p", i));
        prompt.prompt_len = 0;
        StepProcessor* chain[] = {&proc};
        TokenSeq s = generate(teacher, prompt, 64, chain, derive_sub(1, "g", i));
        c.seqs.push_back(std::move(s));
    }
    const NGramModel student = NGramModel::fit(c, 3, 0.01);

    std::vector<TokenSeq> text;
    for (int i = 0; i < 50; ++i) {
        TokenSeq prompt = generate(teacher, TokenSeq{}, 8, derive_sub(2, "p", i));
        prompt.prompt_len = 0;
        text.push_back(generate(student, prompt, 3000, derive_sub(2, "g", i)));
    }
    const auto stream = score_stream(text, spec, Vocab(256));
    const GreenPartition part =
        green_partition(sentinel_hash(spec.key), spec.key, 0.5, Vocab(256));
    // green fraction of every 3000-token group exceeds gamma by >= 10 sigma
    const double sigma = std::sqrt(0.5 * 0.5 / 3000.0);
    std::size_t groups_ok = 0, groups = 0;
    for (std::size_t g = 0; g + 3000 <= stream.size(); g += 3000) {
        std::size_t greens = 0;
        for (std::size_t i = g; i < g + 3000; ++i)
            greens += part.is_green(stream[i].token) ? 1 : 0;
        ++groups;
        if (static_cast<double>(greens) / 3000.0 >= 0.5 + 10.0 * sigma) ++groups_ok;
    }
    CHECK(groups >= 50);
    CHECK(groups_ok == groups);
}

TEST_CASE("cross_entropy and kl: identities and non-negativity") {
    const NGramModel a = NGramModel::dirichlet_teacher(Vocab(8), 2, 1, 0.5);
    const NGramModel b = NGramModel::dirichlet_teacher(Vocab(8), 2, 2, 0.5);
    std::vector<std::vector<Token>> ctxs;
    RngStream rng(8);
    for (int i = 0; i < 100; ++i)
        ctxs.push_back({static_cast<Token>(rng.next_u64() % 8)});

    CHECK(kl(a, a, ctxs) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(kl(a, b, ctxs) >= 0.0);
    CHECK(cross_entropy(a, b, ctxs) >= cross_entropy(a, a, ctxs));

    for (std::uint64_t s = 10; s < 60; ++s) {
        const NGramModel p = NGramModel::dirichlet_teacher(Vocab(8), 2, s, 0.4);
        const NGramModel q = NGramModel::dirichlet_teacher(Vocab(8), 2, s + 1000, 0.4);
        CHECK(kl(p, q, ctxs) >= 0.0);
    }
    CHECK_THROWS_AS(kl(a, b, {}), std::invalid_argument);
}

TEST_CASE("kl regression: fixed models, fixed contexts") {
    const NGramModel p = NGramModel::dirichlet_teacher(Vocab(32), 2, 424242, 0.3);
    const NGramModel q = NGramModel::dirichlet_teacher(Vocab(32), 2, 515151, 0.3);
    std::vector<std::vector<Token>> ctxs;
    for (Token t = 0; t < 100; ++t) ctxs.push_back({static_cast<Token>(t % 32)});
    // frozen by straightforward summation at first calibration
    CHECK(kl(p, q, ctxs) == doctest::Approx(3.413351790125).epsilon(1e-9));
}

TEST_CASE("corpus text format: round trip and parse errors") {
    Corpus c;
    c.vocab = Vocab(32);
    c.seqs.push_back(TokenSeq{{5, 17, 3, 9, 12, 4, 4}, 3});
    c.seqs.push_back(TokenSeq{{1, 2}, 0});
    c.seqs.push_back(TokenSeq{{8, 8}, 2});

    std::ostringstream os;
    write_corpus(os, c);
    CHECK(os.str() == "5 17 3 | 9 12 4 4\n| 1 2\n8 8 |\n");

    std::istringstream is(os.str());
    const Corpus back = read_corpus(is, Vocab(32));
    REQUIRE(back.seqs.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(back.seqs[i].tokens == c.seqs[i].tokens);
        CHECK(back.seqs[i].prompt_len == c.seqs[i].prompt_len);
    }

    std::istringstream bad1("1 2 3\n");
    CHECK_THROWS(read_corpus(bad1, Vocab(32)));
    std::istringstream bad2("1 | 99\n");
    CHECK_THROWS(read_corpus(bad2, Vocab(32)));
    std::istringstream bad3("1 | 2 | 3\n");
    CHECK_THROWS(read_corpus(bad3, Vocab(32)));
}

TEST_CASE("model snapshot: round trip is exact and bytes are canonical") {
    Corpus c = one_seq({0, 1, 2, 3, 0, 1, 2, 0, 3, 3, 1}, 2, 6);
    const NGramModel m = NGramModel::fit(c, 3, 0.25);

    std::ostringstream os(std::ios::binary);
    m.save(os);
    const std::string bytes = os.str();
    CHECK(bytes.substr(0, 4) == "WMLM");

    std::istringstream is(bytes);
    const NGramModel back = NGramModel::load(is);
    CHECK(back.order() == m.order());
    CHECK(back.beta() == m.beta());
    for (Token a = 0; a < 6; ++a)
        for (Token b = 0; b < 6; ++b) {
            std::vector<Token> ctx{a, b};
            CHECK(back.next_dist(ctx).probs == m.next_dist(ctx).probs);
        }

    // canonical bytes: saving the reloaded model reproduces them exactly
    std::ostringstream os2(std::ios::binary);
    back.save(os2);
    CHECK(os2.str() == bytes);
}
