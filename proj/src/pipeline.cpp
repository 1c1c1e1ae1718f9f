#include "wmlab/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

#include "wmlab/parallel.hpp"

namespace wmlab {

namespace {

std::uint64_t seq_hash(const TokenSeq& s) {
    std::uint64_t h = mix64(0x5EED5EED5EED5EEDull);
    for (Token t : s.tokens) h = prf_chain(h, t);
    return h;
}

std::vector<TokenSeq> clean_prompts(const NGramModel& teacher, std::size_t count,
                                    std::size_t length, std::uint64_t seed,
                                    std::uint32_t workers,
                                    const std::unordered_set<std::uint64_t>* avoid) {
    std::vector<TokenSeq> out(count);
    parallel_for(count, workers, [&](std::size_t i) {
        for (std::uint64_t attempt = 0;; ++attempt) {
            TokenSeq p = generate(teacher, TokenSeq{}, length,
                                  derive_sub(seed, "prompt", i * 1024 + attempt));
            p.prompt_len = 0;
            if (!avoid || !avoid->count(seq_hash(p))) {
                out[i] = std::move(p);
                break;
            }
        }
    });
    return out;
}

}  // namespace

PipelineContext PipelineContext::build(const ExperimentConfig& cfg) {
    PipelineContext ctx{cfg,
                        NGramModel::dirichlet_teacher(
                            Vocab(cfg.vocab), cfg.teacher_order,
                            derive_seed(SeedPath(cfg.seed).child("teacher")),
                            cfg.teacher_skew),
                        NGramModel::dirichlet_teacher(
                            Vocab(cfg.vocab), cfg.teacher_order,
                            derive_seed(SeedPath(cfg.seed).child("teacher_o")),
                            cfg.teacher_skew),
                        {},
                        {},
                        {}};

    ctx.train_prompts = clean_prompts(
        ctx.teacher, cfg.corpus_sequences, cfg.prompt_length,
        derive_seed(SeedPath(cfg.seed).child("train_prompts")), cfg.workers, nullptr);

    std::unordered_set<std::uint64_t> train_hashes;
    train_hashes.reserve(ctx.train_prompts.size() * 2);
    for (const auto& p : ctx.train_prompts) train_hashes.insert(seq_hash(p));

    ctx.test_prompts = clean_prompts(
        ctx.teacher, cfg.test_sequences, cfg.prompt_length,
        derive_seed(SeedPath(cfg.seed).child("test_prompts")), cfg.workers,
        &train_hashes);

    // knowledge contexts: trailing windows of fresh clean-teacher text
    const std::size_t ctx_len =
        std::max<std::size_t>(cfg.teacher_order, cfg.effective_student_order(cfg.n)) - 1;
    const std::uint64_t kseed = derive_seed(SeedPath(cfg.seed).child("kl_ctx"));
    ctx.knowledge_ctx.resize(cfg.knowledge_contexts);
    parallel_for(cfg.knowledge_contexts, cfg.workers, [&](std::size_t i) {
        TokenSeq s = generate(ctx.teacher, TokenSeq{}, ctx_len + 16,
                              derive_sub(kseed, "gen", i));
        ctx.knowledge_ctx[i].assign(s.tokens.end() - static_cast<std::ptrdiff_t>(ctx_len),
                                    s.tokens.end());
    });
    return ctx;
}

Corpus make_training_corpus(const PipelineContext& ctx, const WatermarkSpec* spec) {
    const auto& cfg = ctx.cfg;
    Corpus c;
    c.vocab = Vocab(cfg.vocab);
    c.provenance = spec ? Provenance::TeacherWatermarked : Provenance::TeacherClean;
    c.seqs.resize(ctx.train_prompts.size());

    std::unique_ptr<StepProcessor> proto;
    if (spec) proto = make_watermark_processor(*spec, c.vocab);

    const std::uint64_t seed = derive_seed(SeedPath(cfg.seed).child(
        spec ? "train_gen" : "train_gen_clean"));
    parallel_for(c.seqs.size(), cfg.workers, [&, seed](std::size_t i) {
        std::unique_ptr<StepProcessor> local;
        std::span<StepProcessor* const> span_chain;
        StepProcessor* chain[1];
        if (proto) {
            local = proto->clone();
            chain[0] = local.get();
            span_chain = std::span<StepProcessor* const>(chain, 1);
        }
        c.seqs[i] = generate(ctx.teacher, ctx.train_prompts[i],
                             cfg.corpus_continuation, span_chain,
                             derive_sub(seed, "seq", i));
    });
    return c;
}

NGramModel make_o_model(const PipelineContext& ctx, std::uint32_t order) {
    const auto& cfg = ctx.cfg;
    if (cfg.o_model == OModelKind::Uniform) {
        // one-sequence corpus fit at huge beta behaves as a uniform prior
        Corpus tiny;
        tiny.vocab = Vocab(cfg.vocab);
        TokenSeq s;
        s.prompt_len = 0;
        s.tokens.assign(order, 0);
        tiny.seqs.push_back(std::move(s));
        return NGramModel::fit(tiny, order, 1e9);
    }
    const std::uint64_t pseed = derive_seed(SeedPath(cfg.seed).child("o_prompts"));
    const std::uint64_t gseed = derive_seed(SeedPath(cfg.seed).child("o_gen"));
    std::vector<TokenSeq> prompts = clean_prompts(ctx.teacher_o, cfg.corpus_sequences,
                                                  cfg.prompt_length, pseed,
                                                  cfg.workers, nullptr);
    Corpus clean;
    clean.vocab = Vocab(cfg.vocab);
    clean.provenance = Provenance::TeacherClean;
    clean.seqs.resize(prompts.size());
    parallel_for(prompts.size(), cfg.workers, [&](std::size_t i) {
        clean.seqs[i] = generate(ctx.teacher_o, prompts[i], cfg.corpus_continuation,
                                 derive_sub(gseed, "seq", i));
    });
    return NGramModel::fit(clean, order, cfg.student_beta);
}

std::vector<TokenSeq> generate_student_text(const PipelineContext& ctx,
                                            const NGramModel& student,
                                            std::span<StepProcessor* const> chain,
                                            std::size_t sequences,
                                            std::size_t continuation) {
    const auto& cfg = ctx.cfg;
    if (sequences > ctx.test_prompts.size())
        throw std::invalid_argument("generate_student_text: not enough test prompts");
    std::vector<TokenSeq> out(sequences);
    const std::uint64_t seed = derive_seed(SeedPath(cfg.seed).child("test_gen"));
    parallel_for(sequences, cfg.workers, [&](std::size_t i) {
        std::vector<std::unique_ptr<StepProcessor>> local;
        std::vector<StepProcessor*> ptrs;
        for (StepProcessor* p : chain) {
            local.push_back(p->clone());
            ptrs.push_back(local.back().get());
        }
        out[i] = generate(student, ctx.test_prompts[i], continuation,
                          std::span<StepProcessor* const>(ptrs),
                          derive_sub(seed, "seq", i));
    });
    return out;
}

namespace {

DistillDetectResult detect_and_score(const PipelineContext& ctx,
                                     const WatermarkSpec& spec,
                                     const std::vector<TokenSeq>& text,
                                     const DistSource& effective_student,
                                     const std::string& condition) {
    const auto& cfg = ctx.cfg;
    DistillDetectResult r;
    r.condition = condition;

    const auto stream = score_stream(text, spec, Vocab(cfg.vocab));
    for (std::size_t g : cfg.group_sizes)
        r.reports.push_back(group_and_report(stream, g, spec, Vocab(cfg.vocab)));

    if (spec.kind == SchemeKind::KGW) {
        const KgwResult kr = kgw_z(stream, spec, Vocab(cfg.vocab));
        r.full_statistic = kr.z;
        r.full_log10_p = normal_log10_sf(kr.z);
    } else {
        const SynthIdResult sr = synthid_stat(stream, spec, Vocab(cfg.vocab));
        r.full_statistic = sr.gbar;
        r.full_log10_p = synthid_log10_p(sr.gbar, spec.m, sr.total);
    }
    r.kl_clean = kl(ctx.teacher, effective_student, ctx.knowledge_ctx);
    r.ce_clean = cross_entropy(ctx.teacher, effective_student, ctx.knowledge_ctx);
    return r;
}

}  // namespace

DistillDetectResult run_condition(const PipelineContext& ctx, AttackKind attack,
                                  bool watermarked) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto& cfg = ctx.cfg;
    const WatermarkSpec spec = cfg.watermark_spec();
    const std::uint32_t order = cfg.effective_student_order(cfg.n);

    const Corpus corpus = make_training_corpus(ctx, watermarked ? &spec : nullptr);

    std::string condition = !watermarked ? "unw"
                            : attack == AttackKind::None ? "none"
                            : attack == AttackKind::UP   ? "up"
                            : attack == AttackKind::TP   ? "tp"
                                                         : "wn";

    // stolen rules, needed by TP and WN
    RuleTable rules;
    NGramModel student = NGramModel::fit(corpus, order, cfg.student_beta);
    std::unique_ptr<NGramModel> o_model;
    if (watermarked && attack != AttackKind::None)
        o_model = std::make_unique<NGramModel>(make_o_model(ctx, order));
    if (watermarked && (attack == AttackKind::TP || attack == AttackKind::WN))
        rules = aggregate(*o_model, student, corpus, cfg.n_prime, cfg.theta, cfg.alpha);

    DistillDetectResult r;
    if (watermarked && (attack == AttackKind::UP || attack == AttackKind::TP)) {
        ParaphraseSpec pspec;
        pspec.paraphraser = o_model.get();
        pspec.lambda = cfg.lambda;
        if (attack == AttackKind::TP)
            pspec.inverse = InverseSpec{&rules, cfg.delta_prime};
        const Corpus attacked =
            paraphrase(corpus, pspec,
                       derive_seed(SeedPath(cfg.seed).child("paraphrase")), cfg.workers);
        student = NGramModel::fit(attacked, order, cfg.student_beta);
        const auto text = generate_student_text(ctx, student, {}, cfg.test_sequences,
                                                cfg.test_continuation);
        r = detect_and_score(ctx, spec, text, student, condition);
    } else if (watermarked && attack == AttackKind::WN) {
        WnProcessor wn(rules, cfg.delta_prime);
        StepProcessor* chain[] = {&wn};
        const auto text = generate_student_text(ctx, student, chain,
                                                cfg.test_sequences,
                                                cfg.test_continuation);
        const WnView view(student, rules, cfg.delta_prime);
        r = detect_and_score(ctx, spec, text, view, condition);
    } else {
        const auto text = generate_student_text(ctx, student, {}, cfg.test_sequences,
                                                cfg.test_continuation);
        r = detect_and_score(ctx, spec, text, student, condition);
    }
    r.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

DistillDetectResult run_distill_detect(const ExperimentConfig& cfg) {
    const PipelineContext ctx = PipelineContext::build(cfg);
    return run_condition(ctx, cfg.attack, true);
}

std::vector<WindowSizeRow> run_window_size_table(const ExperimentConfig& cfg,
                                                 const std::vector<std::uint32_t>& ns) {
    std::vector<WindowSizeRow> rows;
    for (std::uint32_t n : ns) {
        ExperimentConfig c = cfg;
        c.n = n;
        c.student_order = c.student_order ? c.student_order : n + 1;
        c.attack = AttackKind::None;
        const DistillDetectResult r = run_distill_detect(c);
        WindowSizeRow row;
        row.n = n;
        row.student_order = c.student_order;
        for (std::size_t i = 0; i < c.group_sizes.size(); ++i)
            row.median_by_group[c.group_sizes[i]] = r.reports[i].median_log10_p;
        rows.push_back(std::move(row));
    }
    std::sort(rows.begin(), rows.end(),
              [](const WindowSizeRow& a, const WindowSizeRow& b) { return a.n < b.n; });
    return rows;
}

// ---------------------------------------------------------------------------

SpearmanResult spearman_test(std::span<const double> x, std::span<const double> y,
                             std::uint64_t seed, std::size_t max_perms) {
    if (x.size() != y.size() || x.size() < 3)
        throw std::invalid_argument("spearman_test: need >= 3 paired values");
    const std::size_t n = x.size();

    auto ranks = [](std::span<const double> v) {
        std::vector<std::size_t> idx(v.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(),
                  [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < idx.size(); ++i) r[idx[i]] = static_cast<double>(i);
        return r;
    };
    const std::vector<double> rx = ranks(x);
    std::vector<double> ry = ranks(y);

    auto corr = [&](const std::vector<double>& a, const std::vector<double>& b) {
        const double mean = (static_cast<double>(n) - 1.0) / 2.0;
        double num = 0.0, da = 0.0, db = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            num += (a[i] - mean) * (b[i] - mean);
            da += (a[i] - mean) * (a[i] - mean);
            db += (b[i] - mean) * (b[i] - mean);
        }
        return num / std::sqrt(da * db);
    };

    SpearmanResult res;
    res.rho = corr(rx, ry);

    // permutation test; exact when n! is small enough
    std::size_t factorial = 1;
    bool exact = true;
    for (std::size_t i = 2; i <= n; ++i) {
        factorial *= i;
        if (factorial > max_perms) {
            exact = false;
            break;
        }
    }
    std::size_t at_least = 0, total = 0;
    if (exact) {
        std::vector<double> perm = ry;
        std::sort(perm.begin(), perm.end());
        do {
            ++total;
            if (corr(rx, perm) >= res.rho - 1e-12) ++at_least;
        } while (std::next_permutation(perm.begin(), perm.end()));
        res.p_one_sided = static_cast<double>(at_least) / static_cast<double>(total);
    } else {
        RngStream rng(seed);
        std::vector<double> perm = ry;
        for (std::size_t it = 0; it < max_perms; ++it) {
            for (std::size_t i = perm.size(); i > 1; --i)
                std::swap(perm[i - 1],
                          perm[static_cast<std::size_t>(rng.next_u64() % i)]);
            ++total;
            if (corr(rx, perm) >= res.rho - 1e-12) ++at_least;
        }
        res.p_one_sided = (static_cast<double>(at_least) + 1.0) /
                          (static_cast<double>(total) + 1.0);
    }
    return res;
}

namespace {

/// Rate of watermark-bearing tokens: green indicator (KGW) or mean g (SynthID).
double token_rate(const ScoredToken& st, const WatermarkSpec& spec,
                  const GreenCache& gc, const GCache& gg) {
    if (spec.kind == SchemeKind::KGW) return gc.get(st.h).is_green(st.token) ? 1.0 : 0.0;
    const double* rows = gg.get(st.h);
    double ones = 0.0;
    for (std::uint32_t l = 0; l < spec.m; ++l)
        ones += rows[static_cast<std::size_t>(l) * gg.vocab().size + st.token];
    return ones / static_cast<double>(spec.m);
}

}  // namespace

FrequencyRadioactivityResult run_frequency_radioactivity(const ExperimentConfig& cfg) {
    if (cfg.n < 2)
        throw std::invalid_argument(
            "run_frequency_radioactivity: needs n >= 2 (prefix-dependent rules)");

    const PipelineContext ctx = PipelineContext::build(cfg);
    const WatermarkSpec spec = cfg.watermark_spec();
    const Corpus corpus = make_training_corpus(ctx, &spec);
    const std::uint32_t order = cfg.effective_student_order(cfg.n);
    const NGramModel student = NGramModel::fit(corpus, order, cfg.student_beta);
    const auto text = generate_student_text(ctx, student, {}, cfg.test_sequences,
                                            cfg.test_continuation);

    // training-frequency of the watermark window (k = n-1 gram)
    const std::uint32_t k = cfg.n - 1;
    const PrefixStats stats = prefix_frequencies(corpus, k + 1);
    const auto& pk = stats.per_k[k - 1];

    const Vocab vocab(cfg.vocab);
    const auto stream = score_stream(text, spec, vocab);
    GreenCache gc(spec.key, spec.gamma, vocab, spec.complement);
    GCache gg(spec.key, spec.m, vocab);

    // bucket edges: unseen, then half-decade steps anchored so that the
    // theta boundary is itself an edge
    std::vector<double> edges;
    const double fmax = pk.max_freq;
    for (int j = 0; j < 80; ++j) {
        const double e = cfg.theta * std::pow(2.0, (j - 8) / 2.0);
        if (e >= fmax * 2.0) break;
        edges.push_back(e);
    }

    struct Acc {
        std::size_t n = 0;
        double sum = 0.0;
    };
    std::vector<Acc> acc(edges.size() + 1);  // slot 0 = unseen

    std::size_t pos = 0;
    for (const TokenSeq& s : text) {
        const auto& t = s.tokens;
        for (std::size_t i = s.prompt_len; i < t.size(); ++i, ++pos) {
            std::span<const Token> win(t.data() + i - k, k);
            const double f = stats.freq(k, pack_ctx(win, cfg.vocab));
            std::size_t slot = 0;
            if (f > 0.0) {
                slot = 1;
                while (slot < edges.size() && f > edges[slot]) ++slot;
            }
            acc[slot].n += 1;
            acc[slot].sum += token_rate(stream[pos], spec, gc, gg);
        }
    }

    FrequencyRadioactivityResult out;
    out.null_rate = spec.kind == SchemeKind::KGW ? spec.gamma : 0.5;
    std::vector<double> xs, ys;
    for (std::size_t s = 0; s < acc.size(); ++s) {
        if (acc[s].n < 30) continue;  // skip statistically empty buckets
        FrequencyBucket b;
        b.f_lo = s == 0 ? 0.0 : (s == 1 ? 0.0 : edges[s - 1]);
        b.f_hi = s == 0 ? 0.0 : (s < edges.size() ? edges[s] : 1.0);
        b.tokens = acc[s].n;
        b.rate = acc[s].sum / static_cast<double>(acc[s].n);
        out.buckets.push_back(b);
        xs.push_back(static_cast<double>(s));
        ys.push_back(b.rate);
    }
    if (xs.size() >= 3) {
        const SpearmanResult sr = spearman_test(
            xs, ys, derive_seed(SeedPath(cfg.seed).child("spearman")));
        out.spearman_rho = sr.rho;
        out.spearman_p = sr.p_one_sided;
    }
    return out;
}

std::vector<CoverageRow> run_prefix_coverage(const ExperimentConfig& cfg,
                                             const std::vector<std::uint32_t>& ns) {
    std::vector<CoverageRow> rows;
    for (std::uint32_t n : ns) {
        CoverageRow row;
        row.n = n;
        if (n == 1) {
            row.high_freq_share = 1.0;  // global rule: one prefix, by convention
            rows.push_back(row);
            continue;
        }
        ExperimentConfig c = cfg;
        c.n = n;
        const PipelineContext ctx = PipelineContext::build(c);
        const WatermarkSpec spec = c.watermark_spec();
        const Corpus corpus = make_training_corpus(ctx, &spec);
        const NGramModel student = NGramModel::fit(
            corpus, c.effective_student_order(n), c.student_beta);
        const auto text = generate_student_text(ctx, student, {}, c.test_sequences,
                                                c.test_continuation);
        const std::uint32_t k = n - 1;
        const PrefixStats stats = prefix_frequencies(corpus, k + 1);
        std::size_t high = 0, low = 0, unseen = 0;
        for (const TokenSeq& s : text) {
            const auto& t = s.tokens;
            for (std::size_t i = s.prompt_len; i < t.size(); ++i) {
                std::span<const Token> win(t.data() + i - k, k);
                const double f = stats.freq(k, pack_ctx(win, c.vocab));
                if (f > c.theta)
                    ++high;
                else if (f > 0.0)
                    ++low;
                else
                    ++unseen;
            }
        }
        const double total = static_cast<double>(high + low + unseen);
        row.high_freq_share = static_cast<double>(high) / total;
        row.seen_low_share = static_cast<double>(low) / total;
        row.unseen_share = static_cast<double>(unseen) / total;
        rows.push_back(row);
    }
    return rows;
}

// ---------------------------------------------------------------------------

namespace {

struct SourceRun {
    WatermarkSpec spec;
    std::vector<TokenSeq> seqs;  // that source's watermarked corpus
};

MultiSourceRow detect_source(const PipelineContext& ctx, const NGramModel& student,
                             const std::vector<TokenSeq>& text,
                             const WatermarkSpec& spec, const std::string& case_name,
                             const std::string& config, const std::string& det_name,
                             std::size_t group_size) {
    const auto stream = score_stream(text, spec, Vocab(ctx.cfg.vocab));
    const DetectionReport rep = group_and_report(stream, group_size, spec,
                                                 Vocab(ctx.cfg.vocab));
    MultiSourceRow row;
    row.case_name = case_name;
    row.config = config;
    row.detector = det_name;
    row.median_log10_p = rep.median_log10_p;
    row.kl_clean = kl(ctx.teacher, student, ctx.knowledge_ctx);
    return row;
}

Corpus watermark_subcorpus(const PipelineContext& ctx, const WatermarkSpec& spec,
                           std::size_t lo, std::size_t hi, std::uint64_t gen_label) {
    const auto& cfg = ctx.cfg;
    Corpus c;
    c.vocab = Vocab(cfg.vocab);
    c.provenance = Provenance::TeacherWatermarked;
    c.seqs.resize(hi - lo);
    auto proto = make_watermark_processor(spec, c.vocab);
    const std::uint64_t seed =
        derive_seed(SeedPath(cfg.seed).child("ms_gen", gen_label));
    parallel_for(hi - lo, cfg.workers, [&](std::size_t i) {
        auto local = proto->clone();
        StepProcessor* chain[] = {local.get()};
        c.seqs[i] = generate(ctx.teacher, ctx.train_prompts[lo + i],
                             cfg.corpus_continuation, chain,
                             derive_sub(seed, "seq", lo + i));
    });
    return c;
}

}  // namespace

std::vector<MultiSourceRow> run_multi_source(const ExperimentConfig& cfg,
                                             const MultiSourceOptions& opt) {
    std::vector<MultiSourceRow> rows;
    const std::size_t group = cfg.group_sizes.size() > 1 ? cfg.group_sizes[1]
                                                         : cfg.group_sizes[0];

    // Case 1 and 2 collide strong watermarks: n=1 rules, order-3 students,
    // short detection sequences so trajectory lock-in averages out.
    ExperimentConfig strong = cfg;
    strong.n = 1;
    strong.student_order = strong.student_order ? strong.student_order : 3;
    strong.test_sequences = cfg.test_sequences * 2;
    strong.test_continuation = cfg.test_continuation / 2;
    const PipelineContext sctx = PipelineContext::build(strong);

    if (opt.run_case1) {
        WatermarkSpec a = strong.watermark_spec();
        a.kind = SchemeKind::KGW;
        WatermarkSpec b = a;
        b.complement = true;

        const std::size_t half = strong.corpus_sequences / 2;
        Corpus ca = watermark_subcorpus(sctx, a, 0, half, 1);
        Corpus cb = watermark_subcorpus(sctx, b, half, 2 * half, 2);
        Corpus mixed;
        mixed.vocab = ca.vocab;
        mixed.provenance = Provenance::Mixed;
        mixed.seqs = ca.seqs;
        mixed.seqs.insert(mixed.seqs.end(), cb.seqs.begin(), cb.seqs.end());

        const NGramModel student = NGramModel::fit(
            mixed, strong.effective_student_order(1), strong.student_beta);
        const auto text = generate_student_text(sctx, student, {},
                                                strong.test_sequences,
                                                strong.test_continuation);
        rows.push_back(detect_source(sctx, student, text, a, "case1",
                                     "complementary-50/50", "key", group));
        rows.push_back(detect_source(sctx, student, text, b, "case1",
                                     "complementary-50/50", "key-complement", group));
    }

    if (opt.run_case2) {
        WatermarkSpec a = strong.watermark_spec();
        a.kind = SchemeKind::KGW;
        WatermarkSpec b = strong.watermark_spec();
        b.kind = SchemeKind::SynthID;
        b.key.key = derive_seed(SeedPath(strong.seed).child("wmkey2"));

        const std::size_t half = strong.corpus_sequences / 2;
        Corpus ca = watermark_subcorpus(sctx, a, 0, half, 3);
        Corpus cb = watermark_subcorpus(sctx, b, half, 2 * half, 4);
        Corpus mixed;
        mixed.vocab = ca.vocab;
        mixed.provenance = Provenance::Mixed;
        mixed.seqs = ca.seqs;
        mixed.seqs.insert(mixed.seqs.end(), cb.seqs.begin(), cb.seqs.end());

        const NGramModel student = NGramModel::fit(
            mixed, strong.effective_student_order(1), strong.student_beta);
        const auto text = generate_student_text(sctx, student, {},
                                                strong.test_sequences,
                                                strong.test_continuation);
        rows.push_back(detect_source(sctx, student, text, a, "case2", "kgw+synthid",
                                     "kgw", group));
        rows.push_back(detect_source(sctx, student, text, b, "case2", "kgw+synthid",
                                     "synthid", group));
    }

    if (!opt.case3_ks.empty()) {
        // Case 3 dilutes the default-config watermark across k random keys.
        const PipelineContext dctx = PipelineContext::build(cfg);
        for (std::uint32_t k : opt.case3_ks) {
            std::vector<WatermarkSpec> specs;
            for (std::uint32_t i = 0; i < k; ++i) {
                WatermarkSpec s = cfg.watermark_spec();
                s.key.key = derive_seed(SeedPath(cfg.seed).child("ms_key", i));
                specs.push_back(s);
            }
            const std::size_t per = cfg.corpus_sequences / k;
            Corpus mixed;
            mixed.vocab = Vocab(cfg.vocab);
            mixed.provenance = Provenance::Mixed;
            for (std::uint32_t i = 0; i < k; ++i) {
                Corpus part = watermark_subcorpus(dctx, specs[i], i * per,
                                                  (i + 1) * per, 100 + i);
                mixed.seqs.insert(mixed.seqs.end(), part.seqs.begin(), part.seqs.end());
            }
            const NGramModel student = NGramModel::fit(
                mixed, cfg.effective_student_order(cfg.n), cfg.student_beta);
            const auto text = generate_student_text(dctx, student, {},
                                                    cfg.test_sequences,
                                                    cfg.test_continuation);
            for (std::uint32_t i = 0; i < k; ++i)
                rows.push_back(detect_source(dctx, student, text, specs[i], "case3",
                                             "k=" + std::to_string(k),
                                             "key" + std::to_string(i), group));
        }
    }
    return rows;
}

std::vector<DeltaSweepRow> run_delta_sweep(const ExperimentConfig& cfg,
                                           const std::vector<double>& deltas) {
    const PipelineContext ctx = PipelineContext::build(cfg);
    const WatermarkSpec spec = cfg.watermark_spec();
    const Corpus corpus = make_training_corpus(ctx, &spec);
    const std::uint32_t order = cfg.effective_student_order(cfg.n);
    const NGramModel student = NGramModel::fit(corpus, order, cfg.student_beta);
    const NGramModel o_model = make_o_model(ctx, order);
    const RuleTable rules =
        aggregate(o_model, student, corpus, cfg.n_prime, cfg.theta, cfg.alpha);

    const std::size_t group = cfg.group_sizes.size() > 1 ? cfg.group_sizes[1]
                                                         : cfg.group_sizes[0];
    std::vector<DeltaSweepRow> rows;
    for (double dp : deltas) {
        if (dp < 0.0) throw std::invalid_argument("run_delta_sweep: delta' >= 0");
        DeltaSweepRow row;
        row.delta_prime = dp;
        WnProcessor wn(rules, dp);
        StepProcessor* chain[] = {&wn};
        const auto text = generate_student_text(ctx, student, chain,
                                                cfg.test_sequences,
                                                cfg.test_continuation);
        const auto stream = score_stream(text, spec, Vocab(cfg.vocab));
        row.median_log10_p =
            group_and_report(stream, group, spec, Vocab(cfg.vocab)).median_log10_p;
        const WnView view(student, rules, dp);
        row.kl_clean = kl(ctx.teacher, view, ctx.knowledge_ctx);
        rows.push_back(row);
    }
    return rows;
}

}  // namespace wmlab
