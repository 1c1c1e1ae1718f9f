// wmlab: n-gram watermarking laboratory CLI.
//
// Subcommands: gen-teacher, gen-corpus, distill, detect, steal,
// attack {up|tp|wn}, exp {table1|fig2|fig4|table2|multisource|delta-sweep}.
// Every run writes its effective config next to its outputs; re-invoking on
// that file with the same seed reproduces the CSV outputs byte for byte.
//
// Exit codes: 0 success, 1 validation error, 2 runtime error.

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "wmlab/attacks.hpp"
#include "wmlab/config.hpp"
#include "wmlab/detect.hpp"
#include "wmlab/pipeline.hpp"
#include "wmlab/steal.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace wmlab;

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir = "out";
    std::string seed_flag;     // highest priority
    std::string workers_flag;
};

void add_common(CLI::App* app, CommonArgs& a) {
    app->footer("Config keys: see `wmlab --help`; all are accepted via --set key=value.");
    app->add_option("--config", a.config_path, "config file (flat key = value)");
    app->add_option("--set", a.overrides,
                    "config override key=value (repeatable; applied after the file)");
    app->add_option("--out", a.out_dir, "output directory");
    app->add_option("--seed", a.seed_flag,
                    "master seed (overrides WMLAB_SEED and the config)");
    app->add_option("--workers", a.workers_flag, "worker threads");
}

Config load_config(const CommonArgs& a) {
    Config cfg = parse_config(a.config_path, a.overrides);
    // seed priority: flag > env > config > default
    if (!a.seed_flag.empty()) {
        cfg.apply_override("seed=" + a.seed_flag);
    } else if (!cfg.was_set("seed")) {
        if (const char* env = std::getenv("WMLAB_SEED"))
            cfg.apply_override("seed=" + std::string(env));
    }
    if (!a.workers_flag.empty()) cfg.apply_override("workers=" + a.workers_flag);
    return cfg;
}

void write_effective_config(const Config& cfg, const fs::path& dir) {
    fs::create_directories(dir);
    std::ofstream f(dir / "effective.config");
    cfg.write(f);
}

void write_text(const fs::path& p, const std::string& content) {
    std::ofstream f(p);
    f << content;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

Corpus load_corpus(const std::string& path, const ExperimentConfig& e) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open corpus file '" + path + "'");
    return read_corpus(f, Vocab(e.vocab));
}

NGramModel load_model(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open model file '" + path + "'");
    return NGramModel::load(f);
}

// ---------------------------------------------------------------------------

int cmd_gen_teacher(const CommonArgs& a) {
    const Config cfg = load_config(a);
    const ExperimentConfig e = materialize(cfg);
    write_effective_config(cfg, a.out_dir);
    std::ostringstream os;
    os << "vocab = " << e.vocab << "\n"
       << "order = " << e.teacher_order << "\n"
       << "skew = " << e.teacher_skew << "\n"
       << "seed = " << derive_seed(SeedPath(e.seed).child("teacher")) << "\n";
    write_text(fs::path(a.out_dir) / "teacher.params", os.str());
    std::cout << "teacher parameters written to " << a.out_dir << "/teacher.params\n";
    return 0;
}

int cmd_gen_corpus(const CommonArgs& a, bool clean) {
    const Config cfg = load_config(a);
    const ExperimentConfig e = materialize(cfg);
    write_effective_config(cfg, a.out_dir);

    const PipelineContext ctx = PipelineContext::build(e);
    const WatermarkSpec spec = e.watermark_spec();
    const Corpus corpus = make_training_corpus(ctx, clean ? nullptr : &spec);

    std::ofstream f(fs::path(a.out_dir) / "corpus.txt");
    write_corpus(f, corpus);
    std::ostringstream meta;
    meta << "provenance=" << provenance_name(corpus.provenance) << "\n"
         << "sequences=" << corpus.seqs.size() << "\n"
         << "continuation_tokens=" << corpus.continuation_tokens() << "\n";
    write_text(fs::path(a.out_dir) / "corpus.meta", meta.str());
    std::cout << "corpus: " << corpus.seqs.size() << " sequences, "
              << corpus.continuation_tokens() << " continuation tokens\n";
    return 0;
}

int cmd_distill(const CommonArgs& a, const std::string& corpus_path) {
    const Config cfg = load_config(a);
    const ExperimentConfig e = materialize(cfg);
    write_effective_config(cfg, a.out_dir);

    const Corpus corpus = load_corpus(corpus_path, e);
    const NGramModel student = NGramModel::fit(
        corpus, e.effective_student_order(e.n), e.student_beta);
    std::ofstream f(fs::path(a.out_dir) / "student.wmlm", std::ios::binary);
    student.save(f);
    std::cout << "student model (order " << student.order() << ") written to "
              << a.out_dir << "/student.wmlm\n";
    return 0;
}

int cmd_detect(const CommonArgs& a, const std::string& corpus_path) {
    const Config cfg = load_config(a);
    const ExperimentConfig e = materialize(cfg);
    write_effective_config(cfg, a.out_dir);

    const Corpus corpus = load_corpus(corpus_path, e);
    const WatermarkSpec spec = e.watermark_spec();
    for (std::size_t g : e.group_sizes) {
        const DetectionReport rep =
            detect_grouped(corpus.seqs, g, spec, Vocab(e.vocab));
        std::ofstream f(fs::path(a.out_dir) /
                        ("report_" + std::to_string(g) + ".csv"));
        rep.write_csv(f);
        std::cout << "group_size=" << g
                  << " median_log10_p=" << fmt(rep.median_log10_p) << "\n";
    }
    return 0;
}

int cmd_steal(const CommonArgs& a, const std::string& corpus_path,
              const std::string& model_w_path, const std::string& model_o_path) {
    const Config cfg = load_config(a);
    const ExperimentConfig e = materialize(cfg);
    write_effective_config(cfg, a.out_dir);

    const Corpus corpus = load_corpus(corpus_path, e);
    const std::uint32_t order = e.effective_student_order(e.n);

    NGramModel model_w = model_w_path.empty()
                             ? NGramModel::fit(corpus, order, e.student_beta)
                             : load_model(model_w_path);
    NGramModel model_o = [&] {
        if (!model_o_path.empty()) return load_model(model_o_path);
        const PipelineContext ctx = PipelineContext::build(e);
        return make_o_model(ctx, model_w.order());
    }();

    const RuleTable rules =
        aggregate(model_o, model_w, corpus, e.n_prime, e.theta, e.alpha);
    std::ofstream f(fs::path(a.out_dir) / "rules.csv");
    rules.write_csv(f);
    std::cout << "rule table: " << rules.windowed_entries()
              << " windowed entries written to " << a.out_dir << "/rules.csv\n";
    return 0;
}

int cmd_attack(const CommonArgs& a, const std::string& which,
               const std::string& corpus_path, const std::string& rules_path,
               const std::string& model_path) {
    const Config cfg = load_config(a);
    const ExperimentConfig e = materialize(cfg);
    write_effective_config(cfg, a.out_dir);

    std::ostringstream meta;
    meta << "attack=" << which << "\n";

    if (which == "up" || which == "tp") {
        const Corpus corpus = load_corpus(corpus_path, e);
        const PipelineContext ctx = PipelineContext::build(e);
        const std::uint32_t order = e.effective_student_order(e.n);
        const NGramModel paraphraser = make_o_model(ctx, order);

        RuleTable rules;
        ParaphraseSpec pspec;
        pspec.paraphraser = &paraphraser;
        pspec.lambda = e.lambda;
        if (which == "tp") {
            if (rules_path.empty())
                throw ConfigError("attack tp: --rules is required");
            std::ifstream rf(rules_path);
            if (!rf) throw std::runtime_error("cannot open rules file");
            rules = RuleTable::read_csv(rf, e.vocab);
            pspec.inverse = InverseSpec{&rules, e.delta_prime};
            meta << "delta_prime=" << e.delta_prime << "\n"
                 << "rule_table=" << rules_path << "\n";
        }
        meta << "lambda=" << e.lambda << "\n";
        const Corpus out = paraphrase(
            corpus, pspec, derive_seed(SeedPath(e.seed).child("paraphrase")),
            e.workers);
        std::ofstream f(fs::path(a.out_dir) / "corpus.txt");
        write_corpus(f, out);
    } else {  // wn
        if (model_path.empty() || rules_path.empty())
            throw ConfigError("attack wn: --model and --rules are required");
        const NGramModel student = load_model(model_path);
        std::ifstream rf(rules_path);
        if (!rf) throw std::runtime_error("cannot open rules file");
        const RuleTable rules = RuleTable::read_csv(rf, e.vocab);

        const PipelineContext ctx = PipelineContext::build(e);
        WnProcessor wn(rules, e.delta_prime);
        StepProcessor* chain[] = {&wn};
        const auto text = generate_student_text(ctx, student, chain,
                                                e.test_sequences,
                                                e.test_continuation);
        Corpus out;
        out.vocab = Vocab(e.vocab);
        out.provenance = Provenance::TeacherClean;
        out.seqs = text;
        std::ofstream f(fs::path(a.out_dir) / "corpus.txt");
        write_corpus(f, out);
        meta << "delta_prime=" << e.delta_prime << "\n"
             << "rule_table=" << rules_path << "\n";
    }
    write_text(fs::path(a.out_dir) / "attack.meta", meta.str());
    std::cout << which << " attack output written to " << a.out_dir << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// experiments

json base_summary(const ExperimentConfig& e) {
    json j;
    j["seed"] = e.seed;
    j["vocab"] = e.vocab;
    j["scheme"] = e.scheme == SchemeKind::KGW ? "kgw" : "synthid";
    return j;
}

int exp_table2(const CommonArgs& a, Config cfg) {
    write_effective_config(cfg, a.out_dir);
    const auto t0 = std::chrono::steady_clock::now();

    std::ostringstream csv;
    csv << "scheme,n,group_size,condition,median_log10_p\n";
    json summary;
    for (const std::string scheme : {"kgw", "synthid"}) {
        for (std::uint32_t n : {1u, 2u}) {
            Config c = cfg;
            c.apply_override("watermark.kind=" + scheme);
            c.apply_override("watermark.n=" + std::to_string(n));
            const ExperimentConfig e = materialize(c);
            const PipelineContext ctx = PipelineContext::build(e);
            struct Cond { const char* name; AttackKind atk; bool wm; };
            for (const Cond cond : {Cond{"unw", AttackKind::None, false},
                                    Cond{"none", AttackKind::None, true},
                                    Cond{"up", AttackKind::UP, true},
                                    Cond{"tp", AttackKind::TP, true},
                                    Cond{"wn", AttackKind::WN, true}}) {
                const DistillDetectResult r = run_condition(ctx, cond.atk, cond.wm);
                for (std::size_t gi = 0; gi < e.group_sizes.size(); ++gi)
                    csv << scheme << ',' << n << ',' << e.group_sizes[gi] << ','
                        << cond.name << ','
                        << fmt(r.reports[gi].median_log10_p) << "\n";
                json& row = summary[scheme]["n" + std::to_string(n)][cond.name];
                row["full_statistic"] = r.full_statistic;
                row["full_log10_p"] = r.full_log10_p;
                row["kl_clean"] = r.kl_clean;
                row["ce_clean"] = r.ce_clean;
                std::cout << scheme << " n=" << n << " " << cond.name
                          << ": median(g" << e.group_sizes[1 % e.group_sizes.size()]
                          << ")="
                          << fmt(r.reports[1 % e.group_sizes.size()].median_log10_p)
                          << " KL=" << fmt(r.kl_clean) << "\n";
            }
        }
    }
    write_text(fs::path(a.out_dir) / "table2.csv", csv.str());
    summary["wall_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_text(fs::path(a.out_dir) / "summary.json", summary.dump(2) + "\n");
    return 0;
}

int exp_table1(const CommonArgs& a, Config cfg) {
    write_effective_config(cfg, a.out_dir);
    const auto t0 = std::chrono::steady_clock::now();
    const ExperimentConfig e = materialize(cfg);
    const auto rows = run_window_size_table(e, {1, 2, 3, 4});

    std::ostringstream csv;
    csv << "n,student_order,group_size,median_log10_p\n";
    for (const auto& row : rows)
        for (const auto& [g, med] : row.median_by_group)
            csv << row.n << ',' << row.student_order << ',' << g << ',' << fmt(med)
                << "\n";
    write_text(fs::path(a.out_dir) / "table1.csv", csv.str());

    json summary = base_summary(e);
    for (const auto& row : rows)
        for (const auto& [g, med] : row.median_by_group)
            summary["rows"]["n" + std::to_string(row.n)]
                   ["g" + std::to_string(g)] = med;
    summary["wall_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_text(fs::path(a.out_dir) / "summary.json", summary.dump(2) + "\n");
    for (const auto& row : rows)
        std::cout << "n=" << row.n << " order=" << row.student_order << " median="
                  << fmt(row.median_by_group.count(3000)
                             ? row.median_by_group.at(3000)
                             : row.median_by_group.begin()->second)
                  << "\n";
    return 0;
}

int exp_fig2(const CommonArgs& a, Config cfg) {
    // frequency-radioactivity profile: reduced corpus, window-resolution student
    cfg.default_unless_set("watermark.n", "3");
    cfg.default_unless_set("corpus.sequences", "2000");
    cfg.default_unless_set("student.order", "3");
    write_effective_config(cfg, a.out_dir);
    const auto t0 = std::chrono::steady_clock::now();
    const ExperimentConfig e = materialize(cfg);
    const FrequencyRadioactivityResult r = run_frequency_radioactivity(e);

    std::ostringstream csv;
    csv << "f_lo,f_hi,tokens,rate\n";
    for (const auto& b : r.buckets)
        csv << fmt(b.f_lo) << ',' << fmt(b.f_hi) << ',' << b.tokens << ','
            << fmt(b.rate) << "\n";
    write_text(fs::path(a.out_dir) / "fig2.csv", csv.str());

    json summary = base_summary(e);
    summary["spearman_rho"] = r.spearman_rho;
    summary["spearman_p"] = r.spearman_p;
    summary["null_rate"] = r.null_rate;
    summary["wall_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_text(fs::path(a.out_dir) / "summary.json", summary.dump(2) + "\n");
    std::cout << "spearman rho=" << fmt(r.spearman_rho) << " p=" << fmt(r.spearman_p)
              << " buckets=" << r.buckets.size() << "\n";
    return 0;
}

int exp_fig4(const CommonArgs& a, Config cfg) {
    write_effective_config(cfg, a.out_dir);
    const auto t0 = std::chrono::steady_clock::now();
    const ExperimentConfig e = materialize(cfg);
    const auto rows = run_prefix_coverage(e, {1, 2, 3, 4});

    std::ostringstream csv;
    csv << "n,high_freq_share,seen_low_share,unseen_share\n";
    for (const auto& r : rows)
        csv << r.n << ',' << fmt(r.high_freq_share) << ',' << fmt(r.seen_low_share)
            << ',' << fmt(r.unseen_share) << "\n";
    write_text(fs::path(a.out_dir) / "fig4.csv", csv.str());

    json summary = base_summary(e);
    summary["wall_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_text(fs::path(a.out_dir) / "summary.json", summary.dump(2) + "\n");
    for (const auto& r : rows)
        std::cout << "n=" << r.n << " high=" << fmt(r.high_freq_share)
                  << " unseen=" << fmt(r.unseen_share) << "\n";
    return 0;
}

int exp_multisource(const CommonArgs& a, Config cfg) {
    write_effective_config(cfg, a.out_dir);
    const auto t0 = std::chrono::steady_clock::now();
    const ExperimentConfig e = materialize(cfg);
    const auto rows = run_multi_source(e, MultiSourceOptions{});

    std::ostringstream csv;
    csv << "case,config,detector,median_log10_p,kl_clean\n";
    for (const auto& r : rows)
        csv << r.case_name << ',' << r.config << ',' << r.detector << ','
            << fmt(r.median_log10_p) << ',' << fmt(r.kl_clean) << "\n";
    write_text(fs::path(a.out_dir) / "multisource.csv", csv.str());

    json summary = base_summary(e);
    summary["wall_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_text(fs::path(a.out_dir) / "summary.json", summary.dump(2) + "\n");
    for (const auto& r : rows)
        std::cout << r.case_name << " " << r.config << " " << r.detector
                  << ": median=" << fmt(r.median_log10_p)
                  << " KL=" << fmt(r.kl_clean) << "\n";
    return 0;
}

int exp_delta_sweep(const CommonArgs& a, Config cfg, const std::string& deltas_arg) {
    write_effective_config(cfg, a.out_dir);
    const auto t0 = std::chrono::steady_clock::now();
    const ExperimentConfig e = materialize(cfg);

    std::vector<double> deltas;
    std::istringstream ds(deltas_arg);
    std::string item;
    while (std::getline(ds, item, ',')) deltas.push_back(std::stod(item));

    const auto rows = run_delta_sweep(e, deltas);
    std::ostringstream csv;
    csv << "delta_prime,median_log10_p,kl_clean\n";
    for (const auto& r : rows)
        csv << fmt(r.delta_prime) << ',' << fmt(r.median_log10_p) << ','
            << fmt(r.kl_clean) << "\n";
    write_text(fs::path(a.out_dir) / "delta_sweep.csv", csv.str());

    json summary = base_summary(e);
    summary["wall_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_text(fs::path(a.out_dir) / "summary.json", summary.dump(2) + "\n");
    for (const auto& r : rows)
        std::cout << "delta'=" << fmt(r.delta_prime)
                  << " median=" << fmt(r.median_log10_p) << " KL=" << fmt(r.kl_clean)
                  << "\n";
    return 0;
}

std::string config_keys_help() {
    std::string out = "Config keys (also usable with --set key=value):\n";
    for (const auto& [key, doc] : Config::documented_keys())
        out += "  " + key + std::string(key.size() < 24 ? 24 - key.size() : 1, ' ') +
               doc + "\n";
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"wmlab: n-gram LLM watermarking laboratory"};
    app.require_subcommand(1);
    app.footer(config_keys_help());

    CommonArgs a;
    std::string corpus_path, rules_path, model_path, model_w_path, model_o_path;
    std::string deltas_arg = "0,0.5,1,1.5,2,2.5,3,4,5";

    auto* gen_teacher = app.add_subcommand("gen-teacher", "write teacher parameters");
    add_common(gen_teacher, a);

    auto* gen_corpus = app.add_subcommand("gen-corpus", "generate a training corpus");
    add_common(gen_corpus, a);
    bool clean = false;
    gen_corpus->add_flag("--clean", clean, "no watermark (control corpus)");

    auto* distill = app.add_subcommand("distill", "fit a student model on a corpus");
    add_common(distill, a);
    distill->add_option("--corpus", corpus_path, "corpus file")->required();

    auto* detect = app.add_subcommand("detect", "grouped watermark detection");
    add_common(detect, a);
    detect->add_option("--corpus", corpus_path, "text to score")->required();

    auto* steal = app.add_subcommand("steal", "extract a watermark rule table");
    add_common(steal, a);
    steal->add_option("--corpus", corpus_path, "training corpus")->required();
    steal->add_option("--model-w", model_w_path, "trained student snapshot "
                      "(default: fit from the corpus)");
    steal->add_option("--model-o", model_o_path, "original student snapshot "
                      "(default: fit per steal.o_model)");

    auto* attack = app.add_subcommand("attack", "watermark removal attacks");
    attack->require_subcommand(1);
    std::string attack_kind;
    for (const char* kind : {"up", "tp", "wn"}) {
        auto* sub = attack->add_subcommand(kind);
        add_common(sub, a);
        if (std::string(kind) != "wn")
            sub->add_option("--corpus", corpus_path, "corpus to paraphrase")->required();
        if (std::string(kind) != "up")
            sub->add_option("--rules", rules_path, "stolen rule table csv");
        if (std::string(kind) == "wn")
            sub->add_option("--model", model_path, "student snapshot");
        sub->callback([kind, &attack_kind] { attack_kind = kind; });
    }

    auto* exp = app.add_subcommand("exp", "end-to-end experiments");
    exp->require_subcommand(1);
    std::string exp_kind;
    for (const char* kind :
         {"table1", "fig2", "fig4", "table2", "multisource", "delta-sweep"}) {
        auto* sub = exp->add_subcommand(kind);
        add_common(sub, a);
        if (std::string(kind) == "delta-sweep")
            sub->add_option("--deltas", deltas_arg, "comma-separated delta' values");
        sub->callback([kind, &exp_kind] { exp_kind = kind; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;  // argument errors are validation errors
    }

    try {
        if (gen_teacher->parsed()) return cmd_gen_teacher(a);
        if (gen_corpus->parsed()) return cmd_gen_corpus(a, clean);
        if (distill->parsed()) return cmd_distill(a, corpus_path);
        if (detect->parsed()) return cmd_detect(a, corpus_path);
        if (steal->parsed()) return cmd_steal(a, corpus_path, model_w_path, model_o_path);
        if (attack->parsed())
            return cmd_attack(a, attack_kind, corpus_path, rules_path, model_path);
        if (exp->parsed()) {
            Config cfg = load_config(a);
            if (exp_kind == "table1") return exp_table1(a, cfg);
            if (exp_kind == "fig2") return exp_fig2(a, cfg);
            if (exp_kind == "fig4") return exp_fig4(a, cfg);
            if (exp_kind == "table2") return exp_table2(a, cfg);
            if (exp_kind == "multisource") return exp_multisource(a, cfg);
            if (exp_kind == "delta-sweep") return exp_delta_sweep(a, cfg, deltas_arg);
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
