#pragma once

/**
 * End-to-end experiments: teacher -> watermarked corpus -> (attack) ->
 * student fit -> held-out generation -> grouped detection + knowledge
 * metrics. Every pipeline is a pure function of its ExperimentConfig; all
 * randomness comes from labeled paths off the master seed and parallel
 * fan-out is per-sequence with per-index seeds, so worker count never
 * changes a number.
 */

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "wmlab/attacks.hpp"
#include "wmlab/config.hpp"
#include "wmlab/detect.hpp"
#include "wmlab/lm.hpp"
#include "wmlab/steal.hpp"

namespace wmlab {

/// Shared first stages of a run, reusable across conditions.
struct PipelineContext {
    ExperimentConfig cfg;
    NGramModel teacher;        // the watermarked service's model
    NGramModel teacher_o;      // disjoint-seeded teacher behind the O student
    std::vector<TokenSeq> train_prompts;
    std::vector<TokenSeq> test_prompts;  // disjoint from train (hash-checked)
    std::vector<std::vector<Token>> knowledge_ctx;  // clean-teacher windows

    static PipelineContext build(const ExperimentConfig& cfg);
};

/// Watermarked (or clean) training corpus from the teacher.
Corpus make_training_corpus(const PipelineContext& ctx, const WatermarkSpec* spec);

/// The O stand-in: student fit on a disjoint clean corpus (or uniform).
NGramModel make_o_model(const PipelineContext& ctx, std::uint32_t order);

/// Student text on the held-out prompts, with an optional processor chain.
std::vector<TokenSeq> generate_student_text(const PipelineContext& ctx,
                                            const NGramModel& student,
                                            std::span<StepProcessor* const> chain,
                                            std::size_t sequences,
                                            std::size_t continuation);

struct DistillDetectResult {
    std::string condition;                      // unw | none | up | tp | wn
    std::vector<DetectionReport> reports;       // one per configured group size
    double full_statistic = 0.0;                // z (KGW) or gbar (SynthID)
    double full_log10_p = 0.0;
    double kl_clean = 0.0;                      // KL(clean teacher || student effective)
    double ce_clean = 0.0;
    double wall_seconds = 0.0;
};

/// One condition end to end. With attack=WN the student itself is the
/// no-attack student and the neutralization runs at decode time.
DistillDetectResult run_distill_detect(const ExperimentConfig& cfg);

/// Same, reusing a prebuilt context (for sweeps).
DistillDetectResult run_condition(const PipelineContext& ctx, AttackKind attack,
                                  bool watermarked = true);

struct WindowSizeRow {
    std::uint32_t n = 0;
    std::uint32_t student_order = 0;
    std::map<std::size_t, double> median_by_group;  // group size -> median log10 p
};

/// Table-1 analogue: one no-attack run per n, student order n+1, all else fixed.
std::vector<WindowSizeRow> run_window_size_table(const ExperimentConfig& cfg,
                                                 const std::vector<std::uint32_t>& ns);

struct FrequencyBucket {
    double f_lo = 0.0;   // exclusive lower edge; [0,0] is the unseen bucket
    double f_hi = 0.0;   // inclusive upper edge
    std::size_t tokens = 0;
    double rate = 0.0;   // green rate (KGW) or mean g (SynthID)
};

struct FrequencyRadioactivityResult {
    std::vector<FrequencyBucket> buckets;
    double spearman_rho = 0.0;
    double spearman_p = 1.0;   // one-sided permutation p-value
    double null_rate = 0.5;    // gamma (KGW) or 0.5 (SynthID)
};

/// Fig-2 analogue. Requires n >= 2 (prefix-dependent rules).
FrequencyRadioactivityResult run_frequency_radioactivity(const ExperimentConfig& cfg);

struct CoverageRow {
    std::uint32_t n = 0;
    double high_freq_share = 0.0;  // f > theta
    double seen_low_share = 0.0;   // 0 < f <= theta
    double unseen_share = 0.0;
};

/// Fig-4 analogue over student-generated text.
std::vector<CoverageRow> run_prefix_coverage(const ExperimentConfig& cfg,
                                             const std::vector<std::uint32_t>& ns);

struct MultiSourceRow {
    std::string case_name;   // case1 | case2 | case3
    std::string config;      // e.g. "k=4" or "kgw+synthid"
    std::string detector;    // which source's detector
    double median_log10_p = 0.0;
    double kl_clean = 0.0;
};

struct MultiSourceOptions {
    bool run_case1 = true;
    bool run_case2 = true;
    std::vector<std::uint32_t> case3_ks{1, 2, 4, 8};
};

std::vector<MultiSourceRow> run_multi_source(const ExperimentConfig& cfg,
                                             const MultiSourceOptions& opt);

struct DeltaSweepRow {
    double delta_prime = 0.0;
    double median_log10_p = 0.0;  // at the middle group size
    double kl_clean = 0.0;
};

/// WN strength sweep; one student fit, per-delta' decode + closed-form KL.
std::vector<DeltaSweepRow> run_delta_sweep(const ExperimentConfig& cfg,
                                           const std::vector<double>& deltas);

// ---------------------------------------------------------------------------

/// Spearman rank correlation with a deterministic one-sided permutation
/// p-value (exact enumeration when feasible, otherwise seeded Monte Carlo).
struct SpearmanResult {
    double rho = 0.0;
    double p_one_sided = 1.0;
};
SpearmanResult spearman_test(std::span<const double> x, std::span<const double> y,
                             std::uint64_t seed, std::size_t max_perms = 100000);

}  // namespace wmlab
