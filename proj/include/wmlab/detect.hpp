#pragma once

/**
 * Watermark detectors and grouped reporting.
 *
 * Detection is key-complete: scored positions are reduced to (rule hash,
 * token) pairs derived from (spec, context) alone, then scored against
 * re-derived partitions / g-values. p-values live in log10 space
 * throughout; the normal tail is evaluated via erfc up to z=8 and an
 * asymptotic expansion beyond, so magnitudes like 1e-25979 are
 * representable.
 */

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "wmlab/core.hpp"
#include "wmlab/schemes.hpp"

namespace wmlab {

/// log10(1 - Phi(z)).
double normal_log10_sf(double z);

/// The z>8 branch exposed for the branch-continuity check.
double normal_log10_sf_asymptotic(double z);

/// One scored continuation token: its rule hash and the token itself.
struct ScoredToken {
    std::uint64_t h;
    Token token;
};

/// Flattens the continuation tokens of seqs (in order) into scored tokens.
/// Every scored token needs its n-1 preceding tokens; prompt tokens serve
/// as context but are not scored. A continuation token without enough
/// context is rejected.
std::vector<ScoredToken> score_stream(std::span<const TokenSeq> seqs,
                                      const WatermarkSpec& spec,
                                      const Vocab& vocab);

struct KgwResult {
    double z = 0.0;
    std::size_t greens = 0;
    std::size_t total = 0;
};

/// Eq-2 z-score over the scored stream: (|s|_G - gamma*T) / sqrt(gamma(1-gamma)T).
KgwResult kgw_z(std::span<const ScoredToken> stream, const WatermarkSpec& spec,
                const Vocab& vocab);

struct SynthIdResult {
    double gbar = 0.0;
    std::size_t m_total = 0;  // m*T
    std::size_t total = 0;    // T
};

/// Mean g-value over all layers and scored positions.
SynthIdResult synthid_stat(std::span<const ScoredToken> stream,
                           const WatermarkSpec& spec, const Vocab& vocab);

/// z = (gbar - 0.5) * sqrt(4mT), mapped through normal_log10_sf.
double synthid_log10_p(double gbar, std::size_t m, std::size_t T);

struct GroupResult {
    double statistic = 0.0;  // z (KGW) or gbar (SynthID)
    double log10_p = 0.0;
};

struct DetectionReport {
    std::size_t group_size = 0;
    std::vector<GroupResult> per_group;
    double median_log10_p = 0.0;

    void write_csv(std::ostream& os) const;
};

double median(std::vector<double> v);

/// Splits the stream into consecutive disjoint groups of exactly
/// group_size scored tokens (trailing remainder dropped), scores each with
/// the spec's detector, and reports the median log10 p.
DetectionReport group_and_report(std::span<const ScoredToken> stream,
                                 std::size_t group_size,
                                 const WatermarkSpec& spec, const Vocab& vocab);

/// Convenience: score_stream + group_and_report.
DetectionReport detect_grouped(std::span<const TokenSeq> seqs,
                               std::size_t group_size, const WatermarkSpec& spec,
                               const Vocab& vocab);

}  // namespace wmlab
