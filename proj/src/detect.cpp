#include "wmlab/detect.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace wmlab {

namespace {
constexpr double kLn10 = 2.302585092994045684;
constexpr double kSqrt2 = 1.414213562373095049;
constexpr double kSqrt2Pi = 2.506628274631000502;
}  // namespace

double normal_log10_sf_asymptotic(double z) {
    const double z2 = z * z;
    const double bracket = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
    const double ln_q = -0.5 * z2 - std::log(z * kSqrt2Pi) + std::log(bracket);
    return ln_q / kLn10;
}

double normal_log10_sf(double z) {
    if (!std::isfinite(z)) throw std::invalid_argument("normal_log10_sf: non-finite z");
    if (z > 8.0) return normal_log10_sf_asymptotic(z);
    if (z >= 0.0) {
        // p = erfc(z/sqrt(2)) / 2; erfc does not underflow until far past z=8
        return (std::log(std::erfc(z / kSqrt2)) - std::log(2.0)) / kLn10;
    }
    // p = 1 - erfc(-z/sqrt(2))/2, evaluated via log1p to keep precision near 1
    return std::log1p(-0.5 * std::erfc(-z / kSqrt2)) / kLn10;
}

std::vector<ScoredToken> score_stream(std::span<const TokenSeq> seqs,
                                      const WatermarkSpec& spec,
                                      const Vocab& vocab) {
    std::vector<ScoredToken> out;
    for (const TokenSeq& s : seqs) {
        const auto& t = s.tokens;
        for (std::size_t i = s.prompt_len; i < t.size(); ++i) {
            if (t[i] >= vocab.size)
                throw std::invalid_argument("score_stream: token id out of vocab");
            std::span<const Token> ctx(t.data(), i);
            out.push_back({rule_hash(ctx, spec, vocab), t[i]});
        }
    }
    return out;
}

KgwResult kgw_z(std::span<const ScoredToken> stream, const WatermarkSpec& spec,
                const Vocab& vocab) {
    if (stream.empty()) throw std::invalid_argument("kgw_z: empty token stream");

    GreenCache cache(spec.key, spec.gamma, vocab, spec.complement);
    KgwResult r;
    r.total = stream.size();
    for (const ScoredToken& st : stream)
        if (cache.get(st.h).is_green(st.token)) ++r.greens;

    const double T = static_cast<double>(r.total);
    const double g = spec.gamma;
    r.z = (static_cast<double>(r.greens) - g * T) / std::sqrt(g * (1.0 - g) * T);
    return r;
}

SynthIdResult synthid_stat(std::span<const ScoredToken> stream,
                           const WatermarkSpec& spec, const Vocab& vocab) {
    if (stream.empty()) throw std::invalid_argument("synthid_stat: empty token stream");

    GCache cache(spec.key, spec.m, vocab);
    double ones = 0.0;
    for (const ScoredToken& st : stream) {
        const double* rows = cache.get(st.h);
        for (std::uint32_t l = 0; l < spec.m; ++l)
            ones += rows[static_cast<std::size_t>(l) * vocab.size + st.token];
    }
    SynthIdResult r;
    r.total = stream.size();
    r.m_total = static_cast<std::size_t>(spec.m) * stream.size();
    r.gbar = r.m_total ? ones / static_cast<double>(r.m_total) : 0.0;
    return r;
}

double synthid_log10_p(double gbar, std::size_t m, std::size_t T) {
    if (m * T == 0) throw std::invalid_argument("synthid_log10_p: m*T must be > 0");
    const double z = (gbar - 0.5) * std::sqrt(4.0 * static_cast<double>(m) *
                                              static_cast<double>(T));
    return normal_log10_sf(z);
}

double median(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("median: empty");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    if (n % 2) return v[n / 2];
    return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

DetectionReport group_and_report(std::span<const ScoredToken> stream,
                                 std::size_t group_size,
                                 const WatermarkSpec& spec, const Vocab& vocab) {
    if (group_size == 0) throw std::invalid_argument("group_and_report: group_size 0");
    if (stream.size() < group_size)
        throw std::invalid_argument("group_and_report: stream shorter than one group");

    DetectionReport rep;
    rep.group_size = group_size;
    const std::size_t n_groups = stream.size() / group_size;
    std::vector<double> ps;
    ps.reserve(n_groups);
    for (std::size_t gi = 0; gi < n_groups; ++gi) {
        auto grp = stream.subspan(gi * group_size, group_size);
        GroupResult gr;
        if (spec.kind == SchemeKind::KGW) {
            const KgwResult kr = kgw_z(grp, spec, vocab);
            gr.statistic = kr.z;
            gr.log10_p = normal_log10_sf(kr.z);
        } else {
            const SynthIdResult sr = synthid_stat(grp, spec, vocab);
            gr.statistic = sr.gbar;
            gr.log10_p = synthid_log10_p(sr.gbar, spec.m, sr.total);
        }
        rep.per_group.push_back(gr);
        ps.push_back(gr.log10_p);
    }
    rep.median_log10_p = median(std::move(ps));
    return rep;
}

DetectionReport detect_grouped(std::span<const TokenSeq> seqs,
                               std::size_t group_size, const WatermarkSpec& spec,
                               const Vocab& vocab) {
    const auto stream = score_stream(seqs, spec, vocab);
    return group_and_report(stream, group_size, spec, vocab);
}

void DetectionReport::write_csv(std::ostream& os) const {
    os << "group_index,statistic,log10_p\n";
    char buf[64];
    for (std::size_t i = 0; i < per_group.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%.10g,%.10g\n", i,
                      per_group[i].statistic, per_group[i].log10_p);
        os << buf;
    }
    std::snprintf(buf, sizeof(buf), "median,,%.10g\n", median_log10_p);
    os << buf;
}

}  // namespace wmlab
