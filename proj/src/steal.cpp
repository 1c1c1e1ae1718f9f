#include "wmlab/steal.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace wmlab {

PrefixStats prefix_frequencies(const Corpus& corpus, std::uint32_t n_prime) {
    if (corpus.seqs.empty())
        throw std::invalid_argument("prefix_frequencies: empty corpus");
    PrefixStats st;
    if (n_prime < 2) return st;
    st.per_k.resize(n_prime - 1);

    const std::uint32_t V = corpus.vocab.size;
    for (const TokenSeq& s : corpus.seqs) {
        const auto& t = s.tokens;
        for (std::size_t i = s.prompt_len; i < t.size(); ++i) {
            for (std::uint32_t k = 1; k < n_prime; ++k) {
                if (i < k) continue;
                std::span<const Token> pre(t.data() + i - k, k);
                auto& pk = st.per_k[k - 1];
                ++pk.counts[pack_ctx(pre, V)];
                ++pk.total;
            }
        }
    }
    for (auto& pk : st.per_k) {
        std::uint64_t mx = 0;
        for (const auto& [key, c] : pk.counts) mx = std::max(mx, c);
        pk.max_freq = pk.total ? static_cast<double>(mx) / static_cast<double>(pk.total) : 0.0;
    }
    return st;
}

Dist avg_next_dist(const NGramModel& model, const Corpus& corpus,
                   std::span<const Token> prefix) {
    if (prefix.empty()) throw std::invalid_argument("avg_next_dist: empty prefix");
    const std::size_t k = prefix.size();
    Dist acc;
    acc.probs.assign(corpus.vocab.size, 0.0);
    std::size_t n = 0;
    for (const TokenSeq& s : corpus.seqs) {
        const auto& t = s.tokens;
        for (std::size_t i = s.prompt_len; i < t.size(); ++i) {
            if (i < k) continue;
            if (!std::equal(prefix.begin(), prefix.end(), t.data() + i - k)) continue;
            const Dist d = model.next_dist(std::span<const Token>(t.data(), i));
            for (std::size_t j = 0; j < acc.probs.size(); ++j)
                acc.probs[j] += d.probs[j];
            ++n;
        }
    }
    if (n == 0) throw std::invalid_argument("avg_next_dist: prefix absent from corpus");
    for (double& p : acc.probs) p /= static_cast<double>(n);
    return acc;
}

double weight(double f, double max_f, double alpha, double theta) {
    if (f <= theta) return 0.0;
    if (!(f <= max_f))
        throw std::invalid_argument("weight: f must be <= max_f");
    if (max_f >= 1.0)
        throw std::invalid_argument(
            "weight: max_f = 1 (degenerate single-prefix corpus) is rejected");
    return std::pow(std::log(f) / std::log(max_f), -alpha);
}

namespace {

/// Mean next_dist rows of one model, accumulated per group id in one corpus
/// pass. group id -1 skips the position.
std::vector<std::vector<double>> averaged_rows(
    const NGramModel& model, const Corpus& corpus,
    const std::function<std::int64_t(const TokenSeq&, std::size_t)>& group_of,
    std::size_t n_groups, std::vector<std::uint64_t>* counts_out) {
    const std::uint32_t V = corpus.vocab.size;
    std::vector<std::vector<double>> acc(n_groups, std::vector<double>(V, 0.0));
    std::vector<std::uint64_t> counts(n_groups, 0);
    for (const TokenSeq& s : corpus.seqs) {
        const auto& t = s.tokens;
        for (std::size_t i = s.prompt_len; i < t.size(); ++i) {
            const std::int64_t g = group_of(s, i);
            if (g < 0) continue;
            const Dist d = model.next_dist(std::span<const Token>(t.data(), i));
            auto& row = acc[static_cast<std::size_t>(g)];
            for (std::uint32_t j = 0; j < V; ++j) row[j] += d.probs[j];
            ++counts[static_cast<std::size_t>(g)];
        }
    }
    for (std::size_t g = 0; g < n_groups; ++g)
        if (counts[g])
            for (double& v : acc[g]) v /= static_cast<double>(counts[g]);
    if (counts_out) *counts_out = std::move(counts);
    return acc;
}

}  // namespace

std::vector<double> global_d(const NGramModel& model_o, const NGramModel& model_w,
                             const Corpus& corpus) {
    auto all = [](const TokenSeq&, std::size_t) -> std::int64_t { return 0; };
    const auto avg_w = averaged_rows(model_w, corpus, all, 1, nullptr);
    const auto avg_o = averaged_rows(model_o, corpus, all, 1, nullptr);
    std::vector<double> d(corpus.vocab.size, 0.0);
    for (std::size_t i = 0; i < d.size(); ++i)
        d[i] = d_score(avg_w[0][i], avg_o[0][i]);
    return d;
}

double RuleTable::lookup(Token x, std::span<const Token> window) const {
    double out = global.empty() ? 0.0 : global[x];
    for (std::uint32_t k = 1; k < n_prime; ++k) {
        if (window.size() < k || windowed.size() < k) continue;
        const auto& wk = windowed[k - 1];
        auto it = wk.find(pack_ctx(window.subspan(window.size() - k), vocab_size));
        if (it == wk.end()) continue;
        const Row& row = it->second;
        auto pos = std::lower_bound(row.toks.begin(), row.toks.end(), x);
        if (pos != row.toks.end() && *pos == x)
            out += row.vals[static_cast<std::size_t>(pos - row.toks.begin())];
    }
    return out;
}

void RuleTable::accumulate_row(std::span<const Token> window,
                               std::span<double> out) const {
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] += global.empty() ? 0.0 : global[i];
    for (std::uint32_t k = 1; k < n_prime; ++k) {
        if (window.size() < k || windowed.size() < k) continue;
        const auto& wk = windowed[k - 1];
        auto it = wk.find(pack_ctx(window.subspan(window.size() - k), vocab_size));
        if (it == wk.end()) continue;
        const Row& row = it->second;
        for (std::size_t j = 0; j < row.toks.size(); ++j) out[row.toks[j]] += row.vals[j];
    }
}

std::size_t RuleTable::windowed_entries() const {
    std::size_t n = 0;
    for (const auto& wk : windowed)
        for (const auto& [key, row] : wk) n += row.toks.size();
    return n;
}

RuleTable aggregate(const NGramModel& model_o, const NGramModel& model_w,
                    const Corpus& corpus, std::uint32_t n_prime, double theta,
                    double alpha) {
    if (n_prime < 1) throw std::invalid_argument("aggregate: n_prime must be >= 1");

    RuleTable rt;
    rt.vocab_size = corpus.vocab.size;
    rt.n_prime = n_prime;
    rt.theta = theta;
    rt.alpha = alpha;
    rt.global = global_d(model_o, model_w, corpus);
    if (n_prime == 1) return rt;

    const PrefixStats stats = prefix_frequencies(corpus, n_prime);
    rt.windowed.resize(n_prime - 1);

    const std::uint32_t V = corpus.vocab.size;
    for (std::uint32_t k = 1; k < n_prime; ++k) {
        const auto& pk = stats.per_k[k - 1];
        // prefixes passing the frequency threshold, in deterministic order
        std::vector<std::uint64_t> keep;
        for (const auto& [key, c] : pk.counts) {
            const double f = static_cast<double>(c) / static_cast<double>(pk.total);
            if (f > theta) keep.push_back(key);
        }
        if (keep.empty()) continue;
        std::sort(keep.begin(), keep.end());
        std::unordered_map<std::uint64_t, std::size_t> gid;
        gid.reserve(keep.size());
        for (std::size_t g = 0; g < keep.size(); ++g) gid.emplace(keep[g], g);

        auto group_of = [&](const TokenSeq& s, std::size_t i) -> std::int64_t {
            if (i < k) return -1;
            const std::uint64_t key =
                pack_ctx(std::span<const Token>(s.tokens.data() + i - k, k), V);
            auto it = gid.find(key);
            return it == gid.end() ? -1 : static_cast<std::int64_t>(it->second);
        };
        const auto avg_w = averaged_rows(model_w, corpus, group_of, keep.size(), nullptr);
        const auto avg_o = averaged_rows(model_o, corpus, group_of, keep.size(), nullptr);

        for (std::size_t g = 0; g < keep.size(); ++g) {
            const double f = stats.freq(k, keep[g]);
            const double w = weight(f, pk.max_freq, alpha, theta);
            if (w <= 0.0) continue;
            RuleTable::Row row;
            for (std::uint32_t x = 0; x < V; ++x) {
                const double d = d_score(avg_w[g][x], avg_o[g][x]);
                if (d > 0.0) {
                    row.toks.push_back(x);
                    row.vals.push_back(w * d);
                }
            }
            if (!row.toks.empty())
                rt.windowed[k - 1].emplace(keep[g], std::move(row));
        }
    }
    return rt;
}

// ---------------------------------------------------------------------------

namespace {

void unpack_prefix(std::uint64_t key, std::uint32_t vocab_size, std::uint32_t len,
                   std::vector<Token>& out) {
    out.assign(len, 0);
    const std::uint64_t base = vocab_size + 1ull;
    for (std::uint32_t i = len; i-- > 0;) {
        out[i] = static_cast<Token>(key % base) - 1;
        key /= base;
    }
}

}  // namespace

void RuleTable::write_csv(std::ostream& os) const {
    os << "window_len,prefix_tokens,token,D\n";
    char buf[128];
    for (std::uint32_t x = 0; x < vocab_size; ++x) {
        if (global.empty() || global[x] == 0.0) continue;
        std::snprintf(buf, sizeof(buf), "0,,%u,%.17g\n", x, global[x]);
        os << buf;
    }
    std::vector<Token> pre;
    for (std::uint32_t k = 1; k <= windowed.size(); ++k) {
        std::map<std::uint64_t, const Row*> sorted;
        for (const auto& [key, row] : windowed[k - 1]) sorted.emplace(key, &row);
        for (const auto& [key, row] : sorted) {
            unpack_prefix(key, vocab_size, k, pre);
            std::string pstr;
            for (std::size_t i = 0; i < pre.size(); ++i) {
                if (i) pstr += ' ';
                pstr += std::to_string(pre[i]);
            }
            for (std::size_t j = 0; j < row->toks.size(); ++j) {
                std::snprintf(buf, sizeof(buf), "%u,%s,%u,%.17g\n", k, pstr.c_str(),
                              row->toks[j], row->vals[j]);
                os << buf;
            }
        }
    }
}

RuleTable RuleTable::read_csv(std::istream& is, std::uint32_t vocab_size) {
    RuleTable rt;
    rt.vocab_size = vocab_size;
    rt.global.assign(vocab_size, 0.0);

    std::string line;
    if (!std::getline(is, line) || line.rfind("window_len", 0) != 0)
        throw std::runtime_error("rule table csv: missing header");

    std::uint32_t max_k = 0;
    std::vector<std::tuple<std::uint32_t, std::vector<Token>, Token, double>> rows;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::size_t start = 0;
        for (std::size_t i = 0; i <= line.size(); ++i) {
            if (i == line.size() || line[i] == ',') {
                cells.push_back(line.substr(start, i - start));
                start = i + 1;
            }
        }
        if (cells.size() != 4)
            throw std::runtime_error("rule table csv line " + std::to_string(lineno) +
                                     ": expected 4 columns");
        const std::uint32_t k = static_cast<std::uint32_t>(std::stoul(cells[0]));
        std::vector<Token> pre;
        std::istringstream ps(cells[1]);
        std::string ptok;
        while (ps >> ptok) pre.push_back(static_cast<Token>(std::stoul(ptok)));
        if (pre.size() != k)
            throw std::runtime_error("rule table csv line " + std::to_string(lineno) +
                                     ": prefix length != window_len");
        const Token tok = static_cast<Token>(std::stoul(cells[2]));
        const double v = std::stod(cells[3]);
        if (tok >= vocab_size)
            throw std::runtime_error("rule table csv line " + std::to_string(lineno) +
                                     ": token out of vocab");
        max_k = std::max(max_k, k);
        rows.emplace_back(k, std::move(pre), tok, v);
    }
    rt.n_prime = max_k + 1;
    rt.windowed.resize(max_k);
    for (auto& [k, pre, tok, v] : rows) {
        if (k == 0) {
            rt.global[tok] = v;
        } else {
            Row& row = rt.windowed[k - 1][pack_ctx(pre, vocab_size)];
            row.toks.push_back(tok);
            row.vals.push_back(v);
        }
    }
    // enforce sorted token order inside each row
    for (auto& wk : rt.windowed) {
        for (auto& [key, row] : wk) {
            std::vector<std::size_t> idx(row.toks.size());
            for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
            std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
                return row.toks[a] < row.toks[b];
            });
            Row sorted_row;
            for (std::size_t i : idx) {
                sorted_row.toks.push_back(row.toks[i]);
                sorted_row.vals.push_back(row.vals[i]);
            }
            row = std::move(sorted_row);
        }
    }
    return rt;
}

}  // namespace wmlab
