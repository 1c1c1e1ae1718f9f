#include "wmlab/lm.hpp"

#include "wmlab/hashing.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace wmlab {

std::string provenance_name(Provenance p) {
    switch (p) {
        case Provenance::TeacherWatermarked: return "teacher-watermarked";
        case Provenance::TeacherClean: return "teacher-clean";
        case Provenance::ParaphrasedUP: return "paraphrased-UP";
        case Provenance::ParaphrasedTP: return "paraphrased-TP";
        case Provenance::Mixed: return "mixed";
    }
    return "?";
}

void write_corpus(std::ostream& os, const Corpus& c) {
    for (const TokenSeq& s : c.seqs) {
        for (std::size_t i = 0; i < s.tokens.size(); ++i) {
            if (i == s.prompt_len) os << "| ";
            os << s.tokens[i];
            if (i + 1 < s.tokens.size()) os << ' ';
        }
        if (s.prompt_len == s.tokens.size()) os << (s.tokens.empty() ? "|" : " |");
        os << '\n';
    }
}

Corpus read_corpus(std::istream& is, Vocab vocab) {
    Corpus c;
    c.vocab = vocab;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        TokenSeq s;
        bool saw_bar = false;
        std::istringstream ls(line);
        std::string tok;
        while (ls >> tok) {
            if (tok == "|") {
                if (saw_bar)
                    throw std::runtime_error("corpus line " + std::to_string(lineno) +
                                             ": duplicate '|'");
                saw_bar = true;
                s.prompt_len = s.tokens.size();
                continue;
            }
            std::size_t pos = 0;
            unsigned long v = std::stoul(tok, &pos);
            if (pos != tok.size() || v >= vocab.size)
                throw std::runtime_error("corpus line " + std::to_string(lineno) +
                                         ": bad token '" + tok + "'");
            s.tokens.push_back(static_cast<Token>(v));
        }
        if (!saw_bar)
            throw std::runtime_error("corpus line " + std::to_string(lineno) +
                                     ": missing '|'");
        c.seqs.push_back(std::move(s));
    }
    return c;
}

// ---------------------------------------------------------------------------

namespace {

void check_packable(std::uint32_t order, std::uint32_t vocab_size) {
    // (V+1)^(order-1) must fit in 63 bits
    long double k = 1.0L;
    for (std::uint32_t i = 0; i + 1 < order; ++i) {
        k *= vocab_size + 1.0L;
        if (k > 9.2e18L)
            throw std::invalid_argument("NGramModel: order too large to pack contexts");
    }
}

}  // namespace

NGramModel NGramModel::fit(const Corpus& corpus, std::uint32_t order, double beta) {
    if (order < 1) throw std::invalid_argument("fit: order must be >= 1");
    if (!(beta > 0.0)) throw std::invalid_argument("fit: beta must be > 0");
    if (corpus.seqs.empty()) throw std::invalid_argument("fit: empty corpus");
    check_packable(order, corpus.vocab.size);

    NGramModel m;
    m.kind_ = Kind::Fitted;
    m.order_ = order;
    m.beta_ = beta;
    m.vocab_ = corpus.vocab;

    const std::size_t k = order - 1;
    std::unordered_map<std::uint64_t, std::unordered_map<Token, double>> acc;
    for (const TokenSeq& s : corpus.seqs) {
        const auto& t = s.tokens;
        for (std::size_t i = s.prompt_len; i < t.size(); ++i) {
            if (i < k) continue;  // not enough context yet
            if (t[i] >= m.vocab_.size)
                throw std::invalid_argument("fit: token id out of vocab");
            std::span<const Token> ctx(t.data() + i - k, k);
            acc[pack_ctx(ctx, m.vocab_.size)][t[i]] += 1.0;
        }
    }
    m.rows_.reserve(acc.size());
    for (auto& [key, counts] : acc) {
        Row row;
        row.toks.reserve(counts.size());
        for (const auto& [tok, c] : counts) row.toks.push_back(tok);
        std::sort(row.toks.begin(), row.toks.end());
        row.counts.reserve(row.toks.size());
        for (Token tok : row.toks) {
            const double c = counts[tok];
            row.counts.push_back(c);
            row.total += c;
        }
        m.rows_.emplace(key, std::move(row));
    }
    return m;
}

NGramModel NGramModel::dirichlet_teacher(Vocab vocab, std::uint32_t order,
                                         std::uint64_t seed, double skew) {
    if (order < 1) throw std::invalid_argument("dirichlet_teacher: order must be >= 1");
    if (!(skew > 0.0)) throw std::invalid_argument("dirichlet_teacher: skew must be > 0");
    check_packable(order, vocab.size);

    NGramModel m;
    m.kind_ = Kind::Dirichlet;
    m.order_ = order;
    m.beta_ = 1e-12;
    m.vocab_ = vocab;
    m.seed_ = seed;
    m.skew_ = skew;
    m.tcache_ = std::make_shared<TeacherCache>();
    m.tcache_->id = next_cache_id();
    return m;
}

const float* NGramModel::teacher_row(std::uint64_t key) const {
    thread_local std::unordered_map<
        std::uint64_t, std::unordered_map<std::uint64_t, const float*>>
        memo;
    auto& mine = memo[tcache_->id];
    auto it = mine.find(key);
    if (it != mine.end()) return it->second;
    const float* out = teacher_row_locked(key);
    mine.emplace(key, out);
    return out;
}

const float* NGramModel::teacher_row_locked(std::uint64_t key) const {
    Shard& sh = tcache_->shards[mix64(key) % kShards];
    std::lock_guard lock(sh.mu);
    auto it = sh.rows.find(key);
    if (it == sh.rows.end()) {
        const std::size_t n = vocab_.size;
        auto row = std::make_unique<float[]>(n);
        RngStream rng(derive_sub(seed_, "row", key));
        double total = 0.0;
        std::vector<double> g(n);
        for (std::size_t i = 0; i < n; ++i) {
            g[i] = rng.next_gamma(skew_);
            total += g[i];
        }
        for (std::size_t i = 0; i < n; ++i)
            row[i] = static_cast<float>(g[i] / total);
        it = sh.rows.emplace(key, std::move(row)).first;
    }
    return it->second.get();
}

Dist NGramModel::row_dist(const Row* row) const {
    const std::size_t n = vocab_.size;
    const double total = row ? row->total : 0.0;
    const double denom = total + beta_ * static_cast<double>(n);
    Dist d;
    d.probs.assign(n, beta_ / denom);
    if (row)
        for (std::size_t i = 0; i < row->toks.size(); ++i)
            d.probs[row->toks[i]] += row->counts[i] / denom;
    return d;
}

Dist NGramModel::next_dist(std::span<const Token> ctx) const {
    const std::size_t k = order_ - 1;
    if (ctx.size() > k) ctx = ctx.subspan(ctx.size() - k);
    const std::uint64_t key = pack_ctx(ctx, vocab_.size);

    if (kind_ == Kind::Dirichlet) {
        const float* row = teacher_row(key);
        const std::size_t n = vocab_.size;
        Dist d;
        d.probs.resize(n);
        // rows are stored as float32; renormalize against the realized sum
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            d.probs[i] = static_cast<double>(row[i]) + beta_;
            total += d.probs[i];
        }
        for (double& p : d.probs) p /= total;
        return d;
    }
    auto it = rows_.find(key);
    return row_dist(it == rows_.end() ? nullptr : &it->second);
}

double NGramModel::context_total(std::span<const Token> ctx) const {
    const std::size_t k = order_ - 1;
    if (ctx.size() > k) ctx = ctx.subspan(ctx.size() - k);
    if (kind_ == Kind::Dirichlet) return 1.0;
    auto it = rows_.find(pack_ctx(ctx, vocab_.size));
    return it == rows_.end() ? 0.0 : it->second.total;
}

// ---------------------------------------------------------------------------
// snapshot

namespace {

template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!is) throw std::runtime_error("model snapshot: truncated");
    return v;
}

void unpack_ctx(std::uint64_t key, std::uint32_t vocab_size, std::size_t len,
                std::uint32_t* out) {
    const std::uint64_t base = vocab_size + 1ull;
    for (std::size_t i = len; i-- > 0;) {
        out[i] = static_cast<std::uint32_t>(key % base) - 1;
        key /= base;
    }
}

}  // namespace

void NGramModel::save(std::ostream& os) const {
    if (kind_ != Kind::Fitted)
        throw std::invalid_argument("save: only fitted models have snapshots");
    os.write("WMLM", 4);
    put<std::uint32_t>(os, 1);
    put<std::uint32_t>(os, order_);
    put<std::uint32_t>(os, vocab_.size);
    put<double>(os, beta_);

    std::map<std::uint64_t, const Row*> sorted;
    std::uint64_t n_triples = 0;
    for (const auto& [key, row] : rows_) {
        sorted.emplace(key, &row);
        n_triples += row.toks.size();
    }
    put<std::uint64_t>(os, n_triples);

    const std::size_t k = order_ - 1;
    std::vector<std::uint32_t> ctx(k);
    for (const auto& [key, row] : sorted) {
        unpack_ctx(key, vocab_.size, k, ctx.data());
        for (std::size_t i = 0; i < row->toks.size(); ++i) {
            for (std::uint32_t c : ctx) put<std::uint32_t>(os, c);
            put<std::uint32_t>(os, row->toks[i]);
            put<double>(os, row->counts[i]);
        }
    }
}

NGramModel NGramModel::load(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "WMLM", 4) != 0)
        throw std::runtime_error("model snapshot: bad magic");
    const auto version = get<std::uint32_t>(is);
    if (version != 1) throw std::runtime_error("model snapshot: unknown version");
    const auto order = get<std::uint32_t>(is);
    const auto vsize = get<std::uint32_t>(is);
    const auto beta = get<double>(is);
    const auto n_triples = get<std::uint64_t>(is);

    NGramModel m;
    m.kind_ = Kind::Fitted;
    m.order_ = order;
    m.beta_ = beta;
    m.vocab_ = Vocab(vsize);
    check_packable(order, vsize);

    const std::size_t k = order - 1;
    std::vector<Token> ctx(k);
    for (std::uint64_t i = 0; i < n_triples; ++i) {
        for (std::size_t j = 0; j < k; ++j) ctx[j] = get<std::uint32_t>(is);
        const Token tok = get<std::uint32_t>(is);
        const double count = get<double>(is);
        Row& row = m.rows_[pack_ctx(ctx, vsize)];
        row.toks.push_back(tok);
        row.counts.push_back(count);
        row.total += count;
    }
    return m;
}

// ---------------------------------------------------------------------------

TokenSeq generate(const NGramModel& model, const TokenSeq& prompt,
                  std::size_t length, std::span<StepProcessor* const> chain,
                  std::uint64_t seed) {
    if (length < 1) throw std::invalid_argument("generate: length must be >= 1");

    TokenSeq out;
    out.tokens = prompt.tokens;
    out.prompt_len = prompt.tokens.size();
    out.tokens.reserve(out.prompt_len + length);

    for (StepProcessor* p : chain) p->begin_sequence();

    for (std::size_t t = 0; t < length; ++t) {
        std::span<const Token> ctx(out.tokens);
        Dist d = model.next_dist(ctx);
        for (StepProcessor* p : chain) d = p->process(d, ctx);
        out.tokens.push_back(sample(d, derive_sub(seed, "step", t)));
    }
    return out;
}

double cross_entropy(const DistSource& p, const DistSource& q,
                     std::span<const std::vector<Token>> contexts) {
    if (contexts.empty()) throw std::invalid_argument("cross_entropy: no contexts");
    double acc = 0.0;
    for (const auto& ctx : contexts) {
        const Dist dp = p.next_dist(ctx);
        const Dist dq = q.next_dist(ctx);
        double h = 0.0;
        for (std::size_t i = 0; i < dp.size(); ++i)
            if (dp.probs[i] > 0.0) h -= dp.probs[i] * std::log(dq.probs[i]);
        acc += h;
    }
    return acc / static_cast<double>(contexts.size());
}

double kl(const DistSource& p, const DistSource& q,
          std::span<const std::vector<Token>> contexts) {
    if (contexts.empty()) throw std::invalid_argument("kl: no contexts");
    double acc = 0.0;
    for (const auto& ctx : contexts) {
        const Dist dp = p.next_dist(ctx);
        const Dist dq = q.next_dist(ctx);
        double d = 0.0;
        for (std::size_t i = 0; i < dp.size(); ++i)
            if (dp.probs[i] > 0.0)
                d += dp.probs[i] * (std::log(dp.probs[i]) - std::log(dq.probs[i]));
        acc += d;
    }
    return acc / static_cast<double>(contexts.size());
}

}  // namespace wmlab
