#include "wmlab/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <ostream>
#include <sstream>

namespace wmlab {

namespace {

enum class Vt { U64, Double, Str, U64List };

struct KeySpec {
    const char* key;
    Vt type;
    const char* def;
    const char* doc;
    double lo = 0.0;
    double hi = 0.0;  // lo==hi means no range check
    const char* choices = nullptr;  // pipe-separated for Str
};

const KeySpec kRegistry[] = {
    {"seed", Vt::U64, "0", "master seed; all randomness derives from it"},
    {"workers", Vt::U64, "1", "worker threads; must not change any output", 1, 256},
    {"vocab.size", Vt::U64, "256", "vocabulary size |V|", 2, 65535},
    {"teacher.order", Vt::U64, "3", "teacher n-gram order", 1, 8},
    {"teacher.skew", Vt::Double, "0.3", "Dirichlet concentration of teacher rows", 1e-6, 1e9},
    {"corpus.sequences", Vt::U64, "20000", "training sequences", 1, 100000000},
    {"corpus.continuation", Vt::U64, "64", "continuation tokens per training sequence", 1, 1000000},
    {"prompt.length", Vt::U64, "8", "prompt tokens per sequence", 1, 1000000},
    {"test.sequences", Vt::U64, "2000", "held-out prompts for detection", 1, 100000000},
    {"test.continuation", Vt::U64, "64", "continuation tokens per detection sequence", 1, 1000000},
    {"student.order", Vt::U64, "0", "student n-gram order; 0 = auto per scheme/window", 0, 8},
    {"student.beta", Vt::Double, "0.01", "student additive smoothing", 1e-12, 1e9},
    {"watermark.kind", Vt::Str, "kgw", "watermarking scheme", 0, 0, "kgw|synthid"},
    {"watermark.n", Vt::U64, "3", "watermark window size", 1, 8},
    {"watermark.hash", Vt::Str, "multiplicative", "window hash function", 0, 0,
     "multiplicative|min-token|skip-leftmost"},
    {"watermark.delta", Vt::Double, "3.0", "KGW green-logit bias", 0.0, 1e6},
    {"watermark.gamma", Vt::Double, "0.5", "KGW green fraction, in (0,1)", 0.0, 1.0},
    {"watermark.m", Vt::U64, "30", "SynthID tournament layers", 0, 64},
    {"watermark.masking", Vt::U64, "0", "repeated-context mask capacity; 0 = off", 0, 100000000},
    {"watermark.key", Vt::U64, "0", "watermark key; 0 = derive from master seed"},
    {"attack.kind", Vt::Str, "none", "removal attack for distill-detect runs", 0, 0,
     "none|up|tp|wn"},
    {"attack.lambda", Vt::Double, "0.5", "paraphrase fidelity in [0,1]", 0.0, 1.0},
    {"attack.delta_prime", Vt::Double, "2.5", "inverse watermark strength", 0.0, 1e6},
    {"steal.n_prime", Vt::U64, "3", "max window size considered when stealing", 1, 8},
    {"steal.theta", Vt::Double, "5e-5", "prefix frequency threshold", 0.0, 1.0},
    {"steal.alpha", Vt::Double, "0.3", "prefix weight smoothing exponent", 0.0, 100},
    {"steal.o_model", Vt::Str, "disjoint", "original-student stand-in", 0, 0,
     "disjoint|uniform"},
    {"detect.group_sizes", Vt::U64List, "1000,3000,10000", "detection group sizes"},
    {"knowledge.contexts", Vt::U64, "1000", "held-out contexts for KL metrics", 1, 10000000},
};

const KeySpec* find_key(const std::string& key) {
    for (const auto& ks : kRegistry)
        if (key == ks.key) return &ks;
    return nullptr;
}

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

bool choice_ok(const char* choices, const std::string& v) {
    std::string all(choices);
    std::size_t start = 0;
    while (start <= all.size()) {
        std::size_t bar = all.find('|', start);
        if (bar == std::string::npos) bar = all.size();
        if (all.substr(start, bar - start) == v) return true;
        start = bar + 1;
    }
    return false;
}

}  // namespace

Config::Config() {
    for (const auto& ks : kRegistry) values_[ks.key] = ks.def;
}

void Config::set_checked(const std::string& key, const std::string& value,
                         const std::string& where) {
    const KeySpec* ks = find_key(key);
    if (!ks) throw ConfigError(where + ": unknown key '" + key + "'");

    const std::string v = trim(value);
    switch (ks->type) {
        case Vt::U64: {
            std::uint64_t out = 0;
            auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
            if (ec != std::errc() || p != v.data() + v.size())
                throw ConfigError(where + ": key '" + key + "' expects an integer, got '" + v + "'");
            if (ks->lo != ks->hi &&
                (static_cast<double>(out) < ks->lo || static_cast<double>(out) > ks->hi))
                throw ConfigError(where + ": key '" + key + "' out of range [" +
                                  std::to_string(static_cast<std::uint64_t>(ks->lo)) + ", " +
                                  std::to_string(static_cast<std::uint64_t>(ks->hi)) + "]");
            break;
        }
        case Vt::Double: {
            try {
                std::size_t pos = 0;
                const double out = std::stod(v, &pos);
                if (pos != v.size()) throw std::invalid_argument("");
                if (ks->lo != ks->hi && (out < ks->lo || out > ks->hi))
                    throw ConfigError(where + ": key '" + key + "' out of range");
                if (key == "watermark.gamma" && (out <= 0.0 || out >= 1.0))
                    throw ConfigError(where + ": key 'watermark.gamma' must be in (0,1)");
            } catch (const ConfigError&) {
                throw;
            } catch (...) {
                throw ConfigError(where + ": key '" + key + "' expects a real, got '" + v + "'");
            }
            break;
        }
        case Vt::Str:
            if (ks->choices && !choice_ok(ks->choices, v))
                throw ConfigError(where + ": key '" + key + "' must be one of {" +
                                  ks->choices + "}, got '" + v + "'");
            break;
        case Vt::U64List: {
            std::istringstream ls(v);
            std::string item;
            bool any = false;
            while (std::getline(ls, item, ',')) {
                item = trim(item);
                std::uint64_t out = 0;
                auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), out);
                if (ec != std::errc() || p != item.data() + item.size() || out == 0)
                    throw ConfigError(where + ": key '" + key +
                                      "' expects comma-separated positive integers");
                any = true;
            }
            if (!any)
                throw ConfigError(where + ": key '" + key + "' expects a non-empty list");
            break;
        }
    }
    values_[key] = v;
    explicit_.insert(key);
}

Config Config::from_stream(std::istream& is, const std::string& name) {
    Config cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(name + ":" + std::to_string(lineno) +
                              ": expected 'key = value'");
        cfg.set_checked(trim(line.substr(0, eq)), trim(line.substr(eq + 1)),
                        name + ":" + std::to_string(lineno));
    }
    return cfg;
}

Config Config::from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file '" + path + "'");
    return from_stream(f, path);
}

void Config::apply_override(const std::string& assignment) {
    const std::size_t eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override '" + assignment + "': expected key=value");
    set_checked(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)),
                "override");
}

void Config::default_unless_set(const std::string& key, const std::string& value) {
    if (was_set(key)) return;
    set_checked(key, value, "profile");
    explicit_.erase(key);  // stays overridable by later profiles
}

const std::string& Config::raw(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown key '" + key + "'");
    return it->second;
}

std::uint64_t Config::get_u64(const std::string& key) const {
    return std::stoull(raw(key));
}
double Config::get_double(const std::string& key) const { return std::stod(raw(key)); }
std::string Config::get_string(const std::string& key) const { return raw(key); }

std::vector<std::uint64_t> Config::get_u64_list(const std::string& key) const {
    std::vector<std::uint64_t> out;
    std::istringstream ls(raw(key));
    std::string item;
    while (std::getline(ls, item, ',')) out.push_back(std::stoull(trim(item)));
    return out;
}

void Config::write(std::ostream& os) const {
    for (const auto& ks : kRegistry)
        os << ks.key << " = " << values_.at(ks.key) << "\n";
}

std::vector<std::pair<std::string, std::string>> Config::documented_keys() {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& ks : kRegistry) {
        std::string doc = ks.doc;
        if (ks.choices) doc += std::string(" {") + ks.choices + "}";
        doc += std::string(" [default ") + ks.def + "]";
        out.emplace_back(ks.key, doc);
    }
    return out;
}

Config parse_config(const std::string& path,
                    const std::vector<std::string>& overrides) {
    Config cfg = path.empty() ? Config() : Config::from_file(path);
    for (const auto& ov : overrides) cfg.apply_override(ov);
    return cfg;
}

WatermarkSpec ExperimentConfig::watermark_spec() const {
    WatermarkSpec spec;
    spec.kind = scheme;
    spec.n = n;
    spec.key.key = watermark_key ? watermark_key : derive_seed(SeedPath(seed).child("wmkey"));
    spec.hash_kind = hash_kind;
    spec.delta = delta;
    spec.gamma = gamma;
    spec.m = m_layers;
    spec.masking_capacity = masking_capacity;
    return spec;
}

ExperimentConfig materialize(const Config& cfg) {
    ExperimentConfig e;
    e.seed = cfg.get_u64("seed");
    e.workers = static_cast<std::uint32_t>(cfg.get_u64("workers"));
    e.vocab = static_cast<std::uint32_t>(cfg.get_u64("vocab.size"));
    e.teacher_order = static_cast<std::uint32_t>(cfg.get_u64("teacher.order"));
    e.teacher_skew = cfg.get_double("teacher.skew");
    e.corpus_sequences = cfg.get_u64("corpus.sequences");
    e.corpus_continuation = cfg.get_u64("corpus.continuation");
    e.prompt_length = cfg.get_u64("prompt.length");
    e.test_sequences = cfg.get_u64("test.sequences");
    e.test_continuation = cfg.get_u64("test.continuation");
    e.student_order = static_cast<std::uint32_t>(cfg.get_u64("student.order"));
    e.student_beta = cfg.get_double("student.beta");

    const std::string kind = cfg.get_string("watermark.kind");
    e.scheme = kind == "kgw" ? SchemeKind::KGW : SchemeKind::SynthID;
    e.n = static_cast<std::uint32_t>(cfg.get_u64("watermark.n"));
    const std::string hk = cfg.get_string("watermark.hash");
    e.hash_kind = hk == "multiplicative" ? HashKind::Multiplicative
                  : hk == "min-token"    ? HashKind::MinToken
                                         : HashKind::SkipLeftmost;
    e.delta = cfg.get_double("watermark.delta");
    e.gamma = cfg.get_double("watermark.gamma");
    e.m_layers = static_cast<std::uint32_t>(cfg.get_u64("watermark.m"));
    e.masking_capacity = static_cast<std::uint32_t>(cfg.get_u64("watermark.masking"));
    e.watermark_key = cfg.get_u64("watermark.key");

    const std::string atk = cfg.get_string("attack.kind");
    e.attack = atk == "none" ? AttackKind::None
               : atk == "up" ? AttackKind::UP
               : atk == "tp" ? AttackKind::TP
                             : AttackKind::WN;
    e.lambda = cfg.get_double("attack.lambda");
    e.delta_prime = cfg.get_double("attack.delta_prime");

    e.n_prime = static_cast<std::uint32_t>(cfg.get_u64("steal.n_prime"));
    e.theta = cfg.get_double("steal.theta");
    e.alpha = cfg.get_double("steal.alpha");
    e.o_model = cfg.get_string("steal.o_model") == "uniform" ? OModelKind::Uniform
                                                             : OModelKind::Disjoint;
    e.group_sizes.clear();
    for (std::uint64_t g : cfg.get_u64_list("detect.group_sizes"))
        e.group_sizes.push_back(static_cast<std::size_t>(g));
    e.knowledge_contexts = cfg.get_u64("knowledge.contexts");
    return e;
}

}  // namespace wmlab
