#pragma once

/**
 * Flat key=value experiment configuration: one `section.key = value` per
 * line, '#' comments, unknown keys rejected with the offending key and
 * line number. Overrides apply after the file. Every key has a default
 * (the standard toy configuration), so an empty file is a valid config.
 */

#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "wmlab/schemes.hpp"

namespace wmlab {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class Config {
public:
    /// All keys at their defaults.
    Config();

    static Config from_file(const std::string& path);
    static Config from_stream(std::istream& is, const std::string& name);

    /// `key=value`; rejects unknown keys and bad values.
    void apply_override(const std::string& assignment);

    /// Sets a key only if it was not set explicitly by file or override.
    /// Used by experiment profiles.
    void default_unless_set(const std::string& key, const std::string& value);

    bool was_set(const std::string& key) const { return explicit_.count(key) > 0; }

    const std::string& raw(const std::string& key) const;

    std::uint64_t get_u64(const std::string& key) const;
    double get_double(const std::string& key) const;
    std::string get_string(const std::string& key) const;
    std::vector<std::uint64_t> get_u64_list(const std::string& key) const;

    /// Emits every key (defaults included) in registry order.
    void write(std::ostream& os) const;

    /// All registered keys with their doc strings, for --help.
    static std::vector<std::pair<std::string, std::string>> documented_keys();

private:
    void set_checked(const std::string& key, const std::string& value,
                     const std::string& where);

    std::map<std::string, std::string> values_;
    std::set<std::string> explicit_;
};

// ---------------------------------------------------------------------------
// Typed view used by the pipelines.

enum class AttackKind { None, UP, TP, WN };
enum class OModelKind { Disjoint, Uniform };

struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::uint32_t workers = 1;

    std::uint32_t vocab = 256;
    std::uint32_t teacher_order = 3;
    double teacher_skew = 0.3;

    std::size_t corpus_sequences = 20000;
    std::size_t corpus_continuation = 64;
    std::size_t prompt_length = 8;

    std::size_t test_sequences = 2000;
    std::size_t test_continuation = 64;

    std::uint32_t student_order = 0;  // 0 = auto: max(3, n+1)
    double student_beta = 0.01;

    SchemeKind scheme = SchemeKind::KGW;
    std::uint32_t n = 3;
    HashKind hash_kind = HashKind::Multiplicative;
    double delta = 3.0;
    double gamma = 0.5;
    std::uint32_t m_layers = 30;
    std::uint32_t masking_capacity = 0;
    std::uint64_t watermark_key = 0;  // 0 = derive from master seed

    AttackKind attack = AttackKind::None;
    double lambda = 0.5;
    double delta_prime = 2.5;

    std::uint32_t n_prime = 3;
    double theta = 5e-5;
    double alpha = 0.3;
    OModelKind o_model = OModelKind::Disjoint;

    std::vector<std::size_t> group_sizes{1000, 3000, 10000};
    std::size_t knowledge_contexts = 1000;

    /// Effective student order for window size n. Auto picks the smallest
    /// order whose inheritance is strong but still neutralizable at the
    /// standard inverse strength: windows resolve within the context
    /// (>= n+1), with one extra token of dilution for the tournament
    /// scheme, whose per-token tilts otherwise exceed what clamped stolen
    /// rules can cancel.
    std::uint32_t effective_student_order(std::uint32_t for_n) const {
        if (student_order != 0) return student_order;
        if (scheme == SchemeKind::SynthID)
            return std::max<std::uint32_t>(3, for_n + 2);
        return std::max<std::uint32_t>(3, for_n + 1);
    }

    /// The watermark spec for this config (key derived if not pinned).
    WatermarkSpec watermark_spec() const;
};

/// Parses + validates a file (empty path = defaults) and applies overrides.
Config parse_config(const std::string& path,
                    const std::vector<std::string>& overrides);

/// Materializes the typed view.
ExperimentConfig materialize(const Config& cfg);

}  // namespace wmlab
