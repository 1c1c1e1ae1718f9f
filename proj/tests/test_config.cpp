#include <doctest.h>

#include <sstream>

#include "wmlab/config.hpp"

using namespace wmlab;

TEST_CASE("empty config is the standard toy configuration") {
    std::istringstream empty("");
    const Config cfg = Config::from_stream(empty, "empty");
    const ExperimentConfig e = materialize(cfg);
    CHECK(e.vocab == 256);
    CHECK(e.teacher_order == 3);
    CHECK(e.teacher_skew == doctest::Approx(0.3));
    CHECK(e.corpus_sequences == 20000);
    CHECK(e.corpus_continuation == 64);
    CHECK(e.student_beta == doctest::Approx(0.01));
    CHECK(e.n == 3);
    CHECK(e.student_order == 0);
    CHECK(e.effective_student_order(e.n) == 4);   // auto: KGW max(3, n+1)
    CHECK(e.effective_student_order(1) == 3);
    ExperimentConfig s = e;
    s.scheme = SchemeKind::SynthID;
    CHECK(s.effective_student_order(1) == 3);     // auto: SynthID max(3, n+2)
    CHECK(s.effective_student_order(2) == 4);
    CHECK(e.delta == doctest::Approx(3.0));
    CHECK(e.gamma == doctest::Approx(0.5));
    CHECK(e.m_layers == 30);
    CHECK(e.delta_prime == doctest::Approx(2.5));
    CHECK(e.n_prime == 3);
    CHECK(e.theta == doctest::Approx(5e-5));
    CHECK(e.alpha == doctest::Approx(0.3));
    CHECK(e.group_sizes == std::vector<std::size_t>{1000, 3000, 10000});
}

TEST_CASE("file parsing: comments, spacing, line numbers in errors") {
    std::istringstream f(
        "# a comment\n"
        "watermark.delta = 4.5   # trailing comment\n"
        "\n"
        "vocab.size=128\n");
    const Config cfg = Config::from_stream(f, "test.cfg");
    CHECK(cfg.get_double("watermark.delta") == doctest::Approx(4.5));
    CHECK(cfg.get_u64("vocab.size") == 128);
    CHECK(cfg.was_set("watermark.delta"));
    CHECK_FALSE(cfg.was_set("watermark.gamma"));

    std::istringstream bad("foo.bar = 1\n");
    try {
        Config::from_stream(bad, "bad.cfg");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("bad.cfg:1") != std::string::npos);
        CHECK(msg.find("foo.bar") != std::string::npos);
    }
}

TEST_CASE("override supersedes the file value") {
    std::istringstream f("watermark.delta = 5.0\n");
    Config cfg = Config::from_stream(f, "f");
    cfg.apply_override("watermark.delta=2.0");
    CHECK(cfg.get_double("watermark.delta") == doctest::Approx(2.0));
    CHECK_THROWS_AS(cfg.apply_override("nope=1"), ConfigError);
    CHECK_THROWS_AS(cfg.apply_override("garbage"), ConfigError);
}

TEST_CASE("validation errors name the offending key") {
    Config cfg;
    try {
        cfg.apply_override("watermark.gamma=1.5");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("watermark.gamma") != std::string::npos);
    }
    CHECK_THROWS_AS(cfg.apply_override("watermark.kind=magic"), ConfigError);
    CHECK_THROWS_AS(cfg.apply_override("vocab.size=abc"), ConfigError);
    CHECK_THROWS_AS(cfg.apply_override("vocab.size=1"), ConfigError);
    CHECK_THROWS_AS(cfg.apply_override("detect.group_sizes="), ConfigError);
    CHECK_THROWS_AS(cfg.apply_override("detect.group_sizes=10,x"), ConfigError);
}

TEST_CASE("write + reparse reproduces every value") {
    Config cfg;
    cfg.apply_override("watermark.kind=synthid");
    cfg.apply_override("watermark.n=2");
    cfg.apply_override("detect.group_sizes=500,1500");
    std::ostringstream os;
    cfg.write(os);
    std::istringstream is(os.str());
    const Config back = Config::from_stream(is, "echo");
    std::ostringstream os2;
    back.write(os2);
    CHECK(os.str() == os2.str());
    const ExperimentConfig e = materialize(back);
    CHECK(e.scheme == SchemeKind::SynthID);
    CHECK(e.group_sizes == std::vector<std::size_t>{500, 1500});
}

TEST_CASE("profiles fill unset keys only") {
    Config cfg;
    cfg.apply_override("corpus.sequences=777");
    cfg.default_unless_set("corpus.sequences", "2000");
    cfg.default_unless_set("student.order", "3");
    CHECK(cfg.get_u64("corpus.sequences") == 777);
    CHECK(cfg.get_u64("student.order") == 3);
}

TEST_CASE("watermark key derives from the master seed unless pinned") {
    Config cfg;
    cfg.apply_override("seed=5");
    const ExperimentConfig a = materialize(cfg);
    cfg.apply_override("seed=6");
    const ExperimentConfig b = materialize(cfg);
    CHECK(a.watermark_spec().key.key != b.watermark_spec().key.key);
    cfg.apply_override("watermark.key=123");
    const ExperimentConfig c = materialize(cfg);
    CHECK(c.watermark_spec().key.key == 123);
}
