#include <gtest/gtest.h>

#include <sstream>

#include "abc/config.hpp"

using abc::ExperimentConfig;

namespace {

ExperimentConfig parse(const std::string& text) {
    std::istringstream is(text);
    return abc::parse_config(is);
}

}  // namespace

TEST(Config, PaperDefaultsApply) {
    const ExperimentConfig cfg = parse("");
    EXPECT_EQ(cfg.method, abc::Method::Abc);
    EXPECT_EQ(cfg.bits, 12);
    EXPECT_DOUBLE_EQ(cfg.momentum, 0.9);
    EXPECT_DOUBLE_EQ(cfg.weight_decay, 0.004);
    EXPECT_DOUBLE_EQ(cfg.reg_weight, 0.01);
    EXPECT_EQ(cfg.batch_pairs, 200);
    EXPECT_DOUBLE_EQ(cfg.effective_margin(), 24.0);  // m = 2k
    EXPECT_EQ(cfg.schedule.kind, abc::PolicyKind::AbcRetrievalCifar);
    EXPECT_DOUBLE_EQ(cfg.schedule.lr.initial, 1e-4);
    EXPECT_DOUBLE_EQ(cfg.schedule.r.factor, 0.95);
}

TEST(Config, MarginTracksBitsUnlessOverridden) {
    EXPECT_DOUBLE_EQ(parse("bits = 24").effective_margin(), 48.0);
    EXPECT_DOUBLE_EQ(parse("bits = 24\nloss.m = 10").effective_margin(), 10.0);
}

TEST(Config, TanhMethodPicksTanhPolicy) {
    const ExperimentConfig cfg = parse("method = scaled-tanh\n");
    EXPECT_EQ(cfg.schedule.kind, abc::PolicyKind::TanhRetrieval);
    EXPECT_NE(cfg.effective_arch(8).find("tanh"), std::string::npos);
}

TEST(Config, CommentsAndBlankLines) {
    const ExperimentConfig cfg = parse("# a comment\n\n  bits = 8   # trailing\n\nseed = 5\n");
    EXPECT_EQ(cfg.bits, 8);
    EXPECT_EQ(cfg.seed, 5u);
}

TEST(Config, UnknownKeyIsListed) {
    try {
        parse("bitz = 12\n");
        FAIL() << "expected ConfigError";
    } catch (const abc::ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("bitz"), std::string::npos) << e.what();
    }
}

TEST(Config, BadValuesAreListedTogether) {
    try {
        parse("bits = twelve\noptimizer.momentum = 1.5\n");
        FAIL() << "expected ConfigError";
    } catch (const abc::ConfigError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("bits"), std::string::npos) << msg;
        EXPECT_NE(msg.find("momentum"), std::string::npos) << msg;
    }
}

TEST(Config, AbcWithoutBatchNormFailsValidation) {
    try {
        parse("arch = input:8 linear:12 abc\n");
        FAIL() << "expected ConfigError";
    } catch (const abc::ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("batchnorm"), std::string::npos) << e.what();
    }
}

TEST(Config, ArchBitWidthMustMatchBits) {
    EXPECT_NO_THROW(parse("arch = input:8 linear:12 batchnorm abc\n"));
    EXPECT_THROW(parse("arch = input:8 linear:16 batchnorm abc\n"), abc::ConfigError);
}

TEST(Config, MethodTailValidation) {
    EXPECT_THROW(parse("method = scaled-tanh\narch = input:8 linear:12 batchnorm abc\n"), abc::ConfigError);
    EXPECT_THROW(parse("method = dsh-reg-only\narch = input:8 linear:12 batchnorm abc\n"), abc::ConfigError);
    EXPECT_NO_THROW(parse("method = dsh-reg-only\narch = input:8 linear:12\n"));
}

TEST(Config, UnknownPolicyKind) {
    EXPECT_THROW(parse("schedule.kind = warm-restarts\n"), abc::ConfigError);
}

TEST(Config, ScheduleFieldOverrides) {
    const ExperimentConfig cfg = parse(
        "schedule.kind = abc-retrieval-cifar\n"
        "schedule.r.factor = 0.9\n"
        "schedule.r.floor = 0.01\n"
        "schedule.lr.initial = 0.05\n"
        "schedule.lr.interval = 10\n"
        "schedule.lr.unit = epoch\n");
    EXPECT_DOUBLE_EQ(cfg.schedule.r.factor, 0.9);
    EXPECT_DOUBLE_EQ(cfg.schedule.r.floor, 0.01);
    EXPECT_DOUBLE_EQ(cfg.schedule.lr.initial, 0.05);
    EXPECT_EQ(cfg.schedule.lr.interval, 10);
    EXPECT_EQ(cfg.schedule.lr.unit, abc::StepUnit::Epoch);
    EXPECT_DOUBLE_EQ(abc::r_at(cfg.schedule, 2), 0.81);
}

TEST(Config, EchoRoundTripsToSameEffectiveConfig) {
    const ExperimentConfig cfg = parse(
        "method = abc\nbits = 12\nseed = 9\nepochs = 3\n"
        "dataset.sigma = 0.375\nloss.reg_weight = 0.02\n"
        "schedule.r.override_value = 0\nschedule.r.override_start = 40\n");
    std::ostringstream echo;
    abc::echo_config(cfg, 32, echo);
    std::istringstream is(echo.str());
    const ExperimentConfig back = abc::parse_config(is);
    EXPECT_EQ(back.method, cfg.method);
    EXPECT_EQ(back.bits, cfg.bits);
    EXPECT_EQ(back.seed, cfg.seed);
    EXPECT_EQ(back.epochs, cfg.epochs);
    EXPECT_DOUBLE_EQ(back.synthetic.sigma, cfg.synthetic.sigma);
    EXPECT_DOUBLE_EQ(back.reg_weight, cfg.reg_weight);
    EXPECT_TRUE(back.schedule.r.has_override);
    EXPECT_EQ(back.schedule.r.override_start, 40);
    // A second echo is textually identical.
    std::ostringstream echo2;
    abc::echo_config(back, 32, echo2);
    EXPECT_EQ(echo.str(), echo2.str());
}

TEST(Config, MissingEqualsSignReportsLine) {
    try {
        parse("bits = 12\nnonsense line\n");
        FAIL() << "expected ConfigError";
    } catch (const abc::ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
    }
}

TEST(Architecture, ParseAndPrint) {
    const std::string text = "input:3x32x32 conv:32,5,1,2 maxpool:3,2 relu flatten linear:12 batchnorm abc";
    const auto specs = abc::parse_architecture(text);
    EXPECT_EQ(abc::architecture_to_string(specs), text);
    EXPECT_THROW(abc::parse_architecture("input:8 dense:4"), abc::ConfigError);
    EXPECT_THROW(abc::parse_architecture("input:8 linear:x"), abc::ConfigError);
    EXPECT_THROW(abc::parse_architecture(""), abc::ConfigError);
}
