#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <sstream>

#include "abc/trainer.hpp"

using abc::ExperimentConfig;
using abc::SplitDataset;

namespace {

ExperimentConfig small_config(const std::string& extra = "") {
    std::istringstream is(
        "method = abc\n"
        "bits = 8\n"
        "arch = input:16 linear:24 relu linear:8 batchnorm abc\n"
        "epochs = 6\n"
        "batch = 40\n"
        "eval_every = 2\n"
        "dataset.kind = synthetic\n"
        "dataset.classes = 3\n"
        "dataset.per_class = 40\n"
        "dataset.dim = 16\n"
        "dataset.sigma = 0.25\n"
        "schedule.lr.initial = 0.03\n" +
        extra);
    return abc::parse_config(is);
}

std::string csv_of(const abc::MetricsLog& log) {
    std::ostringstream os;
    log.write_csv(os);
    return os.str();
}

}  // namespace

TEST(Trainer, ZeroEpochRunLeavesParametersUntouched) {
    ExperimentConfig cfg = small_config("epochs = 0\n");
    SplitDataset data = abc::load_experiment_dataset(cfg);
    abc::TrainResult result = abc::train(cfg, data);
    EXPECT_TRUE(result.log.rows.empty());
    EXPECT_EQ(csv_of(result.log), std::string(abc::MetricsLog::kHeader) + "\n");

    // Parameters equal a freshly initialized network with the same seed.
    abc::Rng rng(abc::derive_seed(cfg.seed, "init"));
    abc::Network<float> fresh(abc::parse_architecture(cfg.effective_arch(16)), rng);
    auto got = result.net.parameters();
    auto want = fresh.parameters();
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
        for (std::int64_t j = 0; j < got[i]->value.size(); ++j) {
            EXPECT_EQ(got[i]->value[j], want[i]->value[j]);
        }
    }
}

TEST(Trainer, DeterministicLogs) {
    ExperimentConfig cfg = small_config();
    SplitDataset data = abc::load_experiment_dataset(cfg);
    abc::TrainResult a = abc::train(cfg, data);
    abc::TrainResult b = abc::train(cfg, data);
    EXPECT_EQ(csv_of(a.log), csv_of(b.log));  // bit-identical
    ExperimentConfig other = cfg;
    other.seed = cfg.seed + 1;
    abc::TrainResult c = abc::train(other, data);
    EXPECT_NE(csv_of(a.log), csv_of(c.log));
}

TEST(Trainer, ScheduleFidelity) {
    ExperimentConfig cfg = small_config();
    SplitDataset data = abc::load_experiment_dataset(cfg);
    abc::TrainResult result = abc::train(cfg, data);
    ASSERT_FALSE(result.log.rows.empty());
    for (const abc::MetricsRow& row : result.log.rows) {
        const abc::ScheduleState want = abc::schedule_at(cfg.schedule, row.epoch, row.iteration - 1);
        EXPECT_DOUBLE_EQ(row.r, want.r);
        EXPECT_DOUBLE_EQ(row.alpha, want.alpha);
        EXPECT_DOUBLE_EQ(row.lr, want.lr);
    }
}

TEST(Trainer, MetricsRowsStrictlyIncreasing) {
    ExperimentConfig cfg = small_config();
    SplitDataset data = abc::load_experiment_dataset(cfg);
    abc::TrainResult result = abc::train(cfg, data);
    for (std::size_t i = 1; i < result.log.rows.size(); ++i) {
        EXPECT_GT(result.log.rows[i].epoch, result.log.rows[i - 1].epoch);
        EXPECT_GT(result.log.rows[i].iteration, result.log.rows[i - 1].iteration);
    }
    // Eval cadence: map present every 2nd epoch and on the final one.
    for (const abc::MetricsRow& row : result.log.rows) {
        EXPECT_EQ(row.has_map, (row.epoch + 1) % 2 == 0 || row.epoch + 1 == cfg.epochs);
    }
}

TEST(Trainer, RZeroFreezesLayersBeforeAbc) {
    // Classification head after the clamp keeps training while everything
    // before it is bit-frozen (momentum and weight decay off so stale
    // velocity cannot move frozen parameters).
    ExperimentConfig cfg = small_config(
        "arch = input:16 linear:24 relu linear:8 batchnorm abc linear:3\n"
        "loss.kind = classification\n"
        "loss.classes = 3\n"
        "optimizer.momentum = 0\n"
        "optimizer.weight_decay = 0\n"
        "schedule.kind = constant\n"
        "schedule.r.initial = 0\n"
        "schedule.lr.initial = 0.05\n"
        "epochs = 4\n");
    SplitDataset data = abc::load_experiment_dataset(cfg);

    abc::Rng rng(abc::derive_seed(cfg.seed, "init"));
    abc::Network<float> fresh(abc::parse_architecture(cfg.effective_arch(16)), rng);

    abc::TrainResult result = abc::train(cfg, data);
    auto trained = result.net.parameters();
    auto initial = fresh.parameters();
    auto head = result.net.parameters_after_binarizer();
    ASSERT_EQ(head.size(), 2u);
    bool head_changed = false;
    for (std::size_t i = 0; i < trained.size(); ++i) {
        const bool is_head = std::find(head.begin(), head.end(), trained[i]) != head.end();
        for (std::int64_t j = 0; j < trained[i]->value.size(); ++j) {
            if (is_head) {
                head_changed = head_changed || trained[i]->value[j] != initial[i]->value[j];
            } else {
                EXPECT_EQ(trained[i]->value[j], initial[i]->value[j]) << trained[i]->name;
            }
        }
    }
    EXPECT_TRUE(head_changed);
}

TEST(Trainer, DivergenceAbortsWithDiagnostic) {
    ExperimentConfig cfg = small_config("schedule.lr.initial = 1e28\nepochs = 3\n");
    SplitDataset data = abc::load_experiment_dataset(cfg);
    try {
        abc::train(cfg, data);
        FAIL() << "expected DivergenceError";
    } catch (const abc::DivergenceError& e) {
        EXPECT_GE(e.iteration, 0);
        EXPECT_NE(std::string(e.what()).find("iteration"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("r="), std::string::npos);
    }
}

TEST(Trainer, LearnsSeparableSynthetics) {
    ExperimentConfig cfg = small_config("epochs = 10\n");
    SplitDataset data = abc::load_experiment_dataset(cfg);
    abc::TrainResult result = abc::train(cfg, data);
    EXPECT_GT(result.final_map, 0.6);  // far above the ~1/3 random baseline
}

TEST(Trainer, WarmStartAdoptsMatchingParameters) {
    // Train a plain base model, then fine-tune with a BN+ABC tail appended:
    // the shared linear layers start from the base weights, the new layers
    // from their own initialization.
    ExperimentConfig base = small_config(
        "method = dsh-reg-only\n"
        "arch = input:16 linear:24 relu linear:8\n"
        "epochs = 2\n");
    SplitDataset data = abc::load_experiment_dataset(base);
    abc::TrainResult base_result = abc::train(base, data);
    const std::string path =
        (std::filesystem::temp_directory_path() / "abc_warmstart_base.bnm").string();
    base_result.net.save(path);

    ExperimentConfig ft = small_config("epochs = 0\ninit_model = " + path + "\n");
    abc::TrainResult ft_result = abc::train(ft, data);
    auto base_params = base_result.net.parameters();
    auto ft_params = ft_result.net.parameters();
    ASSERT_EQ(base_params.size(), 4u);
    ASSERT_EQ(ft_params.size(), 6u);  // + BN gamma/beta
    for (abc::Parameter<float>* bp : base_params) {
        bool found = false;
        for (abc::Parameter<float>* fp : ft_params) {
            if (fp->name != bp->name) continue;
            found = true;
            for (std::int64_t i = 0; i < bp->value.size(); ++i) {
                ASSERT_EQ(fp->value[i], bp->value[i]) << bp->name;
            }
        }
        EXPECT_TRUE(found) << bp->name;
    }
    std::remove(path.c_str());

    ExperimentConfig bad = small_config("epochs = 0\ninit_model = /nonexistent/base.bnm\n");
    EXPECT_THROW(abc::train(bad, data), abc::IoError);
}

TEST(Trainer, ExtractCodesMatchesThresholdedActivations) {
    ExperimentConfig cfg = small_config("epochs = 2\n");
    SplitDataset data = abc::load_experiment_dataset(cfg);
    abc::TrainResult result = abc::train(cfg, data);
    abc::PackedCodeMatrix codes = abc::extract_codes(result.net, data.test, cfg.method);
    abc::Tensor<float> acts = result.net.code_activations(abc::feature_matrix(data.test));
    ASSERT_EQ(codes.count(), data.test.size());
    for (int i = 0; i < codes.count(); ++i) {
        for (int j = 0; j < codes.bits(); ++j) {
            EXPECT_EQ(codes.bit(i, j), acts(i, j) > 0.0f);
        }
        EXPECT_EQ(codes.labels(i), data.test.examples[static_cast<std::size_t>(i)].labels);
    }
}
