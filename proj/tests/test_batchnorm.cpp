#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "abc/batchnorm.hpp"
#include "abc/graph.hpp"
#include "abc/ops.hpp"

using abc::BatchNormState;
using abc::Tensor;

namespace {

// Two-pass per-channel statistics in double, independent of the layer.
void oracle_stats(const Tensor<double>& x, int channel, double* mean, double* var) {
    double s = 0.0;
    const int n = x.dim(0);
    for (int i = 0; i < n; ++i) s += x(i, channel);
    *mean = s / n;
    double sq = 0.0;
    for (int i = 0; i < n; ++i) sq += (x(i, channel) - *mean) * (x(i, channel) - *mean);
    *var = sq / n;
}

}  // namespace

TEST(BatchNorm, TrainModeNormalizesPerChannel) {
    std::mt19937 rng(4);
    std::normal_distribution<double> d(3.0, 2.5);
    Tensor<float> x({64, 5});
    for (std::int64_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(d(rng));
    BatchNormState<float> state(5);
    Tensor<float> y = abc::batchnorm_forward(x, state, /*train=*/true);
    for (int c = 0; c < 5; ++c) {
        double mean = 0.0, var = 0.0;
        for (int i = 0; i < 64; ++i) mean += y(i, c);
        mean /= 64;
        for (int i = 0; i < 64; ++i) var += (y(i, c) - mean) * (y(i, c) - mean);
        var /= 64;
        EXPECT_NEAR(mean, 0.0, 1e-4);
        EXPECT_NEAR(var, 1.0, 1e-3);
    }
}

TEST(BatchNorm, EvalModeIdentityUnderUnitStatistics) {
    BatchNormState<float> state(3);
    // gamma = 1, beta = 0, running mean 0, running var 1: identity up to the
    // epsilon inside 1/sqrt(1 + eps).
    Tensor<float> x({2, 3}, {0.5f, -1.0f, 2.0f, 1.5f, 0.0f, -0.25f});
    Tensor<float> y = abc::batchnorm_forward(x, state, /*train=*/false);
    for (std::int64_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], x[i], 1e-4);
}

TEST(BatchNorm, MatchesTwoPassOracle) {
    std::mt19937 rng(8);
    std::normal_distribution<double> d(-1.0, 4.0);
    Tensor<double> x({32, 4});
    for (std::int64_t i = 0; i < x.size(); ++i) x[i] = d(rng);
    BatchNormState<double> state(4);
    Tensor<double> y = abc::batchnorm_forward(x, state, /*train=*/true);
    for (int c = 0; c < 4; ++c) {
        double mean, var;
        oracle_stats(x, c, &mean, &var);
        for (int i = 0; i < 32; ++i) {
            const double want = (x(i, c) - mean) / std::sqrt(var + state.epsilon);
            EXPECT_NEAR(y(i, c), want, 1e-5);
        }
        // Running statistics after one step from (0, 1) with momentum 0.1.
        EXPECT_NEAR(state.running_mean[c], 0.1 * mean, 1e-9);
        const double unbiased = var * 32.0 / 31.0;
        EXPECT_NEAR(state.running_var[c], 0.9 * 1.0 + 0.1 * unbiased, 1e-9);
    }
}

TEST(BatchNorm, TrainThenEvalConsistency) {
    // Feeding the same batch repeatedly drives the running statistics to the
    // batch statistics, after which eval reproduces train up to the biased /
    // unbiased variance ratio.
    std::mt19937 rng(21);
    std::normal_distribution<double> d(0.5, 1.5);
    Tensor<float> x({48, 3});
    for (std::int64_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(d(rng));
    BatchNormState<float> state(3);
    Tensor<float> train_out;
    for (int step = 0; step < 400; ++step) train_out = abc::batchnorm_forward(x, state, true);
    Tensor<float> eval_out = abc::batchnorm_forward(x, state, false);
    const double ratio = std::sqrt(47.0 / 48.0);  // sqrt(biased/unbiased)
    for (std::int64_t i = 0; i < x.size(); ++i) {
        EXPECT_NEAR(eval_out[i], train_out[i] * ratio, 5e-3) << i;
    }
}

TEST(BatchNorm, BatchOfOneInTrainModeIsError) {
    BatchNormState<float> state(3);
    Tensor<float> x({1, 3});
    EXPECT_THROW(abc::batchnorm_forward(x, state, true), abc::ParameterError);
    EXPECT_NO_THROW(abc::batchnorm_forward(x, state, false));
}

TEST(BatchNorm, PerChannelOverImages) {
    std::mt19937 rng(5);
    std::normal_distribution<double> d(2.0, 3.0);
    Tensor<float> x({4, 2, 3, 3});
    for (std::int64_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(d(rng));
    BatchNormState<float> state(2);
    Tensor<float> y = abc::batchnorm_forward(x, state, true);
    for (int c = 0; c < 2; ++c) {
        double mean = 0.0;
        for (int b = 0; b < 4; ++b)
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) mean += y(b, c, i, j);
        mean /= 4 * 9;
        EXPECT_NEAR(mean, 0.0, 1e-4);
    }
}

TEST(BatchNorm, GraphOpGradientsMatchFiniteDifferences) {
    std::mt19937 rng(14);
    std::normal_distribution<double> d(1.0, 2.0);
    Tensor<double> x({6, 3});
    for (std::int64_t i = 0; i < x.size(); ++i) x[i] = d(rng);
    BatchNormState<double> state(3);
    state.gamma.value = Tensor<double>({3}, {1.2, 0.8, -0.5});
    state.beta.value = Tensor<double>({3}, {0.1, -0.2, 0.3});

    const auto loss_of = [&state](const Tensor<double>& input) {
        BatchNormState<double> tmp = state;  // keep running stats untouched
        Tensor<double> y = abc::batchnorm_forward(input, tmp, true);
        double acc = 0.0;
        for (std::int64_t i = 0; i < y.size(); ++i) acc += y[i] * (0.1 * static_cast<double>(i % 7) + 0.3);
        return acc;
    };

    abc::Graph<double> g;
    abc::NodeId xn = g.leaf(x);
    abc::NodeId y = abc::batchnorm(g, xn, g.param(state.gamma), g.param(state.beta), state, true);
    Tensor<double> w(g.value(y).shape());
    for (std::int64_t i = 0; i < w.size(); ++i) w[i] = 0.1 * static_cast<double>(i % 7) + 0.3;
    state.gamma.zero_grad();
    state.beta.zero_grad();
    g.backward(abc::sum(g, abc::mul(g, y, g.leaf(w))));

    const double eps = 1e-6;
    // input gradient
    for (std::int64_t i = 0; i < x.size(); ++i) {
        Tensor<double> xp = x, xm = x;
        xp[i] += eps;
        xm[i] -= eps;
        const double numeric = (loss_of(xp) - loss_of(xm)) / (2 * eps);
        EXPECT_NEAR(g.grad(xn)[i], numeric, 1e-6) << "x[" << i << "]";
    }
    // gamma / beta gradients
    for (int c = 0; c < 3; ++c) {
        BatchNormState<double> tmp = state;
        tmp.gamma.value[c] += eps;
        Tensor<double> yp = abc::batchnorm_forward(x, tmp, true);
        tmp.gamma.value[c] -= 2 * eps;
        Tensor<double> ym = abc::batchnorm_forward(x, tmp, true);
        double fp = 0.0, fm = 0.0;
        for (std::int64_t i = 0; i < yp.size(); ++i) {
            fp += yp[i] * w[i];
            fm += ym[i] * w[i];
        }
        EXPECT_NEAR(state.gamma.grad[c], (fp - fm) / (2 * eps), 1e-6);
    }
}
