#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "abc/graph.hpp"
#include "abc/tensor.hpp"

namespace abc {

/// Per-channel batch normalization state. Learned scale gamma and shift beta
/// live in Parameters so they train like any other weight; running statistics
/// are updated only by train-mode forward passes. Supports B x C inputs
/// (channel = column) and B x C x H x W inputs (channel = axis 1).
template <typename T>
struct BatchNormState {
    Parameter<T> gamma;
    Parameter<T> beta;
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double momentum = 0.1;  // new = (1 - momentum) * old + momentum * batch
    double epsilon = 1e-5;

    BatchNormState() = default;
    explicit BatchNormState(int channels, std::string name = "bn")
        : gamma(name + ".gamma", Tensor<T>::full({channels}, T(1))),
          beta(name + ".beta", Tensor<T>({channels})),
          running_mean(static_cast<std::size_t>(channels), 0.0),
          running_var(static_cast<std::size_t>(channels), 1.0) {}

    int channels() const { return gamma.value.dim(0); }
};

namespace detail {

template <typename T>
struct BnLayout {
    int channels;
    std::int64_t per_channel;  // elements per channel across the batch
    // flat index of element e (0 <= e < per_channel) of channel c
    std::int64_t (*index)(const Tensor<T>&, int, std::int64_t);
};

template <typename T>
BnLayout<T> bn_layout(const Tensor<T>& x) {
    if (x.rank() == 2) {
        return {x.dim(1), x.dim(0), [](const Tensor<T>& t, int c, std::int64_t e) {
                    return e * static_cast<std::int64_t>(t.dim(1)) + c;
                }};
    }
    if (x.rank() == 4) {
        return {x.dim(1), static_cast<std::int64_t>(x.dim(0)) * x.dim(2) * x.dim(3),
                [](const Tensor<T>& t, int c, std::int64_t e) {
                    const std::int64_t plane = static_cast<std::int64_t>(t.dim(2)) * t.dim(3);
                    const std::int64_t b = e / plane;
                    const std::int64_t p = e % plane;
                    return (b * t.dim(1) + c) * plane + p;
                }};
    }
    throw DimensionError("batchnorm: expected B x C or B x C x H x W input, got " + x.shape_string());
}

}  // namespace detail

/// Train mode normalizes by batch statistics (biased variance) and updates
/// the running statistics; eval mode normalizes by the running statistics.
/// Statistics are accumulated in double regardless of T.
template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& x, BatchNormState<T>& state, bool train) {
    const auto layout = detail::bn_layout(x);
    if (layout.channels != state.channels()) {
        throw DimensionError("batchnorm: input has " + std::to_string(layout.channels) +
                             " channels, state has " + std::to_string(state.channels()));
    }
    if (train && x.dim(0) < 2) {
        throw ParameterError("batchnorm: train mode needs batch size >= 2, got " + std::to_string(x.dim(0)));
    }
    Tensor<T> out(x.shape());
    const std::int64_t n = layout.per_channel;
    for (int c = 0; c < layout.channels; ++c) {
        double mean, var;
        if (train) {
            double s = 0.0;
            for (std::int64_t e = 0; e < n; ++e) s += static_cast<double>(x[layout.index(x, c, e)]);
            mean = s / static_cast<double>(n);
            double sq = 0.0;
            for (std::int64_t e = 0; e < n; ++e) {
                const double d = static_cast<double>(x[layout.index(x, c, e)]) - mean;
                sq += d * d;
            }
            var = sq / static_cast<double>(n);
            const double unbiased = n > 1 ? sq / static_cast<double>(n - 1) : var;
            state.running_mean[c] = (1.0 - state.momentum) * state.running_mean[c] + state.momentum * mean;
            state.running_var[c] = (1.0 - state.momentum) * state.running_var[c] + state.momentum * unbiased;
        } else {
            mean = state.running_mean[c];
            var = state.running_var[c];
        }
        const double inv_std = 1.0 / std::sqrt(var + state.epsilon);
        const double gamma = static_cast<double>(state.gamma.value[c]);
        const double beta = static_cast<double>(state.beta.value[c]);
        for (std::int64_t e = 0; e < n; ++e) {
            const std::int64_t i = layout.index(x, c, e);
            out[i] = static_cast<T>(gamma * ((static_cast<double>(x[i]) - mean) * inv_std) + beta);
        }
    }
    return out;
}

/// Graph op. Train-mode backward uses the exact batch-statistics gradient;
/// eval-mode backward treats mean/var as constants.
template <typename T>
NodeId batchnorm(Graph<T>& g, NodeId x, NodeId gamma, NodeId beta, BatchNormState<T>& state, bool train) {
    const Tensor<T>& xv = g.value(x);
    const auto layout = detail::bn_layout(xv);
    if (layout.channels != state.channels()) {
        throw DimensionError("batchnorm: input has " + std::to_string(layout.channels) +
                             " channels, state has " + std::to_string(state.channels()));
    }
    if (train && xv.dim(0) < 2) {
        throw ParameterError("batchnorm: train mode needs batch size >= 2, got " + std::to_string(xv.dim(0)));
    }
    // Per-channel mean and inv_std under the active mode; cached for backward.
    auto mean = std::make_shared<std::vector<double>>(layout.channels);
    auto inv_std = std::make_shared<std::vector<double>>(layout.channels);
    const std::int64_t n = layout.per_channel;
    for (int c = 0; c < layout.channels; ++c) {
        double m, v;
        if (train) {
            double s = 0.0;
            for (std::int64_t e = 0; e < n; ++e) s += static_cast<double>(xv[layout.index(xv, c, e)]);
            m = s / static_cast<double>(n);
            double sq = 0.0;
            for (std::int64_t e = 0; e < n; ++e) {
                const double d = static_cast<double>(xv[layout.index(xv, c, e)]) - m;
                sq += d * d;
            }
            v = sq / static_cast<double>(n);
            const double unbiased = n > 1 ? sq / static_cast<double>(n - 1) : v;
            state.running_mean[c] = (1.0 - state.momentum) * state.running_mean[c] + state.momentum * m;
            state.running_var[c] = (1.0 - state.momentum) * state.running_var[c] + state.momentum * unbiased;
        } else {
            m = state.running_mean[c];
            v = state.running_var[c];
        }
        (*mean)[c] = m;
        (*inv_std)[c] = 1.0 / std::sqrt(v + state.epsilon);
    }
    Tensor<T> out(xv.shape());
    const Tensor<T>& gv = g.value(gamma);
    const Tensor<T>& bv = g.value(beta);
    for (int c = 0; c < layout.channels; ++c) {
        for (std::int64_t e = 0; e < n; ++e) {
            const std::int64_t i = layout.index(xv, c, e);
            const double xh = (static_cast<double>(xv[i]) - (*mean)[c]) * (*inv_std)[c];
            out[i] = static_cast<T>(static_cast<double>(gv[c]) * xh + static_cast<double>(bv[c]));
        }
    }
    return g.op(std::move(out), {x, gamma, beta},
                [x, gamma, beta, mean, inv_std, train](Graph<T>& g, NodeId self) {
                    const Tensor<T>& xv = g.value(x);
                    const auto layout = detail::bn_layout(xv);
                    const std::int64_t n = layout.per_channel;
                    const Tensor<T>& u = g.grad(self);
                    const Tensor<T>& gv = g.value(gamma);
                    Tensor<T>& gx = g.grad(x);
                    Tensor<T>& ggamma = g.grad(gamma);
                    Tensor<T>& gbeta = g.grad(beta);
                    for (int c = 0; c < layout.channels; ++c) {
                        const double istd = (*inv_std)[c];
                        const double m = (*mean)[c];
                        const double gam = static_cast<double>(gv[c]);
                        double sum_u = 0.0, sum_uxh = 0.0;
                        for (std::int64_t e = 0; e < n; ++e) {
                            const std::int64_t i = layout.index(xv, c, e);
                            const double xh = (static_cast<double>(xv[i]) - m) * istd;
                            const double ui = static_cast<double>(u[i]);
                            sum_u += ui;
                            sum_uxh += ui * xh;
                        }
                        ggamma[c] += static_cast<T>(sum_uxh);
                        gbeta[c] += static_cast<T>(sum_u);
                        const double nd = static_cast<double>(n);
                        for (std::int64_t e = 0; e < n; ++e) {
                            const std::int64_t i = layout.index(xv, c, e);
                            const double xh = (static_cast<double>(xv[i]) - m) * istd;
                            const double ui = static_cast<double>(u[i]);
                            double dx;
                            if (train) {
                                dx = gam * istd * (ui - sum_u / nd - xh * sum_uxh / nd);
                            } else {
                                dx = gam * istd * ui;
                            }
                            gx[i] += static_cast<T>(dx);
                        }
                    }
                });
}

}  // namespace abc
