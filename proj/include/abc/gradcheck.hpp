#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "abc/network.hpp"
#include "abc/random.hpp"

namespace abc {

inline double gradcheck_weight(Rng& rng) { return rng.uniform(0.25, 1.0); }

struct GradCheckOptions {
    double r = 0.5;  // schedule state under which the net is checked
    double alpha = 2.0;
    std::uint64_t weight_seed = 1234;  // for the scalarizing output weights
    // Skip parameters whose analytic gradient is exactly zero everywhere
    // (meaningful behind an r = 0 clamp, where both sides are identically 0).
    bool skip_zero_analytic = false;
};

/// Smallest |pre-activation| over all kinked activations (ABC, ReLU) for one
/// forward pass. The central-difference contract only holds when this margin
/// exceeds ~10x the probe step.
template <typename T>
double kink_margin(Network<T>& net, const Tensor<T>& input, const GradCheckOptions& opts = {}) {
    Graph<T> g;
    ScheduleState sched;
    sched.r = opts.r;
    sched.alpha = opts.alpha;
    ForwardNodes nodes = net.forward(g, g.leaf(input), /*train=*/true, sched);
    double margin = std::numeric_limits<double>::infinity();
    for (NodeId id : nodes.kink_inputs) {
        const Tensor<T>& v = g.value(id);
        for (std::int64_t i = 0; i < v.size(); ++i) {
            margin = std::min(margin, std::abs(static_cast<double>(v[i])));
        }
    }
    return margin;
}

/// Central-difference check of every parameter gradient against the tape.
/// Returns max over parameter components of
///   |analytic - (f(t+eps) - f(t-eps)) / (2 eps)| / max(1, |analytic|)
/// where f is a fixed random-weighted sum of the network outputs. BN running
/// statistics are saved and restored around the probing passes.
template <typename T>
double gradient_check(Network<T>& net, const Tensor<T>& input, double eps,
                      const GradCheckOptions& opts = {}) {
    if (!(eps > 0.0)) throw ParameterError("gradient_check: eps must be > 0");
    ScheduleState sched;
    sched.r = opts.r;
    sched.alpha = opts.alpha;

    std::vector<BatchNormState<T>*> bn_states = net.batchnorm_states();
    std::vector<std::pair<std::vector<double>, std::vector<double>>> bn_saved;
    for (BatchNormState<T>* s : bn_states) bn_saved.emplace_back(s->running_mean, s->running_var);

    const auto scalar_loss = [&]() {
        Graph<T> g;
        ForwardNodes nodes = net.forward(g, g.leaf(input), /*train=*/true, sched);
        const Tensor<T>& out = g.value(nodes.output);
        Rng wrng(opts.weight_seed);
        double loss = 0.0;
        for (std::int64_t i = 0; i < out.size(); ++i) {
            loss += gradcheck_weight(wrng) * static_cast<double>(out[i]);
        }
        return loss;
    };

    // Analytic pass: the same weighted sum expressed on the tape.
    std::vector<Parameter<T>*> params = net.parameters();
    for (Parameter<T>* p : params) p->zero_grad();
    {
        Graph<T> g;
        ForwardNodes nodes = net.forward(g, g.leaf(input), /*train=*/true, sched);
        const Tensor<T>& out = g.value(nodes.output);
        Rng wrng(opts.weight_seed);
        Tensor<T> weights(out.shape());
        for (std::int64_t i = 0; i < out.size(); ++i) weights[i] = static_cast<T>(gradcheck_weight(wrng));
        NodeId w = g.leaf(std::move(weights));
        g.backward(sum(g, mul(g, nodes.output, w)));
    }
    std::vector<Tensor<T>> analytic;
    analytic.reserve(params.size());
    for (Parameter<T>* p : params) analytic.push_back(p->grad);

    double worst = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Parameter<T>& p = *params[pi];
        if (opts.skip_zero_analytic) {
            bool all_zero = true;
            for (std::int64_t i = 0; i < analytic[pi].size() && all_zero; ++i) {
                all_zero = analytic[pi][i] == T(0);
            }
            if (all_zero) continue;
        }
        for (std::int64_t i = 0; i < p.value.size(); ++i) {
            const T saved = p.value[i];
            p.value[i] = saved + static_cast<T>(eps);
            const double f_plus = scalar_loss();
            p.value[i] = saved - static_cast<T>(eps);
            const double f_minus = scalar_loss();
            p.value[i] = saved;
            const double numeric = (f_plus - f_minus) / (2.0 * eps);
            const double a = static_cast<double>(analytic[pi][i]);
            const double rel = std::abs(a - numeric) / std::max(1.0, std::abs(a));
            worst = std::max(worst, rel);
        }
    }

    for (std::size_t i = 0; i < bn_states.size(); ++i) {
        bn_states[i]->running_mean = bn_saved[i].first;
        bn_states[i]->running_var = bn_saved[i].second;
    }
    return worst;
}

}  // namespace abc
