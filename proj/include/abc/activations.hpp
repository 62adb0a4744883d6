#pragma once

#include <cmath>
#include <cstdint>

#include "abc/codes.hpp"
#include "abc/graph.hpp"
#include "abc/tensor.hpp"

namespace abc {

/// Clamping strength of the binarizing activation. r is driven by the
/// training schedule, never by gradients.
struct AbcParams {
    double r = 1.0;
};

struct ScaledTanhParams {
    double alpha = 1.0;
};

inline void check_r(double r) {
    if (r < 0.0 || !std::isfinite(r)) throw ParameterError("abc: r must be >= 0, got " + std::to_string(r));
}

inline void check_alpha(double alpha) {
    if (alpha <= 0.0 || !std::isfinite(alpha)) {
        throw ParameterError("scaled_tanh: alpha must be > 0, got " + std::to_string(alpha));
    }
}

/// y = 1 + r*x for x > 0, r*x otherwise (x = 0 takes the otherwise branch).
/// At r = 0 the output is exactly 0 or 1.
template <typename T>
Tensor<T> abc_forward(const Tensor<T>& x, double r) {
    check_r(r);
    const T rt = static_cast<T>(r);
    Tensor<T> out(x.shape());
    for (std::int64_t i = 0; i < x.size(); ++i) {
        out[i] = x[i] > T(0) ? T(1) + rt * x[i] : rt * x[i];
    }
    return out;
}

/// dy/dx = r everywhere, including x = 0.
template <typename T>
Tensor<T> abc_backward(const Tensor<T>& upstream, double r) {
    check_r(r);
    const T rt = static_cast<T>(r);
    Tensor<T> gx(upstream.shape());
    for (std::int64_t i = 0; i < upstream.size(); ++i) gx[i] = rt * upstream[i];
    return gx;
}

/// y = tanh(alpha * x)
template <typename T>
Tensor<T> scaled_tanh_forward(const Tensor<T>& x, double alpha) {
    check_alpha(alpha);
    const T at = static_cast<T>(alpha);
    Tensor<T> out(x.shape());
    for (std::int64_t i = 0; i < x.size(); ++i) out[i] = std::tanh(at * x[i]);
    return out;
}

/// grad_x = upstream * alpha * (1 - tanh^2(alpha * x))
template <typename T>
Tensor<T> scaled_tanh_backward(const Tensor<T>& upstream, const Tensor<T>& x, double alpha) {
    check_alpha(alpha);
    if (!upstream.same_shape(x)) {
        throw DimensionError("scaled_tanh_backward: " + upstream.shape_string() + " vs " + x.shape_string());
    }
    const T at = static_cast<T>(alpha);
    Tensor<T> gx(x.shape());
    for (std::int64_t i = 0; i < x.size(); ++i) {
        const T t = std::tanh(at * x[i]);
        gx[i] = upstream[i] * at * (T(1) - t * t);
    }
    return gx;
}

template <typename T>
NodeId abc_clamp(Graph<T>& g, NodeId x, double r) {
    Tensor<T> out = abc_forward(g.value(x), r);
    return g.op(std::move(out), {x}, [x, r](Graph<T>& g, NodeId self) {
        accumulate(g.grad(x), abc_backward(g.grad(self), r));
    });
}

template <typename T>
NodeId scaled_tanh(Graph<T>& g, NodeId x, double alpha) {
    Tensor<T> out = scaled_tanh_forward(g.value(x), alpha);
    return g.op(std::move(out), {x}, [x, alpha](Graph<T>& g, NodeId self) {
        accumulate(g.grad(x), scaled_tanh_backward(g.grad(self), g.value(x), alpha));
    });
}

/// Binarization rule applied to the pre-activation input of the binarizing
/// layer (the post-BN values).
enum class BinarizeMethod {
    Abc,        // bit = 1 iff x > 0 (the r = 0 clamp; x = 0 falls to the 0 branch)
    ScaledTanh  // bit = 1 iff x >= 0 (sign convention sgn(0) = +1)
};

/// Thresholds an N x k activation matrix into packed binary codes. The 0/1
/// bits map to -1/+1 for Hamming retrieval purposes; the stored form is 0/1.
template <typename T>
PackedCodeMatrix extract_binary_codes(const Tensor<T>& activations, BinarizeMethod method) {
    if (activations.rank() != 2 || activations.dim(0) == 0 || activations.dim(1) == 0) {
        throw DataError("extract_binary_codes: need a non-empty N x k activation matrix, got " +
                        activations.shape_string());
    }
    const int n = activations.dim(0);
    const int k = activations.dim(1);
    PackedCodeMatrix codes(n, k);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < k; ++j) {
            const T v = activations(i, j);
            const bool bit = method == BinarizeMethod::Abc ? (v > T(0)) : (v >= T(0));
            if (bit) codes.set_bit(i, j, true);
        }
    }
    return codes;
}

}  // namespace abc
