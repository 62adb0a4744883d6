#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "abc/graph.hpp"
#include "abc/tensor.hpp"

namespace abc {

template <typename T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
    for (std::int64_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

// ---------------------------------------------------------------------------
// Raw kernels. Forward functions validate shapes; backward functions assume
// the shapes their forward accepted.
// ---------------------------------------------------------------------------

/// out[i,j] = sum_t x[i,t] * W[t,j] + b[j]
template <typename T>
Tensor<T> linear_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    if (x.rank() != 2 || w.rank() != 2 || b.rank() != 1 || x.dim(1) != w.dim(0) || w.dim(1) != b.dim(0)) {
        throw DimensionError("linear: x" + x.shape_string() + " * W" + w.shape_string() + " + b" +
                             b.shape_string());
    }
    const int rows = x.dim(0), inner = x.dim(1), cols = w.dim(1);
    Tensor<T> out({rows, cols});
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) out(i, j) = b[j];
        for (int t = 0; t < inner; ++t) {
            const T xv = x(i, t);
            for (int j = 0; j < cols; ++j) out(i, j) += xv * w(t, j);
        }
    }
    return out;
}

template <typename T>
struct LinearGrads {
    Tensor<T> x;
    Tensor<T> w;
    Tensor<T> b;
};

template <typename T>
LinearGrads<T> linear_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& upstream) {
    const int rows = x.dim(0), inner = x.dim(1), cols = w.dim(1);
    LinearGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(w.shape()), Tensor<T>({cols})};
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
            const T u = upstream(i, j);
            g.b[j] += u;
            for (int t = 0; t < inner; ++t) {
                g.x(i, t) += u * w(t, j);
                g.w(t, j) += u * x(i, t);
            }
        }
    }
    return g;
}

inline int conv_output_extent(int in, int kernel, int stride, int pad) {
    return (in + 2 * pad - kernel) / stride + 1;
}

/// Valid cross-correlation with zero padding; x is B x C x H x W, kernel is
/// F x C x kh x kw.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& kernel, int stride, int pad) {
    if (x.rank() != 4 || kernel.rank() != 4 || x.dim(1) != kernel.dim(1)) {
        throw DimensionError("conv2d: x" + x.shape_string() + " * kernel" + kernel.shape_string());
    }
    if (stride < 1 || pad < 0) throw ParameterError("conv2d: stride must be >= 1, pad >= 0");
    const int batch = x.dim(0), chans = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int filters = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
    if (kh > h + 2 * pad || kw > w + 2 * pad) {
        throw DimensionError("conv2d: kernel " + kernel.shape_string() + " larger than padded input " +
                             x.shape_string() + " (pad " + std::to_string(pad) + ")");
    }
    const int oh = conv_output_extent(h, kh, stride, pad);
    const int ow = conv_output_extent(w, kw, stride, pad);
    Tensor<T> out({batch, filters, oh, ow});
    for (int b = 0; b < batch; ++b)
        for (int f = 0; f < filters; ++f)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    T acc = T(0);
                    for (int c = 0; c < chans; ++c)
                        for (int ky = 0; ky < kh; ++ky) {
                            const int iy = oy * stride - pad + ky;
                            if (iy < 0 || iy >= h) continue;
                            for (int kx = 0; kx < kw; ++kx) {
                                const int ix = ox * stride - pad + kx;
                                if (ix < 0 || ix >= w) continue;
                                acc += x(b, c, iy, ix) * kernel(f, c, ky, kx);
                            }
                        }
                    out(b, f, oy, ox) = acc;
                }
    return out;
}

template <typename T>
struct ConvGrads {
    Tensor<T> x;
    Tensor<T> kernel;
};

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& kernel, int stride, int pad,
                             const Tensor<T>& upstream) {
    const int batch = x.dim(0), chans = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int filters = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
    const int oh = upstream.dim(2), ow = upstream.dim(3);
    ConvGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(kernel.shape())};
    for (int b = 0; b < batch; ++b)
        for (int f = 0; f < filters; ++f)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    const T u = upstream(b, f, oy, ox);
                    for (int c = 0; c < chans; ++c)
                        for (int ky = 0; ky < kh; ++ky) {
                            const int iy = oy * stride - pad + ky;
                            if (iy < 0 || iy >= h) continue;
                            for (int kx = 0; kx < kw; ++kx) {
                                const int ix = ox * stride - pad + kx;
                                if (ix < 0 || ix >= w) continue;
                                g.x(b, c, iy, ix) += u * kernel(f, c, ky, kx);
                                g.kernel(f, c, ky, kx) += u * x(b, c, iy, ix);
                            }
                        }
                }
    return g;
}

/// Per-window maximum over B x C x H x W. Ties are broken by the first
/// element in row-major window order; argmax_out (when non-null) receives the
/// flat input index chosen for each output element.
template <typename T>
Tensor<T> maxpool_forward(const Tensor<T>& x, int window, int stride, std::vector<std::int64_t>* argmax_out = nullptr) {
    if (x.rank() != 4) throw DimensionError("maxpool: expected B x C x H x W input, got " + x.shape_string());
    const int batch = x.dim(0), chans = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (window < 1 || window > h || window > w) {
        throw ParameterError("maxpool: window " + std::to_string(window) + " invalid for input " +
                             x.shape_string());
    }
    if (stride < 1) throw ParameterError("maxpool: stride must be >= 1");
    const int oh = (h - window) / stride + 1;
    const int ow = (w - window) / stride + 1;
    Tensor<T> out({batch, chans, oh, ow});
    if (argmax_out) argmax_out->assign(static_cast<std::size_t>(out.size()), 0);
    std::int64_t oi = 0;
    for (int b = 0; b < batch; ++b)
        for (int c = 0; c < chans; ++c)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox, ++oi) {
                    T best = x(b, c, oy * stride, ox * stride);
                    std::int64_t best_idx =
                        ((static_cast<std::int64_t>(b) * chans + c) * h + oy * stride) * w + ox * stride;
                    for (int ky = 0; ky < window; ++ky)
                        for (int kx = 0; kx < window; ++kx) {
                            const int iy = oy * stride + ky;
                            const int ix = ox * stride + kx;
                            const T v = x(b, c, iy, ix);
                            if (v > best) {  // strict: first occurrence wins ties
                                best = v;
                                best_idx = ((static_cast<std::int64_t>(b) * chans + c) * h + iy) * w + ix;
                            }
                        }
                    out[oi] = best;
                    if (argmax_out) (*argmax_out)[static_cast<std::size_t>(oi)] = best_idx;
                }
    return out;
}

template <typename T>
Tensor<T> maxpool_backward(const std::vector<int>& input_shape, const std::vector<std::int64_t>& argmax,
                           const Tensor<T>& upstream) {
    Tensor<T> gx(input_shape);
    for (std::int64_t i = 0; i < upstream.size(); ++i) gx[argmax[static_cast<std::size_t>(i)]] += upstream[i];
    return gx;
}

/// max(0, x); subgradient at 0 is 0.
template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    for (std::int64_t i = 0; i < x.size(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
    return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& upstream) {
    Tensor<T> gx(x.shape());
    for (std::int64_t i = 0; i < x.size(); ++i) gx[i] = x[i] > T(0) ? upstream[i] : T(0);
    return gx;
}

// ---------------------------------------------------------------------------
// Graph wrappers.
// ---------------------------------------------------------------------------

template <typename T>
NodeId linear(Graph<T>& g, NodeId x, NodeId w, NodeId b) {
    Tensor<T> out = linear_forward(g.value(x), g.value(w), g.value(b));
    return g.op(std::move(out), {x, w, b}, [x, w, b](Graph<T>& g, NodeId self) {
        LinearGrads<T> grads = linear_backward(g.value(x), g.value(w), g.grad(self));
        accumulate(g.grad(x), grads.x);
        accumulate(g.grad(w), grads.w);
        accumulate(g.grad(b), grads.b);
    });
}

template <typename T>
NodeId conv2d(Graph<T>& g, NodeId x, NodeId kernel, int stride, int pad) {
    Tensor<T> out = conv2d_forward(g.value(x), g.value(kernel), stride, pad);
    return g.op(std::move(out), {x, kernel}, [x, kernel, stride, pad](Graph<T>& g, NodeId self) {
        ConvGrads<T> grads = conv2d_backward(g.value(x), g.value(kernel), stride, pad, g.grad(self));
        accumulate(g.grad(x), grads.x);
        accumulate(g.grad(kernel), grads.kernel);
    });
}

/// Adds a per-channel bias to a B x F x H x W activation.
template <typename T>
NodeId channel_bias(Graph<T>& g, NodeId x, NodeId b) {
    const Tensor<T>& xv = g.value(x);
    const Tensor<T>& bv = g.value(b);
    if (xv.rank() != 4 || bv.rank() != 1 || bv.dim(0) != xv.dim(1)) {
        throw DimensionError("channel_bias: x" + xv.shape_string() + " + b" + bv.shape_string());
    }
    Tensor<T> out = xv;
    const int chans = xv.dim(1);
    const std::int64_t plane = static_cast<std::int64_t>(xv.dim(2)) * xv.dim(3);
    for (int bi = 0; bi < xv.dim(0); ++bi)
        for (int c = 0; c < chans; ++c) {
            const std::int64_t base = (static_cast<std::int64_t>(bi) * chans + c) * plane;
            for (std::int64_t i = 0; i < plane; ++i) out[base + i] += bv[c];
        }
    return g.op(std::move(out), {x, b}, [x, b, chans, plane](Graph<T>& g, NodeId self) {
        const Tensor<T>& u = g.grad(self);
        accumulate(g.grad(x), u);
        Tensor<T>& gb = g.grad(b);
        const int batch = g.value(x).dim(0);
        for (int bi = 0; bi < batch; ++bi)
            for (int c = 0; c < chans; ++c) {
                const std::int64_t base = (static_cast<std::int64_t>(bi) * chans + c) * plane;
                for (std::int64_t i = 0; i < plane; ++i) gb[c] += u[base + i];
            }
    });
}

template <typename T>
NodeId maxpool(Graph<T>& g, NodeId x, int window, int stride) {
    auto argmax = std::make_shared<std::vector<std::int64_t>>();
    Tensor<T> out = maxpool_forward(g.value(x), window, stride, argmax.get());
    return g.op(std::move(out), {x}, [x, argmax](Graph<T>& g, NodeId self) {
        accumulate(g.grad(x), maxpool_backward(g.value(x).shape(), *argmax, g.grad(self)));
    });
}

template <typename T>
NodeId relu(Graph<T>& g, NodeId x) {
    Tensor<T> out = relu_forward(g.value(x));
    return g.op(std::move(out), {x}, [x](Graph<T>& g, NodeId self) {
        accumulate(g.grad(x), relu_backward(g.value(x), g.grad(self)));
    });
}

/// B x C x H x W -> B x (C*H*W)
template <typename T>
NodeId flatten(Graph<T>& g, NodeId x) {
    const Tensor<T>& xv = g.value(x);
    if (xv.rank() == 2) return x;
    if (xv.rank() != 4) throw DimensionError("flatten: expected rank-4 input, got " + xv.shape_string());
    const int batch = xv.dim(0);
    const int features = static_cast<int>(xv.size() / batch);
    Tensor<T> out = xv.reshaped({batch, features});
    return g.op(std::move(out), {x}, [x](Graph<T>& g, NodeId self) {
        const Tensor<T>& u = g.grad(self);
        Tensor<T>& gx = g.grad(x);
        for (std::int64_t i = 0; i < u.size(); ++i) gx[i] += u[i];
    });
}

template <typename T>
NodeId add(Graph<T>& g, NodeId a, NodeId b) {
    const Tensor<T>& av = g.value(a);
    const Tensor<T>& bv = g.value(b);
    if (!av.same_shape(bv)) throw DimensionError("add: " + av.shape_string() + " vs " + bv.shape_string());
    Tensor<T> out(av.shape());
    for (std::int64_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
    return g.op(std::move(out), {a, b}, [a, b](Graph<T>& g, NodeId self) {
        accumulate(g.grad(a), g.grad(self));
        accumulate(g.grad(b), g.grad(self));
    });
}

template <typename T>
NodeId mul(Graph<T>& g, NodeId a, NodeId b) {
    const Tensor<T>& av = g.value(a);
    const Tensor<T>& bv = g.value(b);
    if (!av.same_shape(bv)) throw DimensionError("mul: " + av.shape_string() + " vs " + bv.shape_string());
    Tensor<T> out(av.shape());
    for (std::int64_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
    return g.op(std::move(out), {a, b}, [a, b](Graph<T>& g, NodeId self) {
        const Tensor<T>& u = g.grad(self);
        Tensor<T>& ga = g.grad(a);
        Tensor<T>& gb = g.grad(b);
        const Tensor<T>& av = g.value(a);
        const Tensor<T>& bv = g.value(b);
        for (std::int64_t i = 0; i < u.size(); ++i) {
            ga[i] += u[i] * bv[i];
            gb[i] += u[i] * av[i];
        }
    });
}

/// Sum of all elements, as a scalar node.
template <typename T>
NodeId sum(Graph<T>& g, NodeId x) {
    const Tensor<T>& xv = g.value(x);
    T acc = T(0);
    for (std::int64_t i = 0; i < xv.size(); ++i) acc += xv[i];
    return g.op(Tensor<T>::scalar(acc), {x}, [x](Graph<T>& g, NodeId self) {
        const T u = g.grad(self)[0];
        Tensor<T>& gx = g.grad(x);
        for (std::int64_t i = 0; i < gx.size(); ++i) gx[i] += u;
    });
}

}  // namespace abc
