#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "abc/graph.hpp"
#include "abc/tensor.hpp"

namespace abc {

inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

/// A batch of paired activations (or features) with similarity flags.
/// similar[i] is true when the two items share a class (single-label) or at
/// least one label (multi-label).
template <typename T>
struct PairBatch {
    Tensor<T> left;                     // B x k
    Tensor<T> right;                    // B x k
    std::vector<std::uint8_t> similar;  // B flags, 1 = similar

    int pairs() const { return left.rank() == 2 ? left.dim(0) : 0; }
};

template <typename T>
struct PairwiseLossResult {
    double loss = 0.0;
    Tensor<T> grad_left;
    Tensor<T> grad_right;
};

/// Contrastive pairwise hashing loss. Per pair with outputs b1, b2 and flag s:
///
///   L = 1/2 s ||b1-b2||^2 + 1/2 (1-s) max(0, m - ||b1-b2||^2)
///       + reg_weight (|| |b1| - 1 ||_1 + || |b2| - 1 ||_1)
///
/// The batch loss is the mean over pairs. Subgradients are 0 at the hinge
/// boundary and at the |b| = 1 and b = 0 kinks of the regularizer.
template <typename T>
PairwiseLossResult<T> pairwise_loss(const PairBatch<T>& batch, double m, double reg_weight) {
    if (m <= 0.0) throw ParameterError("pairwise_loss: margin m must be > 0, got " + std::to_string(m));
    if (reg_weight < 0.0) throw ParameterError("pairwise_loss: reg_weight must be >= 0");
    if (batch.left.rank() != 2 || !batch.left.same_shape(batch.right) ||
        static_cast<int>(batch.similar.size()) != batch.left.dim(0)) {
        throw DimensionError("pairwise_loss: left " + batch.left.shape_string() + ", right " +
                             batch.right.shape_string() + ", flags " + std::to_string(batch.similar.size()));
    }
    const int pairs = batch.left.dim(0);
    const int k = batch.left.dim(1);
    PairwiseLossResult<T> res;
    res.grad_left = Tensor<T>(batch.left.shape());
    res.grad_right = Tensor<T>(batch.right.shape());
    const double inv_b = 1.0 / static_cast<double>(pairs);
    double total = 0.0;
    for (int i = 0; i < pairs; ++i) {
        double dist_sq = 0.0;
        for (int j = 0; j < k; ++j) {
            const double d = static_cast<double>(batch.left(i, j)) - static_cast<double>(batch.right(i, j));
            dist_sq += d * d;
        }
        const bool s = batch.similar[static_cast<std::size_t>(i)] != 0;
        if (s) {
            total += 0.5 * dist_sq;
            for (int j = 0; j < k; ++j) {
                const T d = batch.left(i, j) - batch.right(i, j);
                res.grad_left(i, j) += static_cast<T>(inv_b) * d;
                res.grad_right(i, j) -= static_cast<T>(inv_b) * d;
            }
        } else if (dist_sq < m) {
            total += 0.5 * (m - dist_sq);
            for (int j = 0; j < k; ++j) {
                const T d = batch.left(i, j) - batch.right(i, j);
                res.grad_left(i, j) -= static_cast<T>(inv_b) * d;
                res.grad_right(i, j) += static_cast<T>(inv_b) * d;
            }
        }
        if (reg_weight > 0.0) {
            for (int j = 0; j < k; ++j) {
                const double b1 = static_cast<double>(batch.left(i, j));
                const double b2 = static_cast<double>(batch.right(i, j));
                total += reg_weight * (std::abs(std::abs(b1) - 1.0) + std::abs(std::abs(b2) - 1.0));
                // d/db |  |b| - 1  |  =  sign(|b| - 1) * sign(b), 0 at kinks
                res.grad_left(i, j) += static_cast<T>(inv_b * reg_weight * sign(std::abs(b1) - 1.0) * sign(b1));
                res.grad_right(i, j) += static_cast<T>(inv_b * reg_weight * sign(std::abs(b2) - 1.0) * sign(b2));
            }
        }
    }
    res.loss = total * inv_b;
    return res;
}

template <typename T>
struct CrossEntropyResult {
    double loss = 0.0;
    Tensor<T> grad_logits;
};

/// Mean negative log-softmax of the true class, stabilized by row-max
/// subtraction. grad = (softmax - onehot) / B.
template <typename T>
CrossEntropyResult<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2 || static_cast<int>(labels.size()) != logits.dim(0)) {
        throw DimensionError("softmax_cross_entropy: logits " + logits.shape_string() + ", labels " +
                             std::to_string(labels.size()));
    }
    const int batch = logits.dim(0);
    const int classes = logits.dim(1);
    CrossEntropyResult<T> res;
    res.grad_logits = Tensor<T>(logits.shape());
    const double inv_b = 1.0 / static_cast<double>(batch);
    double total = 0.0;
    std::vector<double> probs(static_cast<std::size_t>(classes));
    for (int i = 0; i < batch; ++i) {
        const int label = labels[static_cast<std::size_t>(i)];
        if (label < 0 || label >= classes) {
            throw DataError("softmax_cross_entropy: label " + std::to_string(label) + " out of [0, " +
                            std::to_string(classes) + ") at row " + std::to_string(i));
        }
        double mx = static_cast<double>(logits(i, 0));
        for (int c = 1; c < classes; ++c) mx = std::max(mx, static_cast<double>(logits(i, c)));
        double denom = 0.0;
        for (int c = 0; c < classes; ++c) {
            probs[static_cast<std::size_t>(c)] = std::exp(static_cast<double>(logits(i, c)) - mx);
            denom += probs[static_cast<std::size_t>(c)];
        }
        total += -(static_cast<double>(logits(i, label)) - mx - std::log(denom));
        for (int c = 0; c < classes; ++c) {
            const double p = probs[static_cast<std::size_t>(c)] / denom;
            res.grad_logits(i, c) = static_cast<T>(inv_b * (p - (c == label ? 1.0 : 0.0)));
        }
    }
    res.loss = total * inv_b;
    return res;
}

// ---------------------------------------------------------------------------
// Graph ops. The pairwise op takes one 2B x k activation node holding the
// left halves in rows [0, B) and the right halves in rows [B, 2B), which is
// how the trainer runs both pair sides through the network in one pass.
// ---------------------------------------------------------------------------

template <typename T>
NodeId pairwise_loss_op(Graph<T>& g, NodeId activations, const std::vector<std::uint8_t>& similar, double m,
                        double reg_weight) {
    const Tensor<T>& acts = g.value(activations);
    const int pairs = static_cast<int>(similar.size());
    if (acts.rank() != 2 || acts.dim(0) != 2 * pairs) {
        throw DimensionError("pairwise_loss_op: activations " + acts.shape_string() + " for " +
                             std::to_string(pairs) + " pairs");
    }
    const int k = acts.dim(1);
    PairBatch<T> batch;
    batch.left = Tensor<T>({pairs, k});
    batch.right = Tensor<T>({pairs, k});
    batch.similar = similar;
    for (int i = 0; i < pairs; ++i)
        for (int j = 0; j < k; ++j) {
            batch.left(i, j) = acts(i, j);
            batch.right(i, j) = acts(pairs + i, j);
        }
    auto result = std::make_shared<PairwiseLossResult<T>>(pairwise_loss(batch, m, reg_weight));
    return g.op(Tensor<T>::scalar(static_cast<T>(result->loss)), {activations},
                [activations, result, pairs, k](Graph<T>& g, NodeId self) {
                    const T u = g.grad(self)[0];
                    Tensor<T>& gx = g.grad(activations);
                    for (int i = 0; i < pairs; ++i)
                        for (int j = 0; j < k; ++j) {
                            gx(i, j) += u * result->grad_left(i, j);
                            gx(pairs + i, j) += u * result->grad_right(i, j);
                        }
                });
}

template <typename T>
NodeId softmax_cross_entropy_op(Graph<T>& g, NodeId logits, const std::vector<int>& labels) {
    auto result = std::make_shared<CrossEntropyResult<T>>(softmax_cross_entropy(g.value(logits), labels));
    return g.op(Tensor<T>::scalar(static_cast<T>(result->loss)), {logits},
                [logits, result](Graph<T>& g, NodeId self) {
                    const T u = g.grad(self)[0];
                    Tensor<T>& gx = g.grad(logits);
                    for (std::int64_t i = 0; i < gx.size(); ++i) gx[i] += u * result->grad_logits[i];
                });
}

}  // namespace abc
