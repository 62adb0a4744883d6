#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "abc/tensor.hpp"

namespace abc {

template <typename T>
class Graph;

using NodeId = int;

/// Define-by-run reverse-mode tape. A fresh graph is built for every forward
/// pass; node ids are appended in execution order, so reverse id order is a
/// reverse topological order.
template <typename T>
class Graph {
public:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        std::vector<NodeId> inputs;
        // Scatters this node's grad into its inputs' grads.
        std::function<void(Graph&, NodeId)> backprop;
        Parameter<T>* sink = nullptr;  // set for parameter leaves
    };

    NodeId leaf(Tensor<T> value) {
        Node n;
        n.value = std::move(value);
        nodes_.push_back(std::move(n));
        return static_cast<NodeId>(nodes_.size()) - 1;
    }

    /// Leaf bound to a trainable parameter; backward() accumulates into
    /// param.grad.
    NodeId param(Parameter<T>& p) {
        NodeId id = leaf(p.value);
        nodes_[static_cast<std::size_t>(id)].sink = &p;
        return id;
    }

    NodeId op(Tensor<T> value, std::vector<NodeId> inputs, std::function<void(Graph&, NodeId)> backprop) {
        for (NodeId in : inputs) check_id(in);
        Node n;
        n.value = std::move(value);
        n.inputs = std::move(inputs);
        n.backprop = std::move(backprop);
        nodes_.push_back(std::move(n));
        return static_cast<NodeId>(nodes_.size()) - 1;
    }

    const Tensor<T>& value(NodeId id) const { return nodes_[check_id(id)].value; }
    Tensor<T>& grad(NodeId id) { return nodes_[check_id(id)].grad; }
    const std::vector<NodeId>& inputs(NodeId id) const { return nodes_[check_id(id)].inputs; }
    std::size_t node_count() const { return nodes_.size(); }

    /// Reverse sweep from a scalar loss node. Node gradients are reset on
    /// every call; parameter gradients accumulate across calls, so
    /// backward(a); backward(b) equals backward of a+b.
    void backward(NodeId loss) {
        if (nodes_.empty()) throw StateError("backward: graph is empty (no forward pass recorded)");
        check_id(loss);
        if (nodes_[static_cast<std::size_t>(loss)].value.size() != 1) {
            throw StateError("backward: loss node must be scalar, got shape " +
                             nodes_[static_cast<std::size_t>(loss)].value.shape_string());
        }
        for (Node& n : nodes_) {
            n.grad = Tensor<T>(n.value.shape());
        }
        nodes_[static_cast<std::size_t>(loss)].grad[0] = T(1);
        for (NodeId id = loss; id >= 0; --id) {
            Node& n = nodes_[static_cast<std::size_t>(id)];
            if (n.backprop) n.backprop(*this, id);
        }
        for (Node& n : nodes_) {
            if (!n.sink) continue;
            for (std::int64_t i = 0; i < n.grad.size(); ++i) n.sink->grad[i] += n.grad[i];
        }
    }

    bool all_finite() const {
        for (const Node& n : nodes_) {
            if (!n.value.all_finite()) return false;
            if (n.grad.size() > 0 && !n.grad.all_finite()) return false;
        }
        return true;
    }

private:
    std::size_t check_id(NodeId id) const {
        if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
            throw StateError("graph: node id " + std::to_string(id) + " out of range");
        }
        return static_cast<std::size_t>(id);
    }

    std::vector<Node> nodes_;
};

}  // namespace abc
