#pragma once

#include <cstdint>
#include <vector>

#include "abc/tensor.hpp"

namespace abc {

/// SGD with classic momentum and coupled (L2-gradient) weight decay:
///
///   v <- momentum * v + grad + weight_decay * param
///   param <- param - lr * v
template <typename T>
class SgdOptimizer {
public:
    SgdOptimizer(std::vector<Parameter<T>*> params, double momentum, double weight_decay)
        : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
        velocities_.reserve(params_.size());
        for (const Parameter<T>* p : params_) velocities_.emplace_back(p->value.shape());
    }

    void step(double lr) {
        if (lr < 0.0) throw ParameterError("sgd: learning rate must be >= 0");
        for (std::size_t pi = 0; pi < params_.size(); ++pi) {
            sgd_step(*params_[pi], velocities_[pi], lr, momentum_, weight_decay_);
        }
    }

    void zero_grad() {
        for (Parameter<T>* p : params_) p->zero_grad();
    }

    const std::vector<Tensor<T>>& velocities() const { return velocities_; }

private:
    std::vector<Parameter<T>*> params_;
    std::vector<Tensor<T>> velocities_;
    double momentum_;
    double weight_decay_;
};

/// One update of one parameter; velocity is owned by the caller.
template <typename T>
void sgd_step(Parameter<T>& param, Tensor<T>& velocity, double lr, double momentum, double weight_decay) {
    if (!param.value.same_shape(param.grad) || !param.value.same_shape(velocity)) {
        throw DimensionError("sgd: param " + param.value.shape_string() + ", grad " +
                             param.grad.shape_string() + ", velocity " + velocity.shape_string());
    }
    const T mom = static_cast<T>(momentum);
    const T wd = static_cast<T>(weight_decay);
    const T rate = static_cast<T>(lr);
    for (std::int64_t i = 0; i < param.value.size(); ++i) {
        velocity[i] = mom * velocity[i] + param.grad[i] + wd * param.value[i];
        param.value[i] -= rate * velocity[i];
    }
}

}  // namespace abc
