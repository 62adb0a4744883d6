#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "abc/errors.hpp"

namespace abc {

/// Dense n-dimensional row-major array of floating-point values.
///
/// Training code instantiates Tensor<float>; the 64-bit shadow mode used by
/// the gradient checker instantiates Tensor<double> through the same
/// templates.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        data_.assign(count(shape_), T(0));
    }

    Tensor(std::vector<int> shape, std::vector<T> values) : shape_(std::move(shape)), data_(std::move(values)) {
        if (static_cast<std::int64_t>(data_.size()) != count(shape_)) {
            throw DimensionError("tensor: " + std::to_string(data_.size()) + " values for shape " +
                                 shape_string(shape_));
        }
    }

    static Tensor full(std::vector<int> shape, T value) {
        Tensor t(std::move(shape));
        t.fill(value);
        return t;
    }

    static Tensor scalar(T value) { return Tensor({1}, {value}); }

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int axis) const { return shape_[static_cast<std::size_t>(axis)]; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& values() { return data_; }
    const std::vector<T>& values() const { return data_; }

    T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    // 2-d and 4-d strided access; layers never need other ranks.
    T& operator()(int i, int j) { return data_[static_cast<std::size_t>(i) * shape_[1] + j]; }
    const T& operator()(int i, int j) const { return data_[static_cast<std::size_t>(i) * shape_[1] + j]; }

    T& operator()(int b, int c, int y, int x) {
        return data_[((static_cast<std::size_t>(b) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
    }
    const T& operator()(int b, int c, int y, int x) const {
        return data_[((static_cast<std::size_t>(b) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
    }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    bool all_finite() const {
        for (const T& v : data_) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

    /// Reinterprets the buffer under a new shape with the same element count.
    Tensor reshaped(std::vector<int> shape) const {
        if (count(shape) != size()) {
            throw DimensionError("reshape: " + shape_string(shape_) + " -> " + shape_string(shape) +
                                 " changes element count");
        }
        return Tensor(std::move(shape), data_);
    }

    static std::string shape_string(const std::vector<int>& shape) {
        std::ostringstream os;
        os << '[';
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) os << 'x';
            os << shape[i];
        }
        os << ']';
        return os.str();
    }

    std::string shape_string() const { return shape_string(shape_); }

private:
    static std::int64_t count(const std::vector<int>& shape) {
        std::int64_t n = 1;
        for (int d : shape) {
            if (d <= 0) throw DimensionError("tensor: non-positive dimension in " + shape_string(shape));
            n *= d;
        }
        return shape.empty() ? 0 : n;
    }

    std::vector<int> shape_;
    std::vector<T> data_;
};

/// Named trainable tensor. Gradients accumulate across backward passes until
/// zero_grad() is called.
template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;

    Parameter() = default;
    Parameter(std::string name, Tensor<T> v) : name(std::move(name)), value(std::move(v)) {
        grad = Tensor<T>(value.shape());
    }

    void zero_grad() { grad.fill(T(0)); }
};

}  // namespace abc
