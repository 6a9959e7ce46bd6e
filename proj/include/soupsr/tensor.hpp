#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "soupsr/errors.hpp"

namespace soupsr {

/// Dense row-major (C-order) n-dimensional array. The last axis is the
/// fastest varying one; volumes use (Z, Y, X), feature maps (C, Z, Y, X)
/// or (C, H, W), convolution weights (Co, Ci, kz, ky, kx).
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(count(shape_)) {}

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<std::size_t> shape, T value) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    // Unchecked multi-index access; the arity must match the tensor rank.
    T& operator()(std::size_t a, std::size_t b) { return data_[a * shape_[1] + b]; }
    const T& operator()(std::size_t a, std::size_t b) const { return data_[a * shape_[1] + b]; }

    T& operator()(std::size_t a, std::size_t b, std::size_t c) {
        return data_[(a * shape_[1] + b) * shape_[2] + c];
    }
    const T& operator()(std::size_t a, std::size_t b, std::size_t c) const {
        return data_[(a * shape_[1] + b) * shape_[2] + c];
    }

    T& operator()(std::size_t a, std::size_t b, std::size_t c, std::size_t d) {
        return data_[((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
    }
    const T& operator()(std::size_t a, std::size_t b, std::size_t c, std::size_t d) const {
        return data_[((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
    }

    T& operator()(std::size_t a, std::size_t b, std::size_t c, std::size_t d, std::size_t e) {
        return data_[(((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d) * shape_[4] + e];
    }
    const T& operator()(std::size_t a, std::size_t b, std::size_t c, std::size_t d, std::size_t e) const {
        return data_[(((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d) * shape_[4] + e];
    }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    Tensor zeros_like() const { return Tensor(shape_); }

    bool all_finite() const {
        for (const T& v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    T min_value() const { return *std::min_element(data_.begin(), data_.end()); }
    T max_value() const { return *std::max_element(data_.begin(), data_.end()); }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape_);
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return out;
    }

    auto begin() { return data_.begin(); }
    auto end() { return data_.end(); }
    auto begin() const { return data_.begin(); }
    auto end() const { return data_.end(); }

    bool operator==(const Tensor& other) const {
        return shape_ == other.shape_ && data_ == other.data_;
    }

private:
    static std::size_t count(const std::vector<std::size_t>& shape) {
        std::size_t n = shape.empty() ? 0 : 1;
        for (std::size_t d : shape) n *= d;
        return n;
    }

    std::vector<std::size_t> shape_;
    std::vector<T> data_;
};

/// y += a * x, elementwise over equal-shaped tensors.
template <typename T>
inline void axpy(T a, const Tensor<T>& x, Tensor<T>& y) {
    if (!x.same_shape(y)) throw shape_error("axpy: shape mismatch");
    const T* xs = x.data();
    T* ys = y.data();
    for (std::size_t i = 0; i < x.size(); ++i) ys[i] += a * xs[i];
}

template <typename T>
inline void require_shape(const Tensor<T>& t, const std::vector<std::size_t>& shape,
                          const char* what) {
    if (t.shape() != shape) throw shape_error(std::string(what) + ": unexpected tensor shape");
}

} // namespace soupsr
