// Dense row-major N-d tensor. Images use NCHW layout.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "dxnet/common.hpp"

namespace dxnet {

using Shape = std::vector<std::int64_t>;

inline std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    out += ")";
    return out;
}

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (std::int64_t d : s) {
        if (d <= 0) throw ShapeError(detail::msg("non-positive extent in shape ", shape_str(s)));
        n *= d;
    }
    return n;
}

template <typename T>
class Tensor {
    static_assert(std::is_floating_point_v<T>, "Tensor scalar must be floating point");

public:
    Tensor() = default;
    explicit Tensor(Shape shape)
        : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_numel(shape_)), T(0)) {}
    Tensor(Shape shape, T fill)
        : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_numel(shape_)), fill) {}
    Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), data_(std::move(values)) {
        if (static_cast<std::int64_t>(data_.size()) != shape_numel(shape_))
            throw ShapeError(detail::msg("data length ", data_.size(), " does not match shape ",
                                         shape_str(shape_)));
    }

    static Tensor scalar(T v) { return Tensor(Shape{}, std::vector<T>{v}); }

    const Shape& shape() const { return shape_; }
    std::int64_t rank() const { return static_cast<std::int64_t>(shape_.size()); }
    std::int64_t dim(std::int64_t i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
    bool defined() const { return !data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    // NCHW accessor, rank-4 tensors only.
    T& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
        return data_[static_cast<std::size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
    }
    const T& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
        return data_[static_cast<std::size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
    }

    // CHW accessor, rank-3 tensors only.
    T& at(std::int64_t c, std::int64_t h, std::int64_t w) {
        return data_[static_cast<std::size_t>((c * shape_[1] + h) * shape_[2] + w)];
    }
    const T& at(std::int64_t c, std::int64_t h, std::int64_t w) const {
        return data_[static_cast<std::size_t>((c * shape_[1] + h) * shape_[2] + w)];
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const {
        for (T v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    Tensor reshaped(Shape new_shape) const {
        if (shape_numel(new_shape) != numel())
            throw ShapeError(detail::msg("cannot reshape ", shape_str(shape_), " to ",
                                         shape_str(new_shape)));
        Tensor out;
        out.shape_ = std::move(new_shape);
        out.data_ = data_;
        return out;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape_);
        for (std::int64_t i = 0; i < numel(); ++i) out[i] = static_cast<U>(data_[static_cast<std::size_t>(i)]);
        return out;
    }

private:
    Shape shape_;
    std::vector<T> data_;

    template <typename U>
    friend class Tensor;
};

template <typename T>
Tensor<T> zeros_like(const Tensor<T>& t) {
    return Tensor<T>(t.shape());
}

template <typename T>
void fill_normal(Tensor<T>& t, Rng& rng, T mean, T stddev) {
    std::normal_distribution<T> dist(mean, stddev);
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = dist(rng);
}

template <typename T>
void fill_uniform(Tensor<T>& t, Rng& rng, T lo, T hi) {
    std::uniform_real_distribution<T> dist(lo, hi);
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = dist(rng);
}

} // namespace dxnet
