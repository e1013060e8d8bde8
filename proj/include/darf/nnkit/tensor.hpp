#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "darf/error.hpp"

namespace darf::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string to_string(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

/// Dense row-major array. The element type doubles as the precision flag:
/// Tensor<double> for oracle and gradient work, Tensor<float> for training.
template <class T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)), data_(numel(shape_), fill) {}
    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (numel(shape_) != data_.size())
            throw DimensionError("tensor shape " + to_string(shape_) + " does not match " +
                                 std::to_string(data_.size()) + " values");
    }

    static Tensor zeros_like(const Tensor& o) { return Tensor(o.shape_); }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }
    T* raw() { return data_.data(); }
    const T* raw() const { return data_.data(); }
    std::vector<T>& storage() { return data_; }
    const std::vector<T>& storage() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    const T& at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    T& at(std::size_t i, std::size_t j, std::size_t k) { return data_[(i * shape_[1] + j) * shape_[2] + k]; }
    const T& at(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    Tensor reshaped(Shape s) const& {
        Tensor t = *this;
        t.reshape(std::move(s));
        return t;
    }
    Tensor reshaped(Shape s) && {
        reshape(std::move(s));
        return std::move(*this);
    }
    void reshape(Shape s) {
        if (numel(s) != data_.size())
            throw DimensionError("cannot reshape " + to_string(shape_) + " to " + to_string(s));
        shape_ = std::move(s);
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    Tensor& operator+=(const Tensor& o) {
        check_same(o, "+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }

    void check_same(const Tensor& o, const char* what) const {
        if (shape_ != o.shape_)
            throw DimensionError(std::string(what) + ": shape mismatch " + to_string(shape_) + " vs " +
                                 to_string(o.shape_));
    }

    friend bool operator==(const Tensor& a, const Tensor& b) { return a.shape_ == b.shape_ && a.data_ == b.data_; }

private:
    Shape shape_;
    std::vector<T> data_;
};

template <class U, class T>
Tensor<U> cast(const Tensor<T>& t) {
    std::vector<U> d(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) d[i] = static_cast<U>(t[i]);
    return Tensor<U>(t.shape(), std::move(d));
}

/// A trainable tensor with its gradient accumulator and a slash-separated path name.
template <class T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;

    Parameter() = default;
    Parameter(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

    void zero_grad() { grad = Tensor<T>(value.shape()); }
};

template <class T>
using ParamList = std::vector<Parameter<T>*>;

template <class T>
void zero_grads(const ParamList<T>& ps) {
    for (auto* p : ps) p->zero_grad();
}

template <class T>
std::size_t parameter_count(const ParamList<T>& ps) {
    std::size_t n = 0;
    for (auto* p : ps) n += p->value.size();
    return n;
}

}  // namespace darf::nn
