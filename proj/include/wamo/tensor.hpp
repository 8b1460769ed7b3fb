#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "wamo/error.hpp"

namespace wamo {

// Dense row-major tensor of doubles. All numerics in this project run in
// 64-bit arithmetic; 32-bit floats appear only in the on-disk formats.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(count(shape_), 0.0) {}

    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != count(shape_))
            throw ValidationError("tensor: data size does not match shape");
    }

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<std::size_t> shape, double v) {
        Tensor t(std::move(shape));
        for (auto& x : t.data_) x = v;
        return t;
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor vec(std::vector<double> v) {
        std::size_t n = v.size();
        return Tensor({n}, std::move(v));
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_[i]; }
    std::size_t numel() const { return data_.size(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    double& at(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double at(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (double x : data_)
            if (!std::isfinite(x)) return false;
        return true;
    }

    double max_abs() const {
        double m = 0.0;
        for (double x : data_) m = std::max(m, std::fabs(x));
        return m;
    }

    Tensor reshaped(std::vector<std::size_t> shape) const {
        if (count(shape) != numel())
            throw ValidationError("tensor: reshape element count mismatch");
        return Tensor(std::move(shape), data_);
    }

    static std::string shape_str(const std::vector<std::size_t>& s) {
        std::string out = "(";
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (i) out += "x";
            out += std::to_string(s[i]);
        }
        return out + ")";
    }

private:
    static std::size_t count(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) n *= d;
        return s.empty() ? 0 : n;
    }

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ValidationError("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

}  // namespace wamo
