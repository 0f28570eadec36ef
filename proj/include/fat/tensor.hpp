#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace fat {

// Dense row-major tensor of doubles. Shapes are small (at most 3-d here),
// so everything is a flat vector plus a shape.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), v_(count_of(shape_), 0.0) {}
    Tensor(std::vector<std::size_t> shape, std::vector<double> values)
        : shape_(std::move(shape)), v_(std::move(values)) {
        if (v_.size() != count_of(shape_))
            throw std::invalid_argument("Tensor: value count does not match shape");
    }

    static Tensor scalar(double x) { return Tensor({1}, {x}); }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t size() const { return v_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }

    double* data() { return v_.data(); }
    const double* data() const { return v_.data(); }
    std::vector<double>& values() { return v_; }
    const std::vector<double>& values() const { return v_; }

    double& operator[](std::size_t i) { return v_[i]; }
    double operator[](std::size_t i) const { return v_[i]; }

    // 2-d access (rows x cols)
    double& at(std::size_t r, std::size_t c) { return v_[r * shape_[1] + c]; }
    double at(std::size_t r, std::size_t c) const { return v_[r * shape_[1] + c]; }

    double* row(std::size_t r) { return v_.data() + r * shape_[1]; }
    const double* row(std::size_t r) const { return v_.data() + r * shape_[1]; }

    void fill(double x) { std::fill(v_.begin(), v_.end(), x); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const;

private:
    static std::size_t count_of(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) n *= d;
        return s.empty() ? 0 : n;
    }

    std::vector<std::size_t> shape_;
    std::vector<double> v_;
};

} // namespace fat
