#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vreg/errors.hpp"

namespace vreg {

// Dense row-major tensor of doubles. The last shape axis is fastest-moving.
// Shapes are fixed at construction; there is no broadcasting anywhere in the
// library, callers reshape explicitly.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape)
        : shape_(std::move(shape)), data_(checked_size(shape_), 0.0) {}

    Tensor(std::vector<int> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (static_cast<std::int64_t>(data_.size()) != checked_size(shape_))
            throw ShapeError("tensor data length does not match shape");
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor full(std::vector<int> shape, double v) {
        Tensor t(std::move(shape));
        for (auto& x : t.data_) x = v;
        return t;
    }

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int extent(int axis) const { return shape_[static_cast<std::size_t>(axis)]; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    bool is_scalar() const { return size() == 1; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    double item() const {
        if (!is_scalar()) throw ShapeError("item() requires a single-element tensor");
        return data_[0];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const;

    // Used by error messages.
    std::string shape_string() const;

    static std::int64_t shape_size(const std::vector<int>& shape);

private:
    static std::int64_t checked_size(const std::vector<int>& shape);

    std::vector<int> shape_;
    std::vector<double> data_;
};

} // namespace vreg
