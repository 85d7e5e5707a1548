#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mts/errors.hpp"

namespace mts {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Dense row-major double tensor. Last axis is fastest. Volumetric tensors
// use the (B, C, D, H, W) convention.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(std::move(s)), data(size_t(shape_numel(shape)), 0.0) {}
    Tensor(Shape s, double fill) : shape(std::move(s)), data(size_t(shape_numel(shape)), fill) {}
    Tensor(Shape s, std::vector<double> values);

    static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
    static Tensor full(Shape s, double v) { return Tensor(std::move(s), v); }
    static Tensor scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

    int64_t numel() const { return int64_t(data.size()); }
    int rank() const { return int(shape.size()); }
    int64_t dim(int i) const { return shape.at(size_t(i)); }
    bool defined() const { return !shape.empty(); }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    double* ptr() { return data.data(); }
    const double* ptr() const { return data.data(); }

    double& operator[](int64_t i) { return data[size_t(i)]; }
    double operator[](int64_t i) const { return data[size_t(i)]; }

    double min() const;
    double max() const;
    double sum() const;
    double mean() const;
    bool all_finite() const;
};

void check_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace mts
