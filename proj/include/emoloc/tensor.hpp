#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace emoloc {

// Dense row-major tensor of 64-bit reals. Shapes are small (1-d to 3-d);
// all model arithmetic runs through these.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> values;

    Tensor() = default;
    Tensor(std::vector<int> shape_, std::vector<double> values_);

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, double v);
    static Tensor scalar(double v);

    int64_t numel() const;
    int ndim() const { return static_cast<int>(shape.size()); }
    int rows() const { return shape.empty() ? 0 : shape[0]; }
    int cols() const;

    double& at(int i) { return values[static_cast<size_t>(i)]; }
    double at(int i) const { return values[static_cast<size_t>(i)]; }
    double& at(int i, int j) { return values[static_cast<size_t>(i) * shape[1] + j]; }
    double at(int i, int j) const { return values[static_cast<size_t>(i) * shape[1] + j]; }
    double& at(int i, int j, int k) {
        return values[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
    }
    double at(int i, int j, int k) const {
        return values[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    bool all_finite() const;
    std::string shape_str() const;
};

bool operator==(const Tensor& a, const Tensor& b);
inline bool operator!=(const Tensor& a, const Tensor& b) { return !(a == b); }

// Throws DimensionError naming both shapes when they differ.
void check_same_shape(const char* op, const Tensor& a, const Tensor& b);

}  // namespace emoloc
