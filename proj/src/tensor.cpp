#include "emoloc/tensor.hpp"

#include <cmath>
#include <sstream>

#include "emoloc/error.hpp"

namespace emoloc {

static int64_t product(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

Tensor::Tensor(std::vector<int> shape_, std::vector<double> values_)
    : shape(std::move(shape_)), values(std::move(values_)) {
    for (int d : shape) {
        if (d <= 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str());
    }
    if (product(shape) != static_cast<int64_t>(values.size())) {
        throw DimensionError("tensor shape " + shape_str() + " does not match " +
                             std::to_string(values.size()) + " values");
    }
}

Tensor Tensor::zeros(std::vector<int> shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(std::vector<int> shape, double v) {
    Tensor t;
    t.shape = std::move(shape);
    for (int d : t.shape) {
        if (d <= 0) throw DimensionError("tensor dimensions must be positive, got " + t.shape_str());
    }
    t.values.assign(static_cast<size_t>(product(t.shape)), v);
    return t;
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

int64_t Tensor::numel() const { return static_cast<int64_t>(values.size()); }

int Tensor::cols() const {
    if (shape.size() != 2) throw DimensionError("cols() requires a 2-d tensor, got " + shape_str());
    return shape[1];
}

bool Tensor::all_finite() const {
    for (double v : values) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape == b.shape && a.values == b.values;
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                             b.shape_str());
    }
}

}  // namespace emoloc
