#include "fido/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace fido {

long long shape_numel(const Shape& shape) {
    long long n = 1;
    for (int d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

static void validate_shape(const Shape& shape) {
    for (int d : shape) {
        if (d <= 0) throw ShapeError("tensor extent must be positive, got shape " + shape_str(shape));
    }
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
    validate_shape(shape_);
    data_.assign(static_cast<size_t>(shape_numel(shape_)), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape(shape_);
    if (shape_numel(shape_) != static_cast<long long>(data_.size())) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + fido::shape_str(shape_));
    }
    check_finite("tensor construction");
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::full(Shape shape, double v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

double Tensor::sum() const {
    double s = 0.0;
    for (double v : data_) s += v;
    return s;
}

double Tensor::min() const { return *std::min_element(data_.begin(), data_.end()); }
double Tensor::max() const { return *std::max_element(data_.begin(), data_.end()); }

void Tensor::check_finite(const std::string& what) const {
    for (double v : data_) {
        if (!std::isfinite(v)) {
            throw NumericError("non-finite value produced by " + what);
        }
    }
}

}  // namespace fido
