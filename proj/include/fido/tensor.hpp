#pragma once

#include <string>
#include <vector>

#include "fido/errors.hpp"

namespace fido {

using Shape = std::vector<int>;

long long shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense n-dimensional array of doubles, row-major. The universal value type
// for images, masks, parameters and gradients. Values are immutable by
// convention once handed to the graph; mutation is for construction code.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(Shape shape);  // zero-filled
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double v);
    static Tensor full(Shape shape, double v);
    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

    const Shape& shape() const { return shape_; }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    long long numel() const { return static_cast<long long>(data_.size()); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](long long i) { return data_[static_cast<size_t>(i)]; }
    double operator[](long long i) const { return data_[static_cast<size_t>(i)]; }

    // 2-D / 3-D index helpers (row-major).
    double& at(int i, int j) { return data_[static_cast<size_t>(i) * shape_[1] + j]; }
    double at(int i, int j) const { return data_[static_cast<size_t>(i) * shape_[1] + j]; }
    double& at(int c, int i, int j) {
        return data_[(static_cast<size_t>(c) * shape_[1] + i) * shape_[2] + j];
    }
    double at(int c, int i, int j) const {
        return data_[(static_cast<size_t>(c) * shape_[1] + i) * shape_[2] + j];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    std::string shape_str() const { return fido::shape_str(shape_); }

    void fill(double v);
    double sum() const;
    double min() const;
    double max() const;

    // Throws NumericError naming `what` if any element is NaN or Inf.
    void check_finite(const std::string& what) const;

  private:
    Shape shape_;
    std::vector<double> data_;
};

}  // namespace fido
