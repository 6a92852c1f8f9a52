#include "pfl/tensor.hpp"

#include <cmath>
#include <string>

#include "pfl/errors.hpp"

namespace pfl {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  Tensor t;
  t.data.assign(shape_product(shape), 0.0);
  t.shape = std::move(shape);
  return t;
}

Tensor Tensor::filled(std::vector<std::size_t> shape, double value) {
  Tensor t;
  t.data.assign(shape_product(shape), value);
  t.shape = std::move(shape);
  return t;
}

Tensor Tensor::from(std::vector<std::size_t> shape, std::vector<double> values) {
  if (shape_product(shape) != values.size()) {
    throw DimensionError("tensor data length " + std::to_string(values.size()) +
                         " does not match shape product " +
                         std::to_string(shape_product(shape)));
  }
  Tensor t;
  t.shape = std::move(shape);
  t.data = std::move(values);
  return t;
}

Tensor Tensor::row_vector(std::vector<double> values) {
  Tensor t;
  t.shape = {1, values.size()};
  t.data = std::move(values);
  return t;
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw DimensionError("rows(): tensor is not 2-d");
  return shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw DimensionError("cols(): tensor is not 2-d");
  return shape[1];
}

double& Tensor::at(std::size_t r, std::size_t c) {
  return data[r * cols() + c];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return data[r * cols() + c];
}

void Tensor::check() const {
  if (shape_product(shape) != data.size()) {
    throw DimensionError("tensor shape/data mismatch");
  }
}

bool all_finite(const Tensor& t) {
  for (double v : t.data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void check_finite(const Tensor& t, const char* what) {
  if (!all_finite(t)) {
    throw ArgumentError(std::string("non-finite values in ") + what);
  }
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw DimensionError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw DimensionError("squared_distance: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void axpy(double alpha, const Tensor& x, Tensor& y) {
  if (!x.same_shape(y)) throw DimensionError("axpy: shape mismatch");
  for (std::size_t i = 0; i < x.data.size(); ++i) y.data[i] += alpha * x.data[i];
}

}  // namespace pfl
