#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

namespace pfl {

// Dense row-major tensor of 64-bit floats; the universal carrier for model
// parameters, activations and datasets. Invariant: product(shape) == data.size().
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor filled(std::vector<std::size_t> shape, double value);
  static Tensor from(std::vector<std::size_t> shape, std::vector<double> values);
  static Tensor row_vector(std::vector<double> values);

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }

  // 2-d accessors; throw DimensionError when rank != 2.
  std::size_t rows() const;
  std::size_t cols() const;
  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;

  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  void check() const;  // validates the shape/data invariant
};

std::size_t shape_product(const std::vector<std::size_t>& shape);

// Throws ArgumentError naming `what` when any entry is NaN or infinite.
void check_finite(const Tensor& t, const char* what);

bool all_finite(const Tensor& t);

double dot(const std::vector<double>& a, const std::vector<double>& b);
double squared_distance(const std::vector<double>& a, const std::vector<double>& b);

// y += alpha * x, elementwise over congruent tensors.
void axpy(double alpha, const Tensor& x, Tensor& y);

}  // namespace pfl
