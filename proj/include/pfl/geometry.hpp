#pragma once

#include <vector>

#include "pfl/tensor.hpp"

namespace pfl {

// Elementwise clamp to [0, 1]. Idempotent.
Tensor clip01(const Tensor& t);
void clip01_inplace(Tensor& t);

// Euclidean projection of v onto the probability simplex
// { w : sum(w) = 1, w >= 0 } via the sorted-threshold algorithm.
// Throws ArgumentError on empty input.
std::vector<double> simplex_project(const std::vector<double>& v);

}  // namespace pfl
