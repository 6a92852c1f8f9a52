#pragma once

#include <memory>

#include "pfl/strategy.hpp"

namespace pfl {

// Cross-client class-direction regularizer on stacked classifier matrices:
// Reg(W) = sum over client pairs (a < b) and classes j of
// <w_hat_{a,j}, w_hat_{b,j}>^2 with row-normalized class vectors. Rows with
// near-zero norm contribute nothing.
double fedgc_regularizer(const std::vector<Tensor>& class_matrices);

// Analytic gradient of fedgc_regularizer, one tensor per client matrix.
std::vector<Tensor> fedgc_regularizer_gradient(const std::vector<Tensor>& class_matrices);

// W - lambda * eta * grad Reg(W). lambda == 0 returns the input unchanged.
std::vector<Tensor> fedgc_gradient_correction(const std::vector<Tensor>& class_matrices,
                                              double lambda, double eta);

std::unique_ptr<Strategy> make_fedgc_strategy(const GlobalConfig& config,
                                              const ModelParams& init);

}  // namespace pfl
