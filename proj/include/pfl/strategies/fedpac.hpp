#pragma once

#include <memory>

#include "pfl/strategy.hpp"

namespace pfl {

// Surrogate classifier-combination risk for one client: the expected squared
// error of the alpha-mixed linear classifier against one-hot targets under
// the client's per-class feature statistics,
//   R(alpha) = sum_k (n_k / n) * ( ||W(a) mu_k + b(a) - e_k||^2
//                                  + sum_{c,d} W(a)_{c,d}^2 * V_{k,d} )
// with W(a) = sum_j alpha_j W_j and b(a) = sum_j alpha_j b_j. Convex in alpha.
double fedpac_alpha_objective(const std::vector<const LayerParams*>& classifiers,
                              const FeatureStats& stats,
                              const std::vector<double>& alpha);

struct AlphaSolution {
  std::vector<double> alpha;
  double objective = 0.0;
  bool converged = false;
};

// Projected gradient descent on the simplex from the uniform start. Returns
// the best feasible iterate; converged == false after max_iters without the
// objective settling.
AlphaSolution fedpac_solve_alpha(const std::vector<const LayerParams*>& classifiers,
                                 const FeatureStats& stats, int max_iters = 500,
                                 double step = 0.1);

std::unique_ptr<Strategy> make_fedpac_strategy(const GlobalConfig& config,
                                               const ModelParams& init);

}  // namespace pfl
