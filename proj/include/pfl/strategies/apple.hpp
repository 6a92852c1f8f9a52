#pragma once

#include <memory>

#include "pfl/strategy.hpp"

namespace pfl {

// Proximal-weight schedule: cosine decay from 1 to 0 over the first
// loss_decay * total_rounds rounds, 0 afterwards.
double apple_lambda_schedule(int round, int total_rounds, double loss_decay);

// Parameter-wise combination sum_j weights[j] * models[j]. A weight of
// exactly 1 with all others 0 reproduces that model bit-for-bit.
ModelParams combine_models(const std::vector<const ModelParams*>& models,
                           const std::vector<double>& weights);

std::unique_ptr<Strategy> make_apple_strategy(const GlobalConfig& config,
                                              const ModelParams& init);

}  // namespace pfl
