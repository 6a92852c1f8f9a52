#pragma once

#include <memory>

#include "pfl/strategy.hpp"

namespace pfl {

// Trainable blend tensors (all ones) matching the last `layer_range` layers
// of the model, head counted as the last layer. One tensor per parameter
// tensor (weight, then bias) per ranged layer.
std::vector<Tensor> ala_initial_blend(const ModelParams& params, int layer_range);

// local + (global - local) .* W on the ranged layers; the global value
// outside the range. Exact at blend weights 0 and 1.
ModelParams ala_blend_models(const ModelParams& local, const ModelParams& global_params,
                             const std::vector<Tensor>& blend, int layer_range);

std::unique_ptr<Strategy> make_fedala_strategy(const GlobalConfig& config,
                                               const ModelParams& init);

}  // namespace pfl
