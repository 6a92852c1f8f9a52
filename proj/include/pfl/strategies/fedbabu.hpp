#pragma once

#include <memory>

#include "pfl/strategy.hpp"

namespace pfl {

// Head-only fine-tune against cached body features; the body never changes.
// epochs == 0 returns {body, frozen_head} untouched.
ModelParams fedbabu_finetune(const std::vector<LayerParams>& body, Activation activation,
                             const LayerParams& frozen_head, const Tensor& train_x,
                             std::span<const int> train_y, int epochs, int batch_size,
                             double lr, SplitRng rng);

std::unique_ptr<Strategy> make_fedbabu_strategy(const GlobalConfig& config,
                                                const ModelParams& init);

}  // namespace pfl
