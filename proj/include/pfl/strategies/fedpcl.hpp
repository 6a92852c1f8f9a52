#pragma once

#include <memory>

#include "pfl/strategy.hpp"

namespace pfl {

struct PclLosses {
  double global_loss = 0.0;
  double local_loss = 0.0;
  bool usable = false;  // false when no prototype exists for the label
};

// Prototype-contrastive losses for one embedding:
//   L_g = -log( exp(z . Cbar(y)/tau) / sum_{y_a in A(y)} exp(z . Cbar(y_a)/tau) )
// with A(y) = all classes holding a prototype; L_p is the mean of the same
// form over the given local prototype sets that contain y.
PclLosses fedpcl_losses(const std::vector<double>& embedding, int label,
                        const PrototypeMap& global_prototypes,
                        const std::vector<const PrototypeMap*>& local_sets,
                        double temperature);

// Mean L_g + L_p over the usable samples of a feature batch, with the exact
// gradient w.r.t. the linear projection z = W h + b. Samples whose label has
// no global prototype are excluded from loss, gradient and the mean.
struct PclBatchGrad {
  double loss = 0.0;
  LayerParams grad;
  std::size_t usable = 0;
};
PclBatchGrad fedpcl_projection_gradient(const LayerParams& projection,
                                        const Tensor& backbone_features,
                                        std::span<const int> labels,
                                        const PrototypeMap& global_prototypes,
                                        const std::vector<const PrototypeMap*>& local_sets,
                                        double temperature);

std::unique_ptr<Strategy> make_fedpcl_strategy(const GlobalConfig& config,
                                               const ModelParams& init);

}  // namespace pfl
