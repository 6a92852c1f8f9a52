#pragma once

#include <functional>
#include <span>
#include <vector>

#include "pfl/rng.hpp"
#include "pfl/tensor.hpp"

namespace pfl {

enum class Activation { relu, identity };

struct LayerParams {
  Tensor weight;  // [out_dim x in_dim]
  Tensor bias;    // [out_dim]
};

// Two-part MLP: feature-extractor body followed by a linear classifier head.
// The body output is the feature map shared by the prototype/centroid strategies.
struct ModelParams {
  std::vector<LayerParams> body;
  LayerParams head;
  Activation activation = Activation::relu;

  std::size_t input_dim() const;
  std::size_t feature_dim() const;
  std::size_t num_classes() const;

  // Verifies that layer shapes chain and the head matches the body output.
  void validate() const;
};

// Shape-congruent gradient holder: each entry is d(loss)/d(parameter).
struct GradientBundle {
  std::vector<LayerParams> body;
  LayerParams head;
};

struct ForwardResult {
  Tensor features;  // [B x feature_dim]
  Tensor logits;    // [B x num_classes]
};

struct LossGrad {
  double loss = 0.0;
  GradientBundle grad;
};

// Extra loss term defined on the feature map. Receives the batch features and
// labels, accumulates d(extra)/d(features) into dfeatures (same shape as
// features, pre-zeroed) and returns the extra loss value. Used for the
// centroid-alignment and prototype-regularization objectives.
using FeatureHook = std::function<double(const Tensor& features,
                                         std::span<const int> labels,
                                         Tensor& dfeatures)>;

// Glorot-uniform initialized MLP; biases start at zero.
ModelParams make_mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden_dims,
                     std::size_t num_classes, SplitRng& rng,
                     Activation activation = Activation::relu);

ModelParams zeros_like(const ModelParams& params);
GradientBundle zero_gradients(const ModelParams& params);

bool congruent(const ModelParams& a, const ModelParams& b);
bool congruent(const ModelParams& params, const GradientBundle& grad);

// features = body(batch), logits = head(features).
ForwardResult forward(const ModelParams& params, const Tensor& batch);

// Runs only the body layers; the feature map without a head.
Tensor body_features(const std::vector<LayerParams>& body, Activation activation,
                     const Tensor& batch);

// Row-wise softmax with max-subtraction.
Tensor softmax_rows(const Tensor& logits);

// Mean cross-entropy over the batch plus, when given, a feature-space term.
// Gradients are exact analytic derivatives of the returned loss.
LossGrad loss_and_grad(const ModelParams& params, const Tensor& batch,
                       std::span<const int> labels);
LossGrad loss_and_grad(const ModelParams& params, const Tensor& batch,
                       std::span<const int> labels, const FeatureHook& hook);

// p <- p - lr * g over every parameter.
ModelParams sgd_step(const ModelParams& params, const GradientBundle& grad, double lr);

enum class ParamScope { all, body_only, head_only };
void sgd_step_inplace(ModelParams& params, const GradientBundle& grad, double lr,
                      ParamScope scope = ParamScope::all);

// Argmax predictions, lowest index on ties.
std::vector<int> predict(const ModelParams& params, const Tensor& batch);

// Flat views used by blending/averaging code: body tensors then head tensors.
std::vector<Tensor*> parameter_tensors(ModelParams& params);
std::vector<const Tensor*> parameter_tensors(const ModelParams& params);
std::vector<Tensor*> parameter_tensors(GradientBundle& grad);
std::vector<const Tensor*> parameter_tensors(const GradientBundle& grad);

// Deterministic byte hash of all parameters (order-sensitive).
std::uint64_t parameter_hash(const ModelParams& params);

}  // namespace pfl
