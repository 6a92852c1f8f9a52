#include "pfl/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "pfl/errors.hpp"

namespace pfl {

namespace {

// out[B x m] = x[B x n] * W^T[n x m] + b, cache-friendly loop order.
Tensor linear_forward(const Tensor& x, const LayerParams& layer, std::size_t layer_index) {
  const std::size_t batch = x.rows();
  const std::size_t in_dim = x.cols();
  const std::size_t out_dim = layer.weight.shape[0];
  if (layer.weight.shape[1] != in_dim) {
    throw DimensionError("layer " + std::to_string(layer_index) + ": input dim " +
                         std::to_string(in_dim) + " does not match weight columns " +
                         std::to_string(layer.weight.shape[1]));
  }
  Tensor out = Tensor::zeros({batch, out_dim});
  for (std::size_t r = 0; r < batch; ++r) {
    const double* xr = x.data.data() + r * in_dim;
    double* outr = out.data.data() + r * out_dim;
    for (std::size_t o = 0; o < out_dim; ++o) {
      const double* wo = layer.weight.data.data() + o * in_dim;
      double s = layer.bias.data[o];
      for (std::size_t k = 0; k < in_dim; ++k) s += xr[k] * wo[k];
      outr[o] = s;
    }
  }
  return out;
}

void apply_activation(Tensor& t, Activation act) {
  if (act == Activation::relu) {
    for (double& v : t.data) v = v > 0.0 ? v : 0.0;
  }
}

struct ForwardCache {
  std::vector<Tensor> acts;  // acts[0] = input, acts[i] = body layer i output (post-activation)
  std::vector<Tensor> pre;   // pre-activation per body layer
  Tensor logits;
};

ForwardCache forward_cached(const ModelParams& params, const Tensor& batch) {
  if (batch.rank() != 2) throw DimensionError("forward: batch must be 2-d");
  ForwardCache cache;
  cache.acts.reserve(params.body.size() + 1);
  cache.acts.push_back(batch);
  for (std::size_t i = 0; i < params.body.size(); ++i) {
    Tensor z = linear_forward(cache.acts.back(), params.body[i], i);
    cache.pre.push_back(z);
    apply_activation(z, params.activation);
    cache.acts.push_back(std::move(z));
  }
  cache.logits = linear_forward(cache.acts.back(), params.head, params.body.size());
  return cache;
}

// dinput[B x n] += dout[B x m] * W[m x n]; accumulates weight/bias gradients.
void linear_backward(const Tensor& input, const LayerParams& layer, const Tensor& dout,
                     LayerParams& grad, Tensor* dinput) {
  const std::size_t batch = input.rows();
  const std::size_t in_dim = input.cols();
  const std::size_t out_dim = layer.weight.shape[0];
  for (std::size_t r = 0; r < batch; ++r) {
    const double* xr = input.data.data() + r * in_dim;
    const double* dr = dout.data.data() + r * out_dim;
    for (std::size_t o = 0; o < out_dim; ++o) {
      const double d = dr[o];
      if (d == 0.0) continue;
      grad.bias.data[o] += d;
      double* gw = grad.weight.data.data() + o * in_dim;
      for (std::size_t k = 0; k < in_dim; ++k) gw[k] += d * xr[k];
    }
    if (dinput != nullptr) {
      double* di = dinput->data.data() + r * in_dim;
      for (std::size_t o = 0; o < out_dim; ++o) {
        const double d = dr[o];
        if (d == 0.0) continue;
        const double* w = layer.weight.data.data() + o * in_dim;
        for (std::size_t k = 0; k < in_dim; ++k) di[k] += d * w[k];
      }
    }
  }
}

LayerParams zeros_like_layer(const LayerParams& layer) {
  return {Tensor::zeros(layer.weight.shape), Tensor::zeros(layer.bias.shape)};
}

}  // namespace

std::size_t ModelParams::input_dim() const {
  if (!body.empty()) return body.front().weight.shape[1];
  return head.weight.shape[1];
}

std::size_t ModelParams::feature_dim() const { return head.weight.shape[1]; }

std::size_t ModelParams::num_classes() const { return head.weight.shape[0]; }

void ModelParams::validate() const {
  std::size_t dim = input_dim();
  for (std::size_t i = 0; i < body.size(); ++i) {
    const LayerParams& layer = body[i];
    if (layer.weight.rank() != 2 || layer.bias.rank() != 1 ||
        layer.bias.shape[0] != layer.weight.shape[0]) {
      throw DimensionError("body layer " + std::to_string(i) + ": malformed shapes");
    }
    if (layer.weight.shape[1] != dim) {
      throw DimensionError("body layer " + std::to_string(i) + ": input dim " +
                           std::to_string(layer.weight.shape[1]) + " != previous output " +
                           std::to_string(dim));
    }
    dim = layer.weight.shape[0];
  }
  if (head.weight.rank() != 2 || head.bias.rank() != 1 ||
      head.bias.shape[0] != head.weight.shape[0]) {
    throw DimensionError("head: malformed shapes");
  }
  if (head.weight.shape[1] != dim) {
    throw DimensionError("head input dim " + std::to_string(head.weight.shape[1]) +
                         " != body output dim " + std::to_string(dim));
  }
}

ModelParams make_mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden_dims,
                     std::size_t num_classes, SplitRng& rng, Activation activation) {
  auto init_layer = [&rng](std::size_t out_dim, std::size_t in_dim) {
    LayerParams layer{Tensor::zeros({out_dim, in_dim}), Tensor::zeros({out_dim})};
    const double a = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
    for (double& w : layer.weight.data) w = rng.next_uniform(-a, a);
    return layer;
  };
  ModelParams params;
  params.activation = activation;
  std::size_t dim = input_dim;
  for (std::size_t h : hidden_dims) {
    params.body.push_back(init_layer(h, dim));
    dim = h;
  }
  params.head = init_layer(num_classes, dim);
  params.validate();
  return params;
}

ModelParams zeros_like(const ModelParams& params) {
  ModelParams out;
  out.activation = params.activation;
  out.body.reserve(params.body.size());
  for (const LayerParams& layer : params.body) out.body.push_back(zeros_like_layer(layer));
  out.head = zeros_like_layer(params.head);
  return out;
}

GradientBundle zero_gradients(const ModelParams& params) {
  GradientBundle grad;
  grad.body.reserve(params.body.size());
  for (const LayerParams& layer : params.body) grad.body.push_back(zeros_like_layer(layer));
  grad.head = zeros_like_layer(params.head);
  return grad;
}

namespace {

template <typename A, typename B>
bool layers_congruent(const A& a, const B& b) {
  if (a.body.size() != b.body.size()) return false;
  for (std::size_t i = 0; i < a.body.size(); ++i) {
    if (!a.body[i].weight.same_shape(b.body[i].weight) ||
        !a.body[i].bias.same_shape(b.body[i].bias)) {
      return false;
    }
  }
  return a.head.weight.same_shape(b.head.weight) && a.head.bias.same_shape(b.head.bias);
}

}  // namespace

bool congruent(const ModelParams& a, const ModelParams& b) { return layers_congruent(a, b); }
bool congruent(const ModelParams& params, const GradientBundle& grad) {
  return layers_congruent(params, grad);
}

ForwardResult forward(const ModelParams& params, const Tensor& batch) {
  ForwardCache cache = forward_cached(params, batch);
  check_finite(cache.acts.back(), "forward features");
  check_finite(cache.logits, "forward logits");
  return {std::move(cache.acts.back()), std::move(cache.logits)};
}

Tensor body_features(const std::vector<LayerParams>& body, Activation activation,
                     const Tensor& batch) {
  Tensor act = batch;
  for (std::size_t i = 0; i < body.size(); ++i) {
    act = linear_forward(act, body[i], i);
    apply_activation(act, activation);
  }
  return act;
}

Tensor softmax_rows(const Tensor& logits) {
  const std::size_t batch = logits.rows();
  const std::size_t classes = logits.cols();
  Tensor probs = Tensor::zeros({batch, classes});
  for (std::size_t r = 0; r < batch; ++r) {
    const double* lr = logits.data.data() + r * classes;
    double* pr = probs.data.data() + r * classes;
    double max_logit = lr[0];
    for (std::size_t c = 1; c < classes; ++c) max_logit = std::max(max_logit, lr[c]);
    double denom = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      pr[c] = std::exp(lr[c] - max_logit);
      denom += pr[c];
    }
    for (std::size_t c = 0; c < classes; ++c) pr[c] /= denom;
  }
  return probs;
}

LossGrad loss_and_grad(const ModelParams& params, const Tensor& batch,
                       std::span<const int> labels) {
  return loss_and_grad(params, batch, labels, FeatureHook{});
}

LossGrad loss_and_grad(const ModelParams& params, const Tensor& batch,
                       std::span<const int> labels, const FeatureHook& hook) {
  const std::size_t batch_size = batch.rows();
  if (batch_size == 0) throw ArgumentError("loss_and_grad: empty batch");
  if (labels.size() != batch_size) {
    throw DimensionError("loss_and_grad: labels length " + std::to_string(labels.size()) +
                         " != batch rows " + std::to_string(batch_size));
  }
  const std::size_t classes = params.num_classes();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw LabelError("label " + std::to_string(labels[i]) + " at index " +
                       std::to_string(i) + " outside [0, " + std::to_string(classes) + ")");
    }
  }

  ForwardCache cache = forward_cached(params, batch);
  const Tensor probs = softmax_rows(cache.logits);

  // Mean cross-entropy; dlogits = (softmax - onehot) / B.
  double loss = 0.0;
  Tensor dlogits = probs;
  const double inv_b = 1.0 / static_cast<double>(batch_size);
  for (std::size_t r = 0; r < batch_size; ++r) {
    const std::size_t y = static_cast<std::size_t>(labels[r]);
    const double p = std::max(probs.at(r, y), 1e-300);
    loss -= std::log(p) * inv_b;
    dlogits.at(r, y) -= 1.0;
  }
  for (double& v : dlogits.data) v *= inv_b;

  const Tensor& features = cache.acts.back();
  Tensor dfeatures = Tensor::zeros(features.shape);
  if (hook) {
    loss += hook(features, labels, dfeatures);
  }

  GradientBundle grad = zero_gradients(params);
  linear_backward(features, params.head, dlogits, grad.head, &dfeatures);

  Tensor dout = std::move(dfeatures);
  for (std::size_t i = params.body.size(); i-- > 0;) {
    if (params.activation == Activation::relu) {
      const Tensor& pre = cache.pre[i];
      for (std::size_t j = 0; j < dout.data.size(); ++j) {
        if (pre.data[j] <= 0.0) dout.data[j] = 0.0;
      }
    }
    Tensor dinput;
    Tensor* dinput_ptr = nullptr;
    if (i > 0) {
      dinput = Tensor::zeros(cache.acts[i].shape);
      dinput_ptr = &dinput;
    }
    linear_backward(cache.acts[i], params.body[i], dout, grad.body[i], dinput_ptr);
    if (i > 0) dout = std::move(dinput);
  }

  if (!std::isfinite(loss)) throw ArgumentError("non-finite loss");
  return {loss, std::move(grad)};
}

void sgd_step_inplace(ModelParams& params, const GradientBundle& grad, double lr,
                      ParamScope scope) {
  if (lr <= 0.0) throw ArgumentError("sgd_step: learning rate must be positive");
  if (!congruent(params, grad)) throw DimensionError("sgd_step: shape mismatch");
  auto step_layer = [lr](LayerParams& p, const LayerParams& g) {
    for (std::size_t i = 0; i < p.weight.data.size(); ++i) {
      p.weight.data[i] -= lr * g.weight.data[i];
    }
    for (std::size_t i = 0; i < p.bias.data.size(); ++i) {
      p.bias.data[i] -= lr * g.bias.data[i];
    }
  };
  if (scope != ParamScope::head_only) {
    for (std::size_t i = 0; i < params.body.size(); ++i) step_layer(params.body[i], grad.body[i]);
  }
  if (scope != ParamScope::body_only) step_layer(params.head, grad.head);
}

ModelParams sgd_step(const ModelParams& params, const GradientBundle& grad, double lr) {
  ModelParams out = params;
  sgd_step_inplace(out, grad, lr);
  return out;
}

std::vector<int> predict(const ModelParams& params, const Tensor& batch) {
  ForwardResult fwd = forward(params, batch);
  const std::size_t rows = fwd.logits.rows();
  const std::size_t classes = fwd.logits.cols();
  std::vector<int> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* lr = fwd.logits.data.data() + r * classes;
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c) {
      if (lr[c] > lr[best]) best = c;
    }
    out[r] = static_cast<int>(best);
  }
  return out;
}

namespace {

template <typename T>
std::vector<Tensor*> tensor_view(T& bundle) {
  std::vector<Tensor*> out;
  out.reserve(bundle.body.size() * 2 + 2);
  for (auto& layer : bundle.body) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
  out.push_back(&bundle.head.weight);
  out.push_back(&bundle.head.bias);
  return out;
}

template <typename T>
std::vector<const Tensor*> tensor_view_const(const T& bundle) {
  std::vector<const Tensor*> out;
  out.reserve(bundle.body.size() * 2 + 2);
  for (const auto& layer : bundle.body) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
  out.push_back(&bundle.head.weight);
  out.push_back(&bundle.head.bias);
  return out;
}

}  // namespace

std::vector<Tensor*> parameter_tensors(ModelParams& params) { return tensor_view(params); }
std::vector<const Tensor*> parameter_tensors(const ModelParams& params) {
  return tensor_view_const(params);
}
std::vector<Tensor*> parameter_tensors(GradientBundle& grad) { return tensor_view(grad); }
std::vector<const Tensor*> parameter_tensors(const GradientBundle& grad) {
  return tensor_view_const(grad);
}

std::uint64_t parameter_hash(const ModelParams& params) {
  // FNV-1a over the raw parameter bytes.
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const Tensor& t) {
    for (double v : t.data) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof(bits));
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xFF;
        h *= 1099511628211ULL;
      }
    }
  };
  for (const Tensor* t : parameter_tensors(params)) mix(*t);
  return h;
}

}  // namespace pfl
