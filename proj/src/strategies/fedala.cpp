#include "pfl/strategies/fedala.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pfl/errors.hpp"
#include "pfl/geometry.hpp"
#include "pfl/runtime.hpp"

namespace pfl {

namespace {

// Parameter layers in blend order: body layers bottom-up, then the head.
std::vector<const LayerParams*> layer_list(const ModelParams& params) {
  std::vector<const LayerParams*> layers;
  for (const LayerParams& l : params.body) layers.push_back(&l);
  layers.push_back(&params.head);
  return layers;
}

std::vector<LayerParams*> layer_list(ModelParams& params) {
  std::vector<LayerParams*> layers;
  for (LayerParams& l : params.body) layers.push_back(&l);
  layers.push_back(&params.head);
  return layers;
}

std::size_t clamp_range(const ModelParams& params, int layer_range) {
  const std::size_t total = params.body.size() + 1;
  return std::min<std::size_t>(static_cast<std::size_t>(std::max(1, layer_range)), total);
}

double blend_value(double local, double global_value, double w) {
  if (w >= 1.0) return global_value;
  if (w <= 0.0) return local;
  return local + w * (global_value - local);
}

}  // namespace

std::vector<Tensor> ala_initial_blend(const ModelParams& params, int layer_range) {
  const std::size_t range = clamp_range(params, layer_range);
  const auto layers = layer_list(params);
  std::vector<Tensor> blend;
  for (std::size_t i = layers.size() - range; i < layers.size(); ++i) {
    blend.push_back(Tensor::filled(layers[i]->weight.shape, 1.0));
    blend.push_back(Tensor::filled(layers[i]->bias.shape, 1.0));
  }
  return blend;
}

ModelParams ala_blend_models(const ModelParams& local, const ModelParams& global_params,
                             const std::vector<Tensor>& blend, int layer_range) {
  if (!congruent(local, global_params)) {
    throw DimensionError("ala_blend_models: local/global shape mismatch");
  }
  const std::size_t range = clamp_range(local, layer_range);
  ModelParams out = global_params;  // layers outside the range take the global value
  const auto local_layers = layer_list(local);
  const auto global_layers = layer_list(global_params);
  const auto out_layers = layer_list(out);
  const std::size_t first_ranged = local_layers.size() - range;
  if (blend.size() != range * 2) {
    throw DimensionError("ala_blend_models: blend tensor count mismatch");
  }
  for (std::size_t i = first_ranged; i < local_layers.size(); ++i) {
    const Tensor& ww = blend[(i - first_ranged) * 2];
    const Tensor& wb = blend[(i - first_ranged) * 2 + 1];
    if (!ww.same_shape(local_layers[i]->weight) || !wb.same_shape(local_layers[i]->bias)) {
      throw DimensionError("ala_blend_models: blend shape mismatch");
    }
    for (std::size_t k = 0; k < ww.data.size(); ++k) {
      out_layers[i]->weight.data[k] =
          blend_value(local_layers[i]->weight.data[k], global_layers[i]->weight.data[k],
                      ww.data[k]);
    }
    for (std::size_t k = 0; k < wb.data.size(); ++k) {
      out_layers[i]->bias.data[k] = blend_value(
          local_layers[i]->bias.data[k], global_layers[i]->bias.data[k], wb.data[k]);
    }
  }
  return out;
}

namespace {

class AlaStrategy final : public Strategy {
 public:
  AlaStrategy(const GlobalConfig& config, AlaConfig ala) : config_(config), ala_(ala) {}

  std::string name() const override { return "fedala"; }

  void setup(std::vector<ClientState>& clients, const ModelParams& init) override {
    global_ = init;
    for (ClientState& client : clients) {
      AlaState state;
      state.blend = ala_initial_blend(init, ala_.layer_range);
      state.first_round_done = false;
      client.state = std::move(state);
      client.personalized = init;
    }
  }

  RoundMessage local_update(ClientState& client, const RoundContext& ctx,
                            SplitRng rng) const override {
    AlaState& st = std::get<AlaState>(client.state);
    ModelParams& local = client.personalized;

    if (!st.first_round_done) {
      // First participation adopts the global model wholesale.
      local = global_;
      st.first_round_done = true;
    } else {
      train_blend_weights(st, local, client, ctx, rng);
      local = ala_blend_models(local, global_, st.blend, ala_.layer_range);
    }

    const double loss =
        local_sgd(local, client.data.train_x, client.data.train_y, config_.local_epochs,
                  config_.batch_size, config_.local_lr, rng);

    RoundMessage msg;
    msg.client_id = client.id;
    msg.sample_count = static_cast<double>(client.data.train_size());
    msg.train_loss = loss;
    msg.payload = ModelUpload{local};
    return msg;
  }

  void aggregate(const std::vector<RoundMessage>& uploads, const RoundContext&,
                 std::vector<ClientState>&) override {
    std::vector<WeightedModel> entries;
    entries.reserve(uploads.size());
    for (const RoundMessage& msg : uploads) {
      entries.push_back(
          {msg.client_id, &std::get<ModelUpload>(msg.payload).model, msg.sample_count});
    }
    global_ = weighted_average(std::move(entries));
  }

  ModelParams personalized_model(const ClientState& client, SplitRng) const override {
    return client.personalized;
  }

  std::vector<int> predict_global(const ClientState&, const Tensor& batch) const override {
    return predict(global_, batch);
  }

 private:
  // Gradient steps on the blend weights over an s% subsample of local data,
  // clipped into [0,1] after every step. Round 2 loops to convergence
  // (loss improvement < 1e-4 over a 5-step window, 50 steps max); other
  // rounds take a single step.
  void train_blend_weights(AlaState& st, const ModelParams& local,
                           const ClientState& client, const RoundContext& ctx,
                           SplitRng& rng) const {
    const std::size_t n = client.data.train_size();
    std::size_t k = static_cast<std::size_t>(
        std::floor(ala_.data_percent / 100.0 * static_cast<double>(n)));
    k = std::max<std::size_t>(k, 1);
    std::vector<std::size_t> ids(n);
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + rng.next_below(n - i);
      std::swap(ids[i], ids[j]);
    }
    auto [sx, sy] = gather_batch(client.data.train_x, client.data.train_y,
                                 std::span<const std::size_t>(ids.data(), k));

    const int max_steps = ctx.round == 2 ? 50 : 1;
    const double tol = 1e-4;
    const int window = 5;
    std::vector<double> history;

    const std::size_t range = st.blend.size() / 2;
    const std::size_t first_ranged = local.body.size() + 1 - range;

    for (int step = 0; step < max_steps; ++step) {
      const ModelParams blended = ala_blend_models(local, global_, st.blend,
                                                   ala_.layer_range);
      LossGrad lg = loss_and_grad(blended, sx, sy);

      // dL/dW = dL/dtheta_hat .* (global - local) on the ranged layers.
      auto grad_layers = [&](const GradientBundle& g) {
        std::vector<const Tensor*> t;
        for (const LayerParams& l : g.body) {
          t.push_back(&l.weight);
          t.push_back(&l.bias);
        }
        t.push_back(&g.head.weight);
        t.push_back(&g.head.bias);
        return t;
      };
      const auto g_all = grad_layers(lg.grad);
      const auto local_all = parameter_tensors(local);
      const auto global_all = parameter_tensors(global_);
      for (std::size_t b = 0; b < st.blend.size(); ++b) {
        const std::size_t tensor_idx = first_ranged * 2 + b;
        Tensor& w = st.blend[b];
        const Tensor& g = *g_all[tensor_idx];
        const Tensor& lv = *local_all[tensor_idx];
        const Tensor& gv = *global_all[tensor_idx];
        for (std::size_t i = 0; i < w.data.size(); ++i) {
          w.data[i] -= ala_.ala_lr * g.data[i] * (gv.data[i] - lv.data[i]);
        }
        clip01_inplace(w);
      }

      history.push_back(lg.loss);
      if (static_cast<int>(history.size()) > window) {
        const double before = history[history.size() - 1 - window];
        if (before - history.back() < tol) break;
      }
    }
  }

  GlobalConfig config_;
  AlaConfig ala_;
  ModelParams global_;
};

}  // namespace

std::unique_ptr<Strategy> make_fedala_strategy(const GlobalConfig& config,
                                               const ModelParams&) {
  return std::make_unique<AlaStrategy>(config, std::get<AlaConfig>(config.strategy));
}

}  // namespace pfl
