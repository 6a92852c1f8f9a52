#include "pfl/strategies/apple.hpp"

#include <algorithm>
#include <cmath>

#include "pfl/errors.hpp"
#include "pfl/runtime.hpp"

namespace pfl {

double apple_lambda_schedule(int round, int total_rounds, double loss_decay) {
  const double horizon = loss_decay * static_cast<double>(total_rounds);
  const double progress =
      horizon > 0.0 ? std::min(static_cast<double>(round) / horizon, 1.0) : 1.0;
  return (std::cos(3.14159265358979323846 * progress) + 1.0) / 2.0;
}

ModelParams combine_models(const std::vector<const ModelParams*>& models,
                           const std::vector<double>& weights) {
  if (models.empty() || models.size() != weights.size()) {
    throw ArgumentError("combine_models: empty input or weight count mismatch");
  }
  ModelParams out = zeros_like(*models.front());
  std::vector<Tensor*> out_tensors = parameter_tensors(out);
  for (std::size_t j = 0; j < models.size(); ++j) {
    const auto tensors = parameter_tensors(*models[j]);
    if (tensors.size() != out_tensors.size()) {
      throw DimensionError("combine_models: incongruent models");
    }
    const double w = weights[j];
    if (w == 0.0) continue;
    for (std::size_t t = 0; t < tensors.size(); ++t) {
      if (!tensors[t]->same_shape(*out_tensors[t])) {
        throw DimensionError("combine_models: shape mismatch");
      }
      for (std::size_t i = 0; i < tensors[t]->data.size(); ++i) {
        out_tensors[t]->data[i] += w * tensors[t]->data[i];
      }
    }
  }
  return out;
}

namespace {

double bundle_dot(const GradientBundle& grad, const ModelParams& model) {
  const auto g = parameter_tensors(grad);
  const auto m = parameter_tensors(model);
  double s = 0.0;
  for (std::size_t t = 0; t < g.size(); ++t) {
    for (std::size_t i = 0; i < g[t]->data.size(); ++i) {
      s += g[t]->data[i] * m[t]->data[i];
    }
  }
  return s;
}

class AppleStrategy final : public Strategy {
 public:
  AppleStrategy(const GlobalConfig& config, AppleConfig apple)
      : config_(config), apple_(apple) {}

  std::string name() const override { return "apple"; }

  void setup(std::vector<ClientState>& clients, const ModelParams& init) override {
    cores_.assign(clients.size(), init);
    counts_.resize(clients.size());
    double total = 0.0;
    for (std::size_t i = 0; i < clients.size(); ++i) {
      counts_[i] = static_cast<double>(clients[i].data.train_size());
      total += counts_[i];
    }
    std::vector<double> proportional(clients.size());
    for (std::size_t i = 0; i < clients.size(); ++i) proportional[i] = counts_[i] / total;
    for (ClientState& client : clients) {
      AppleState state;
      state.dr_vector = proportional;
      state.prox_center = proportional;
      client.state = std::move(state);
      client.personalized = init;
    }
  }

  RoundMessage local_update(ClientState& client, const RoundContext& ctx,
                            SplitRng rng) const override {
    AppleState& st = std::get<AppleState>(client.state);
    const std::size_t n_clients = cores_.size();
    if (st.dr_vector.size() != n_clients) {
      throw ConfigError("apple: DR vector length does not match client count");
    }
    const std::size_t self = static_cast<std::size_t>(client.id);
    const double lam = apple_lambda_schedule(ctx.round, config_.rounds, apple_.loss_decay);

    // Download all core models; the client's own copy evolves locally.
    ModelParams own_core = cores_[self];
    std::vector<const ModelParams*> core_view(n_clients);
    for (std::size_t j = 0; j < n_clients; ++j) core_view[j] = &cores_[j];
    core_view[self] = &own_core;

    const Tensor& x = client.data.train_x;
    const std::vector<int>& y = client.data.train_y;

    double loss_sum = 0.0;
    std::size_t steps = 0;
    for (int epoch = 0; epoch < config_.local_epochs; ++epoch) {
      for (const auto& indices : batch_plan(y.size(), config_.batch_size, rng)) {
        auto [bx, by] = gather_batch(x, y, indices);

        const ModelParams personalized = combine_models(core_view, st.dr_vector);
        LossGrad lg = loss_and_grad(personalized, bx, by);

        // Proximal penalty lambda(r) * mu / 2 * ||p_i - p_0||^2.
        double prox = 0.0;
        for (std::size_t j = 0; j < n_clients; ++j) {
          const double d = st.dr_vector[j] - st.prox_center[j];
          prox += d * d;
        }
        loss_sum += lg.loss + lam * apple_.mu / 2.0 * prox;
        ++steps;

        // dF/dp_j = <dF/dw_p, w_j> + lambda*mu*(p_j - p0_j), at the same iterate.
        std::vector<double> dp(n_clients);
        for (std::size_t j = 0; j < n_clients; ++j) {
          dp[j] = bundle_dot(lg.grad, *core_view[j]) +
                  lam * apple_.mu * (st.dr_vector[j] - st.prox_center[j]);
        }

        // dF/dw_i^(c) = p_ii * dF/dw_p.
        const double core_scale = apple_.eta1 * st.dr_vector[self];
        const auto own = parameter_tensors(own_core);
        const auto grads = parameter_tensors(lg.grad);
        for (std::size_t t = 0; t < own.size(); ++t) {
          for (std::size_t i = 0; i < own[t]->data.size(); ++i) {
            own[t]->data[i] -= core_scale * grads[t]->data[i];
          }
        }
        for (std::size_t j = 0; j < n_clients; ++j) {
          st.dr_vector[j] -= apple_.eta2 * dp[j];
        }
      }
    }

    RoundMessage msg;
    msg.client_id = client.id;
    msg.sample_count = static_cast<double>(y.size());
    msg.train_loss = steps > 0 ? loss_sum / static_cast<double>(steps) : 0.0;
    msg.payload = ModelUpload{std::move(own_core)};
    return msg;
  }

  void aggregate(const std::vector<RoundMessage>& uploads, const RoundContext&,
                 std::vector<ClientState>&) override {
    for (const RoundMessage& msg : uploads) {
      cores_[static_cast<std::size_t>(msg.client_id)] =
          std::get<ModelUpload>(msg.payload).model;
    }
  }

  ModelParams personalized_model(const ClientState& client, SplitRng) const override {
    const AppleState& st = std::get<AppleState>(client.state);
    std::vector<const ModelParams*> view(cores_.size());
    for (std::size_t j = 0; j < cores_.size(); ++j) view[j] = &cores_[j];
    return combine_models(view, st.dr_vector);
  }

  std::vector<int> predict_global(const ClientState&, const Tensor& batch) const override {
    std::vector<WeightedModel> entries;
    entries.reserve(cores_.size());
    for (std::size_t j = 0; j < cores_.size(); ++j) {
      entries.push_back({static_cast<int>(j), &cores_[j], counts_[j]});
    }
    return predict(weighted_average(std::move(entries)), batch);
  }

 private:
  GlobalConfig config_;
  AppleConfig apple_;
  std::vector<ModelParams> cores_;
  std::vector<double> counts_;
};

}  // namespace

std::unique_ptr<Strategy> make_apple_strategy(const GlobalConfig& config,
                                              const ModelParams&) {
  return std::make_unique<AppleStrategy>(config, std::get<AppleConfig>(config.strategy));
}

}  // namespace pfl
