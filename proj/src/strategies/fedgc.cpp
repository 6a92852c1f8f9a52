#include "pfl/strategies/fedgc.hpp"

#include <cmath>

#include "pfl/errors.hpp"
#include "pfl/runtime.hpp"

namespace pfl {

namespace {

constexpr double kNormFloor = 1e-12;

void check_matrices(const std::vector<Tensor>& matrices) {
  if (matrices.empty()) throw ArgumentError("fedgc: no class matrices");
  for (const Tensor& m : matrices) {
    if (m.rank() != 2 || !m.same_shape(matrices.front())) {
      throw DimensionError("fedgc: class matrices must share a 2-d shape");
    }
  }
}

}  // namespace

double fedgc_regularizer(const std::vector<Tensor>& class_matrices) {
  check_matrices(class_matrices);
  const std::size_t classes = class_matrices.front().rows();
  const std::size_t dim = class_matrices.front().cols();
  double reg = 0.0;
  for (std::size_t a = 0; a < class_matrices.size(); ++a) {
    for (std::size_t b = a + 1; b < class_matrices.size(); ++b) {
      for (std::size_t j = 0; j < classes; ++j) {
        const double* u = class_matrices[a].data.data() + j * dim;
        const double* v = class_matrices[b].data.data() + j * dim;
        double uu = 0.0, vv = 0.0, uv = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
          uu += u[d] * u[d];
          vv += v[d] * v[d];
          uv += u[d] * v[d];
        }
        if (uu < kNormFloor || vv < kNormFloor) continue;
        const double c = uv / std::sqrt(uu * vv);
        reg += c * c;
      }
    }
  }
  return reg;
}

std::vector<Tensor> fedgc_regularizer_gradient(const std::vector<Tensor>& class_matrices) {
  check_matrices(class_matrices);
  const std::size_t classes = class_matrices.front().rows();
  const std::size_t dim = class_matrices.front().cols();
  std::vector<Tensor> grad;
  grad.reserve(class_matrices.size());
  for (const Tensor& m : class_matrices) grad.push_back(Tensor::zeros(m.shape));

  for (std::size_t a = 0; a < class_matrices.size(); ++a) {
    for (std::size_t b = a + 1; b < class_matrices.size(); ++b) {
      for (std::size_t j = 0; j < classes; ++j) {
        const double* u = class_matrices[a].data.data() + j * dim;
        const double* v = class_matrices[b].data.data() + j * dim;
        double uu = 0.0, vv = 0.0, uv = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
          uu += u[d] * u[d];
          vv += v[d] * v[d];
          uv += u[d] * v[d];
        }
        if (uu < kNormFloor || vv < kNormFloor) continue;
        const double nu = std::sqrt(uu);
        const double nv = std::sqrt(vv);
        const double c = uv / (nu * nv);
        // d(c^2)/du = 2c * (v/(|u||v|) - c*u/|u|^2), symmetric in v.
        double* gu = grad[a].data.data() + j * dim;
        double* gv = grad[b].data.data() + j * dim;
        for (std::size_t d = 0; d < dim; ++d) {
          gu[d] += 2.0 * c * (v[d] / (nu * nv) - c * u[d] / uu);
          gv[d] += 2.0 * c * (u[d] / (nu * nv) - c * v[d] / vv);
        }
      }
    }
  }
  return grad;
}

std::vector<Tensor> fedgc_gradient_correction(const std::vector<Tensor>& class_matrices,
                                              double lambda, double eta) {
  if (lambda < 0.0) throw ArgumentError("fedgc: lambda must be >= 0");
  if (eta <= 0.0) throw ArgumentError("fedgc: eta must be positive");
  if (lambda == 0.0) return class_matrices;
  const std::vector<Tensor> grad = fedgc_regularizer_gradient(class_matrices);
  std::vector<Tensor> out = class_matrices;
  const double step = lambda * eta;
  for (std::size_t k = 0; k < out.size(); ++k) {
    for (std::size_t i = 0; i < out[k].data.size(); ++i) {
      out[k].data[i] -= step * grad[k].data[i];
    }
  }
  return out;
}

namespace {

class GcStrategy final : public Strategy {
 public:
  GcStrategy(const GlobalConfig& config, GcConfig gc) : config_(config), gc_(gc) {}

  std::string name() const override { return "fedgc"; }

  void setup(std::vector<ClientState>& clients, const ModelParams& init) override {
    body_ = init.body;
    activation_ = init.activation;
    counts_.resize(clients.size());
    for (std::size_t i = 0; i < clients.size(); ++i) {
      counts_[i] = static_cast<double>(clients[i].data.train_size());
      clients[i].state = GcState{init.head};
      clients[i].personalized = init;
    }
    refresh_mean_head(clients);
  }

  RoundMessage local_update(ClientState& client, const RoundContext&,
                            SplitRng rng) const override {
    GcState& st = std::get<GcState>(client.state);
    // Initialize from the aggregated body and this client's corrected head.
    ModelParams model;
    model.body = body_;
    model.head = st.head;
    model.activation = activation_;
    const double loss =
        local_sgd(model, client.data.train_x, client.data.train_y, config_.local_epochs,
                  config_.batch_size, config_.local_lr, rng);
    st.head = model.head;
    client.personalized = model;

    RoundMessage msg;
    msg.client_id = client.id;
    msg.sample_count = static_cast<double>(client.data.train_size());
    msg.train_loss = loss;
    msg.payload = GcUpload{std::move(model.body), std::move(model.head)};
    return msg;
  }

  void aggregate(const std::vector<RoundMessage>& uploads, const RoundContext&,
                 std::vector<ClientState>& clients) override {
    std::vector<WeightedLayers> entries;
    entries.reserve(uploads.size());
    for (const RoundMessage& msg : uploads) {
      entries.push_back(
          {msg.client_id, &std::get<GcUpload>(msg.payload).body, msg.sample_count});
    }
    body_ = weighted_average_layers(std::move(entries));

    // Stack the class matrices, apply the correction, redistribute.
    std::vector<Tensor> stacked;
    stacked.reserve(uploads.size());
    for (const RoundMessage& msg : uploads) {
      stacked.push_back(std::get<GcUpload>(msg.payload).head.weight);
    }
    const std::vector<Tensor> corrected =
        fedgc_gradient_correction(stacked, gc_.lambda, config_.local_lr);
    for (std::size_t i = 0; i < uploads.size(); ++i) {
      ClientState& client = clients[static_cast<std::size_t>(uploads[i].client_id)];
      GcState& st = std::get<GcState>(client.state);
      st.head.weight = corrected[i];
      st.head.bias = std::get<GcUpload>(uploads[i].payload).head.bias;
      client.personalized.body = body_;
      client.personalized.head = st.head;
    }
    refresh_mean_head(clients);
  }

  ModelParams personalized_model(const ClientState& client, SplitRng) const override {
    const GcState& st = std::get<GcState>(client.state);
    ModelParams model;
    model.body = body_;
    model.head = st.head;
    model.activation = activation_;
    return model;
  }

  // Global head: data-weighted mean of the per-client corrected heads.
  std::vector<int> predict_global(const ClientState&, const Tensor& batch) const override {
    return predict(mean_head_model_, batch);
  }

 private:
  void refresh_mean_head(const std::vector<ClientState>& clients) {
    std::vector<std::vector<LayerParams>> heads;
    heads.reserve(clients.size());
    for (const ClientState& client : clients) {
      heads.push_back({std::get<GcState>(client.state).head});
    }
    std::vector<WeightedLayers> entries;
    for (std::size_t i = 0; i < clients.size(); ++i) {
      entries.push_back({clients[i].id, &heads[i], counts_[i]});
    }
    mean_head_model_.body = body_;
    mean_head_model_.head = weighted_average_layers(std::move(entries)).front();
    mean_head_model_.activation = activation_;
  }

  GlobalConfig config_;
  GcConfig gc_;
  std::vector<LayerParams> body_;
  std::vector<double> counts_;
  Activation activation_ = Activation::relu;
  ModelParams mean_head_model_;
};

}  // namespace

std::unique_ptr<Strategy> make_fedgc_strategy(const GlobalConfig& config,
                                              const ModelParams&) {
  return std::make_unique<GcStrategy>(config, std::get<GcConfig>(config.strategy));
}

}  // namespace pfl
