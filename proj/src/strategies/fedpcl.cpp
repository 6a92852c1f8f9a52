#include "pfl/strategies/fedpcl.hpp"

#include <cmath>

#include "pfl/errors.hpp"

namespace pfl {

namespace {

// InfoNCE against one prototype map. Returns false when the map lacks the
// label. d_embedding, when given, accumulates dL/dz.
bool info_nce(const std::vector<double>& z, int label, const PrototypeMap& protos,
              double tau, double* loss_out, std::vector<double>* d_embedding) {
  const auto anchor = protos.find(label);
  if (anchor == protos.end()) return false;

  double max_score = -1e300;
  for (const auto& [a, cv] : protos) {
    max_score = std::max(max_score, dot(z, cv.value) / tau);
  }
  double denom = 0.0;
  for (const auto& [a, cv] : protos) {
    denom += std::exp(dot(z, cv.value) / tau - max_score);
  }
  const double anchor_score = dot(z, anchor->second.value) / tau;
  *loss_out = -(anchor_score - max_score - std::log(denom));

  if (d_embedding != nullptr) {
    // dL/dz = (1/tau) * (sum_a p_a C_a - C_y).
    for (const auto& [a, cv] : protos) {
      const double p = std::exp(dot(z, cv.value) / tau - max_score) / denom;
      for (std::size_t d = 0; d < z.size(); ++d) {
        (*d_embedding)[d] += p * cv.value[d] / tau;
      }
    }
    for (std::size_t d = 0; d < z.size(); ++d) {
      (*d_embedding)[d] -= anchor->second.value[d] / tau;
    }
  }
  return true;
}

std::vector<double> project_row(const LayerParams& projection, const Tensor& h,
                                std::size_t row) {
  const std::size_t in_dim = h.cols();
  const std::size_t out_dim = projection.weight.shape[0];
  std::vector<double> z(out_dim, 0.0);
  const double* hrow = h.data.data() + row * in_dim;
  for (std::size_t o = 0; o < out_dim; ++o) {
    const double* w = projection.weight.data.data() + o * in_dim;
    double acc = projection.bias.data[o];
    for (std::size_t d = 0; d < in_dim; ++d) acc += w[d] * hrow[d];
    z[o] = acc;
  }
  return z;
}

}  // namespace

PclLosses fedpcl_losses(const std::vector<double>& embedding, int label,
                        const PrototypeMap& global_prototypes,
                        const std::vector<const PrototypeMap*>& local_sets,
                        double temperature) {
  if (temperature <= 0.0) throw ArgumentError("fedpcl_losses: temperature must be positive");
  PclLosses out;
  double lg = 0.0;
  if (!info_nce(embedding, label, global_prototypes, temperature, &lg, nullptr)) {
    return out;
  }
  out.global_loss = lg;
  double lp_sum = 0.0;
  int lp_sets = 0;
  for (const PrototypeMap* set : local_sets) {
    double lp = 0.0;
    if (info_nce(embedding, label, *set, temperature, &lp, nullptr)) {
      lp_sum += lp;
      ++lp_sets;
    }
  }
  out.local_loss = lp_sets > 0 ? lp_sum / static_cast<double>(lp_sets) : 0.0;
  out.usable = true;
  return out;
}

PclBatchGrad fedpcl_projection_gradient(const LayerParams& projection,
                                        const Tensor& backbone_features,
                                        std::span<const int> labels,
                                        const PrototypeMap& global_prototypes,
                                        const std::vector<const PrototypeMap*>& local_sets,
                                        double temperature) {
  if (temperature <= 0.0) {
    throw ArgumentError("fedpcl_projection_gradient: temperature must be positive");
  }
  const std::size_t in_dim = backbone_features.cols();
  const std::size_t out_dim = projection.weight.shape[0];
  PclBatchGrad out;
  out.grad = LayerParams{Tensor::zeros(projection.weight.shape),
                         Tensor::zeros(projection.bias.shape)};

  double loss_sum = 0.0;
  std::vector<std::vector<double>> dz_rows(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::vector<double> z = project_row(projection, backbone_features, i);
    std::vector<double> dz(out_dim, 0.0);
    double lg = 0.0;
    if (!info_nce(z, labels[i], global_prototypes, temperature, &lg, &dz)) continue;
    double lp_sum = 0.0;
    std::vector<double> dz_local(out_dim, 0.0);
    int lp_sets = 0;
    for (const PrototypeMap* set : local_sets) {
      double lp = 0.0;
      std::vector<double> dzp(out_dim, 0.0);
      if (info_nce(z, labels[i], *set, temperature, &lp, &dzp)) {
        lp_sum += lp;
        for (std::size_t d = 0; d < out_dim; ++d) dz_local[d] += dzp[d];
        ++lp_sets;
      }
    }
    if (lp_sets > 0) {
      const double inv = 1.0 / static_cast<double>(lp_sets);
      lp_sum *= inv;
      for (std::size_t d = 0; d < out_dim; ++d) dz[d] += dz_local[d] * inv;
    }
    loss_sum += lg + lp_sum;
    dz_rows[i] = std::move(dz);
    ++out.usable;
  }
  if (out.usable == 0) return out;

  const double inv_usable = 1.0 / static_cast<double>(out.usable);
  out.loss = loss_sum * inv_usable;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (dz_rows[i].empty()) continue;
    const double* hrow = backbone_features.data.data() + i * in_dim;
    for (std::size_t o = 0; o < out_dim; ++o) {
      const double g = dz_rows[i][o] * inv_usable;
      out.grad.bias.data[o] += g;
      double* grow = out.grad.weight.data.data() + o * in_dim;
      for (std::size_t d = 0; d < in_dim; ++d) grow[d] += g * hrow[d];
    }
  }
  return out;
}

namespace {

constexpr std::uint64_t kProjectionInitStream = 1ULL << 58;

class PclStrategy final : public Strategy {
 public:
  PclStrategy(const GlobalConfig& config, PclConfig pcl) : config_(config), pcl_(pcl) {}

  std::string name() const override { return "fedpcl"; }

  void setup(std::vector<ClientState>& clients, const ModelParams& init) override {
    backbone_ = init.body;  // frozen backbone, shared by every client
    activation_ = init.activation;
    const std::size_t dim = init.feature_dim();

    SplitRng proj_rng = SplitRng(config_.seed).stream(kProjectionInitStream);
    LayerParams projection{Tensor::zeros({dim, dim}), Tensor::zeros({dim})};
    const double a = std::sqrt(6.0 / static_cast<double>(dim + dim));
    for (double& w : projection.weight.data) w = proj_rng.next_uniform(-a, a);

    all_local_.assign(clients.size(), PrototypeMap{});
    global_.clear();
    for (ClientState& client : clients) {
      client.state = PclState{projection, PrototypeMap{}};
      client.personalized = init;
    }
  }

  RoundMessage local_update(ClientState& client, const RoundContext&,
                            SplitRng rng) const override {
    PclState& st = std::get<PclState>(client.state);
    const Tensor& x = client.data.train_x;
    const std::vector<int>& y = client.data.train_y;
    const std::size_t n = y.size();

    // The backbone is frozen: its features are constant all round.
    const Tensor h = body_features(backbone_, activation_, x);
    const std::size_t dim = h.cols();

    std::vector<const PrototypeMap*> local_sets;
    for (const PrototypeMap& set : all_local_) {
      if (!set.empty()) local_sets.push_back(&set);
    }

    double loss_sum = 0.0;
    std::size_t steps = 0;
    long long skipped = 0;
    const bool bootstrap = global_.empty() && local_sets.empty();
    if (!bootstrap) {
      for (int epoch = 0; epoch < config_.local_epochs; ++epoch) {
        for (const auto& indices : batch_plan(n, config_.batch_size, rng)) {
          auto [bh, by] = gather_batch(h, y, indices);
          const PclBatchGrad bg = fedpcl_projection_gradient(
              st.projection, bh, by, global_, local_sets, pcl_.temperature);
          skipped += static_cast<long long>(indices.size() - bg.usable);
          if (bg.usable == 0) continue;
          for (std::size_t i = 0; i < bg.grad.weight.data.size(); ++i) {
            st.projection.weight.data[i] -= config_.local_lr * bg.grad.weight.data[i];
          }
          for (std::size_t i = 0; i < bg.grad.bias.data.size(); ++i) {
            st.projection.bias.data[i] -= config_.local_lr * bg.grad.bias.data[i];
          }
          loss_sum += bg.loss;
          ++steps;
        }
      }
    }
    (void)dim;

    // Local prototypes: per-class embedding means under the updated projection.
    st.local_prototypes = compute_prototypes(st.projection, h, y);

    RoundMessage msg;
    msg.client_id = client.id;
    msg.sample_count = static_cast<double>(n);
    msg.train_loss = steps > 0 ? loss_sum / static_cast<double>(steps) : 0.0;
    msg.skipped_samples = skipped;
    msg.payload = PrototypeUpload{st.local_prototypes};
    return msg;
  }

  void aggregate(const std::vector<RoundMessage>& uploads, const RoundContext&,
                 std::vector<ClientState>&) override {
    std::vector<const PrototypeMap*> proto_uploads;
    proto_uploads.reserve(uploads.size());
    for (const RoundMessage& msg : uploads) {
      proto_uploads.push_back(&std::get<PrototypeUpload>(msg.payload).prototypes);
    }
    // Classes held by no sampled client this round carry over unchanged.
    merge_prototypes(global_, aggregate_prototypes(proto_uploads));
    for (const RoundMessage& msg : uploads) {
      all_local_[static_cast<std::size_t>(msg.client_id)] =
          std::get<PrototypeUpload>(msg.payload).prototypes;
    }
  }

  // The embedding model: frozen backbone with the projection as final layer.
  ModelParams personalized_model(const ClientState& client, SplitRng) const override {
    const PclState& st = std::get<PclState>(client.state);
    ModelParams model;
    model.body = backbone_;
    model.head = st.projection;
    model.activation = activation_;
    return model;
  }

  std::vector<int> predict_personalized(const ClientState& client, const Tensor& batch,
                                        SplitRng) const override {
    const PclState& st = std::get<PclState>(client.state);
    // Local prototypes where present, global prototypes for missing classes.
    PrototypeMap combined = global_;
    for (const auto& [label, cv] : st.local_prototypes) combined[label] = cv;
    return predict_nearest_prototype_dot(embed(st.projection, batch), combined);
  }

  std::vector<int> predict_global(const ClientState& owner,
                                  const Tensor& batch) const override {
    const PclState& st = std::get<PclState>(owner.state);
    return predict_nearest_prototype_dot(embed(st.projection, batch), global_);
  }

 private:
  Tensor embed(const LayerParams& projection, const Tensor& batch) const {
    const Tensor h = body_features(backbone_, activation_, batch);
    const std::size_t dim = h.cols();
    Tensor z = Tensor::zeros({h.rows(), dim});
    for (std::size_t r = 0; r < h.rows(); ++r) {
      const std::vector<double> zr = project_row(projection, h, r);
      std::copy(zr.begin(), zr.end(), z.data.data() + r * dim);
    }
    return z;
  }

  PrototypeMap compute_prototypes(const LayerParams& projection, const Tensor& h,
                                  std::span<const int> labels) const {
    const std::size_t dim = h.cols();
    PrototypeMap protos;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const std::vector<double> z = project_row(projection, h, i);
      ClassVector& cv = protos[labels[i]];
      if (cv.value.empty()) cv.value.assign(dim, 0.0);
      for (std::size_t d = 0; d < dim; ++d) cv.value[d] += z[d];
      ++cv.count;
    }
    for (auto& [label, cv] : protos) {
      for (double& v : cv.value) v /= static_cast<double>(cv.count);
    }
    return protos;
  }

  GlobalConfig config_;
  PclConfig pcl_;
  std::vector<LayerParams> backbone_;
  Activation activation_ = Activation::relu;
  PrototypeMap global_;
  std::vector<PrototypeMap> all_local_;
};

}  // namespace

std::unique_ptr<Strategy> make_fedpcl_strategy(const GlobalConfig& config,
                                               const ModelParams&) {
  return std::make_unique<PclStrategy>(config, std::get<PclConfig>(config.strategy));
}

}  // namespace pfl
