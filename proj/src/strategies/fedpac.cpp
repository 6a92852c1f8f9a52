#include "pfl/strategies/fedpac.hpp"

#include <algorithm>
#include <cmath>

#include "pfl/errors.hpp"
#include "pfl/geometry.hpp"
#include "pfl/runtime.hpp"

namespace pfl {

namespace {

void check_alpha_inputs(const std::vector<const LayerParams*>& classifiers,
                        const FeatureStats& stats) {
  if (classifiers.empty()) throw ArgumentError("fedpac alpha: no classifiers");
  if (stats.empty()) throw ArgumentError("fedpac alpha: no feature statistics");
  for (const LayerParams* c : classifiers) {
    if (!c->weight.same_shape(classifiers.front()->weight)) {
      throw DimensionError("fedpac alpha: classifier shape mismatch");
    }
  }
}

double stats_total(const FeatureStats& stats) {
  double total = 0.0;
  for (const auto& [label, stat] : stats) total += static_cast<double>(stat.count);
  return total;
}

}  // namespace

double fedpac_alpha_objective(const std::vector<const LayerParams*>& classifiers,
                              const FeatureStats& stats,
                              const std::vector<double>& alpha) {
  check_alpha_inputs(classifiers, stats);
  if (alpha.size() != classifiers.size()) {
    throw DimensionError("fedpac alpha: weight count mismatch");
  }
  const std::size_t classes = classifiers.front()->weight.rows();
  const std::size_t dim = classifiers.front()->weight.cols();
  const double total = stats_total(stats);

  // Mixed classifier.
  Tensor w_mix = Tensor::zeros({classes, dim});
  std::vector<double> b_mix(classes, 0.0);
  for (std::size_t j = 0; j < classifiers.size(); ++j) {
    for (std::size_t i = 0; i < w_mix.data.size(); ++i) {
      w_mix.data[i] += alpha[j] * classifiers[j]->weight.data[i];
    }
    for (std::size_t c = 0; c < classes; ++c) {
      b_mix[c] += alpha[j] * classifiers[j]->bias.data[c];
    }
  }

  double risk = 0.0;
  for (const auto& [label, stat] : stats) {
    if (stat.mean.size() != dim) throw DimensionError("fedpac alpha: stat dim mismatch");
    const double wk = static_cast<double>(stat.count) / total;
    double sq = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      double logit = b_mix[c];
      const double* row = w_mix.data.data() + c * dim;
      for (std::size_t d = 0; d < dim; ++d) logit += row[d] * stat.mean[d];
      const double target = (static_cast<int>(c) == label) ? 1.0 : 0.0;
      const double err = logit - target;
      sq += err * err;
      for (std::size_t d = 0; d < dim; ++d) sq += row[d] * row[d] * stat.variance[d];
    }
    risk += wk * sq;
  }
  return risk;
}

AlphaSolution fedpac_solve_alpha(const std::vector<const LayerParams*>& classifiers,
                                 const FeatureStats& stats, int max_iters, double step) {
  check_alpha_inputs(classifiers, stats);
  const std::size_t m = classifiers.size();
  const std::size_t classes = classifiers.front()->weight.rows();
  const std::size_t dim = classifiers.front()->weight.cols();
  const double total = stats_total(stats);

  if (m == 1) {
    std::vector<double> one{1.0};
    return {one, fedpac_alpha_objective(classifiers, stats, one), true};
  }

  // Responses r_{j,k} = W_j mu_k + b_j, computed once.
  std::vector<std::vector<std::vector<double>>> responses(m);
  std::vector<int> labels;
  std::vector<double> weights;
  for (const auto& [label, stat] : stats) {
    labels.push_back(label);
    weights.push_back(static_cast<double>(stat.count) / total);
  }
  for (std::size_t j = 0; j < m; ++j) {
    responses[j].resize(labels.size());
    std::size_t k = 0;
    for (const auto& [label, stat] : stats) {
      std::vector<double>& r = responses[j][k];
      r.assign(classes, 0.0);
      for (std::size_t c = 0; c < classes; ++c) {
        double logit = classifiers[j]->bias.data[c];
        const double* row = classifiers[j]->weight.data.data() + c * dim;
        for (std::size_t d = 0; d < dim; ++d) logit += row[d] * stat.mean[d];
        r[c] = logit;
      }
      ++k;
    }
  }

  std::vector<double> alpha(m, 1.0 / static_cast<double>(m));
  AlphaSolution best;
  best.alpha = alpha;
  best.objective = fedpac_alpha_objective(classifiers, stats, alpha);

  double prev_obj = best.objective;
  bool converged = false;
  for (int iter = 0; iter < max_iters; ++iter) {
    // Mixed quantities at the current alpha.
    Tensor w_mix = Tensor::zeros({classes, dim});
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t i = 0; i < w_mix.data.size(); ++i) {
        w_mix.data[i] += alpha[j] * classifiers[j]->weight.data[i];
      }
    }
    std::vector<std::vector<double>> mixed_resp(labels.size(),
                                                std::vector<double>(classes, 0.0));
    for (std::size_t k = 0; k < labels.size(); ++k) {
      for (std::size_t j = 0; j < m; ++j) {
        for (std::size_t c = 0; c < classes; ++c) {
          mixed_resp[k][c] += alpha[j] * responses[j][k][c];
        }
      }
    }

    // dR/da_j = sum_k w_k * ( 2 <l_k - e_k, r_{j,k}>
    //                        + 2 sum_{c,d} W(a)_{c,d} W_j_{c,d} V_{k,d} ).
    std::vector<double> grad(m, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
      std::size_t k = 0;
      for (const auto& [label, stat] : stats) {
        double g = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
          const double target = (static_cast<int>(c) == label) ? 1.0 : 0.0;
          g += 2.0 * (mixed_resp[k][c] - target) * responses[j][k][c];
        }
        double var_term = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
          const double* mrow = w_mix.data.data() + c * dim;
          const double* jrow = classifiers[j]->weight.data.data() + c * dim;
          for (std::size_t d = 0; d < dim; ++d) {
            var_term += mrow[d] * jrow[d] * stat.variance[d];
          }
        }
        g += 2.0 * var_term;
        grad[j] += weights[k] * g;
        ++k;
      }
    }

    std::vector<double> next(m);
    for (std::size_t j = 0; j < m; ++j) next[j] = alpha[j] - step * grad[j];
    alpha = simplex_project(next);

    const double obj = fedpac_alpha_objective(classifiers, stats, alpha);
    if (obj < best.objective) {
      best.objective = obj;
      best.alpha = alpha;
    }
    if (std::abs(prev_obj - obj) < 1e-12 * (1.0 + std::abs(prev_obj))) {
      converged = true;
      break;
    }
    prev_obj = obj;
  }
  best.converged = converged;
  return best;
}

namespace {

FeatureStats extract_feature_stats(const ModelParams& params, const Tensor& x,
                                   std::span<const int> labels) {
  const Tensor features = body_features(params.body, params.activation, x);
  const std::size_t dim = features.cols();
  FeatureStats stats;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ClassStat& s = stats[labels[i]];
    if (s.mean.empty()) {
      s.mean.assign(dim, 0.0);
      s.variance.assign(dim, 0.0);
    }
    const double* f = features.data.data() + i * dim;
    for (std::size_t d = 0; d < dim; ++d) s.mean[d] += f[d];
    ++s.count;
  }
  for (auto& [label, s] : stats) {
    for (double& v : s.mean) v /= static_cast<double>(s.count);
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ClassStat& s = stats[labels[i]];
    const double* f = features.data.data() + i * dim;
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = f[d] - s.mean[d];
      s.variance[d] += diff * diff;
    }
  }
  for (auto& [label, s] : stats) {
    for (double& v : s.variance) v /= static_cast<double>(s.count);
  }
  return stats;
}

class PacStrategy final : public Strategy {
 public:
  PacStrategy(const GlobalConfig& config, PacConfig pac) : config_(config), pac_(pac) {}

  std::string name() const override { return "fedpac"; }

  void setup(std::vector<ClientState>& clients, const ModelParams& init) override {
    extractor_ = init.body;
    activation_ = init.activation;
    counts_.resize(clients.size());
    for (std::size_t i = 0; i < clients.size(); ++i) {
      counts_[i] = static_cast<double>(clients[i].data.train_size());
      clients[i].state = PacState{init.head};
      clients[i].personalized = init;
    }
    refresh_mean_head(clients);
  }

  RoundMessage local_update(ClientState& client, const RoundContext&,
                            SplitRng rng) const override {
    PacState& st = std::get<PacState>(client.state);
    ModelParams model;
    model.body = extractor_;  // adopt the global extractor
    model.head = st.classifier;
    model.activation = activation_;

    const Tensor& x = client.data.train_x;
    const std::vector<int>& y = client.data.train_y;

    // Pre-training feature statistics under the adopted extractor.
    FeatureStats stats = extract_feature_stats(model, x, y);

    // Alignment of batch class means toward the global centroids.
    FeatureHook hook;
    if (!centroids_.empty() && pac_.lambda > 0.0) {
      const PrototypeMap* centroids = &centroids_;
      const double lambda = pac_.lambda;
      hook = [centroids, lambda](const Tensor& features, std::span<const int> labels,
                                 Tensor& dfeatures) {
        const std::size_t dim = features.cols();
        const std::size_t b = features.rows();
        // Batch per-class means.
        std::map<int, std::pair<std::vector<double>, int>> batch_means;
        for (std::size_t i = 0; i < b; ++i) {
          auto it = centroids->find(labels[i]);
          if (it == centroids->end()) continue;
          auto& [sum, cnt] = batch_means[labels[i]];
          if (sum.empty()) sum.assign(dim, 0.0);
          const double* f = features.data.data() + i * dim;
          for (std::size_t d = 0; d < dim; ++d) sum[d] += f[d];
          ++cnt;
        }
        double loss = 0.0;
        for (auto& [label, acc] : batch_means) {
          auto& [sum, cnt] = acc;
          for (double& v : sum) v /= static_cast<double>(cnt);
          const std::vector<double>& target = centroids->at(label).value;
          loss += lambda * (static_cast<double>(cnt) / static_cast<double>(b)) *
                  squared_distance(sum, target);
        }
        for (std::size_t i = 0; i < b; ++i) {
          const auto it = batch_means.find(labels[i]);
          if (it == batch_means.end()) continue;
          const std::vector<double>& mean = it->second.first;
          const std::vector<double>& target = centroids->at(labels[i]).value;
          double* df = dfeatures.data.data() + i * dim;
          const double scale = 2.0 * lambda / static_cast<double>(b);
          for (std::size_t d = 0; d < dim; ++d) {
            df[d] += scale * (mean[d] - target[d]);
          }
        }
        return loss;
      };
    }

    // Alternate: classifier for 1 epoch, then extractor for E epochs.
    double loss_sum = local_sgd(model, x, y, 1, config_.batch_size, pac_.eta_g, rng,
                                ParamScope::head_only);
    loss_sum += local_sgd(model, x, y, config_.local_epochs, config_.batch_size,
                          pac_.eta_f, rng, ParamScope::body_only, hook) *
                static_cast<double>(config_.local_epochs);
    const double mean_loss = loss_sum / (1.0 + static_cast<double>(config_.local_epochs));

    st.classifier = model.head;
    client.personalized = model;

    RoundMessage msg;
    msg.client_id = client.id;
    msg.sample_count = static_cast<double>(y.size());
    msg.train_loss = mean_loss;
    PacUpload upload;
    upload.extractor = model.body;
    upload.classifier = model.head;
    upload.centroids = extract_prototypes(model, x, y);
    upload.stats = std::move(stats);
    msg.payload = std::move(upload);
    return msg;
  }

  void aggregate(const std::vector<RoundMessage>& uploads, const RoundContext&,
                 std::vector<ClientState>& clients) override {
    std::vector<WeightedLayers> entries;
    entries.reserve(uploads.size());
    for (const RoundMessage& msg : uploads) {
      entries.push_back(
          {msg.client_id, &std::get<PacUpload>(msg.payload).extractor, msg.sample_count});
    }
    extractor_ = weighted_average_layers(std::move(entries));

    // Global centroids: count-weighted mean; classes absent this round carry over.
    std::vector<const PrototypeMap*> centroid_uploads;
    centroid_uploads.reserve(uploads.size());
    for (const RoundMessage& msg : uploads) {
      centroid_uploads.push_back(&std::get<PacUpload>(msg.payload).centroids);
    }
    merge_prototypes(centroids_, aggregate_prototypes(centroid_uploads));

    // Personalized classifier mixtures over this round's participants.
    std::vector<const LayerParams*> classifiers;
    classifiers.reserve(uploads.size());
    for (const RoundMessage& msg : uploads) {
      classifiers.push_back(&std::get<PacUpload>(msg.payload).classifier);
    }
    for (const RoundMessage& msg : uploads) {
      const PacUpload& upload = std::get<PacUpload>(msg.payload);
      const AlphaSolution solution = fedpac_solve_alpha(classifiers, upload.stats);
      LayerParams mixed{Tensor::zeros(upload.classifier.weight.shape),
                        Tensor::zeros(upload.classifier.bias.shape)};
      for (std::size_t j = 0; j < classifiers.size(); ++j) {
        for (std::size_t i = 0; i < mixed.weight.data.size(); ++i) {
          mixed.weight.data[i] += solution.alpha[j] * classifiers[j]->weight.data[i];
        }
        for (std::size_t i = 0; i < mixed.bias.data.size(); ++i) {
          mixed.bias.data[i] += solution.alpha[j] * classifiers[j]->bias.data[i];
        }
      }
      ClientState& client = clients[static_cast<std::size_t>(msg.client_id)];
      PacState& st = std::get<PacState>(client.state);
      st.classifier = std::move(mixed);
      client.personalized.body = extractor_;
      client.personalized.head = st.classifier;
    }
    refresh_mean_head(clients);
  }

  ModelParams personalized_model(const ClientState& client, SplitRng) const override {
    const PacState& st = std::get<PacState>(client.state);
    ModelParams model;
    model.body = extractor_;
    model.head = st.classifier;
    model.activation = activation_;
    return model;
  }

  // Global classifier: data-weighted mean of the per-client classifiers on
  // top of the aggregated extractor.
  std::vector<int> predict_global(const ClientState&, const Tensor& batch) const override {
    return predict(mean_classifier_model(), batch);
  }

  const PrototypeMap& global_centroids() const { return centroids_; }

 private:
  ModelParams mean_classifier_model() const {
    ModelParams model;
    model.body = extractor_;
    model.activation = activation_;
    model.head = mean_head_;
    return model;
  }

  void refresh_mean_head(const std::vector<ClientState>& clients) {
    std::vector<std::vector<LayerParams>> heads;
    heads.reserve(clients.size());
    for (const ClientState& client : clients) {
      heads.push_back({std::get<PacState>(client.state).classifier});
    }
    std::vector<WeightedLayers> entries;
    for (std::size_t i = 0; i < clients.size(); ++i) {
      entries.push_back({clients[i].id, &heads[i], counts_[i]});
    }
    mean_head_ = weighted_average_layers(std::move(entries)).front();
  }

  GlobalConfig config_;
  PacConfig pac_;
  std::vector<LayerParams> extractor_;
  PrototypeMap centroids_;
  std::vector<double> counts_;
  LayerParams mean_head_;
  Activation activation_ = Activation::relu;
};

}  // namespace

std::unique_ptr<Strategy> make_fedpac_strategy(const GlobalConfig& config,
                                               const ModelParams&) {
  return std::make_unique<PacStrategy>(config, std::get<PacConfig>(config.strategy));
}

}  // namespace pfl
