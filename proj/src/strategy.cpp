#include "pfl/strategy.hpp"

#include <algorithm>
#include <numeric>

#include "pfl/errors.hpp"

namespace pfl {

std::vector<int> Strategy::predict_personalized(const ClientState& client,
                                                const Tensor& batch,
                                                SplitRng rng) const {
  return predict(personalized_model(client, std::move(rng)), batch);
}

std::vector<std::vector<std::size_t>> batch_plan(std::size_t n, int batch_size,
                                                 SplitRng& rng) {
  if (n == 0) throw ArgumentError("batch_plan: empty data");
  if (batch_size < 1) throw ArgumentError("batch_plan: batch_size must be >= 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  const std::size_t b = static_cast<std::size_t>(batch_size);
  std::vector<std::vector<std::size_t>> batches;
  batches.reserve((n + b - 1) / b);
  for (std::size_t start = 0; start < n; start += b) {
    const std::size_t end = std::min(start + b, n);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

std::pair<Tensor, std::vector<int>> gather_batch(const Tensor& x,
                                                 std::span<const int> y,
                                                 std::span<const std::size_t> indices) {
  const std::size_t dim = x.cols();
  Tensor bx = Tensor::zeros({indices.size(), dim});
  std::vector<int> by(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::copy_n(x.data.data() + indices[i] * dim, dim, bx.data.data() + i * dim);
    by[i] = y[indices[i]];
  }
  return {std::move(bx), std::move(by)};
}

double local_sgd(ModelParams& params, const Tensor& x, std::span<const int> y,
                 int epochs, int batch_size, double lr, SplitRng& rng,
                 ParamScope scope, const FeatureHook& hook) {
  double loss_sum = 0.0;
  std::size_t steps = 0;
  for (int e = 0; e < epochs; ++e) {
    for (const auto& indices : batch_plan(y.size(), batch_size, rng)) {
      auto [bx, by] = gather_batch(x, y, indices);
      LossGrad lg = loss_and_grad(params, bx, by, hook);
      if (lr > 0.0) sgd_step_inplace(params, lg.grad, lr, scope);
      loss_sum += lg.loss;
      ++steps;
    }
  }
  return steps > 0 ? loss_sum / static_cast<double>(steps) : 0.0;
}

PrototypeMap extract_prototypes(const ModelParams& params, const Tensor& x,
                                std::span<const int> labels) {
  ForwardResult fwd = forward(params, x);
  const std::size_t dim = fwd.features.cols();
  PrototypeMap protos;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ClassVector& cv = protos[labels[i]];
    if (cv.value.empty()) cv.value.assign(dim, 0.0);
    const double* f = fwd.features.data.data() + i * dim;
    for (std::size_t d = 0; d < dim; ++d) cv.value[d] += f[d];
    ++cv.count;
  }
  for (auto& [label, cv] : protos) {
    for (double& v : cv.value) v /= static_cast<double>(cv.count);
  }
  return protos;
}

namespace {

template <typename Score>
std::vector<int> predict_by_score(const Tensor& features, const PrototypeMap& prototypes,
                                  const Score& score) {
  if (prototypes.empty()) {
    throw ArgumentError("nearest-prototype prediction: no prototypes");
  }
  const std::size_t dim = features.cols();
  std::vector<int> out(features.rows());
  for (std::size_t r = 0; r < features.rows(); ++r) {
    const double* f = features.data.data() + r * dim;
    int best_label = prototypes.begin()->first;
    double best = score(f, prototypes.begin()->second.value);
    for (auto it = std::next(prototypes.begin()); it != prototypes.end(); ++it) {
      const double s = score(f, it->second.value);
      if (s > best) {
        best = s;
        best_label = it->first;
      }
    }
    out[r] = best_label;
  }
  return out;
}

}  // namespace

std::vector<int> predict_nearest_prototype_l2(const Tensor& features,
                                              const PrototypeMap& prototypes) {
  return predict_by_score(features, prototypes,
                          [](const double* f, const std::vector<double>& p) {
                            double s = 0.0;
                            for (std::size_t d = 0; d < p.size(); ++d) {
                              const double diff = f[d] - p[d];
                              s -= diff * diff;
                            }
                            return s;
                          });
}

std::vector<int> predict_nearest_prototype_dot(const Tensor& features,
                                               const PrototypeMap& prototypes) {
  return predict_by_score(features, prototypes,
                          [](const double* f, const std::vector<double>& p) {
                            double s = 0.0;
                            for (std::size_t d = 0; d < p.size(); ++d) s += f[d] * p[d];
                            return s;
                          });
}

void merge_prototypes(PrototypeMap& global, PrototypeMap update) {
  for (auto& [label, cv] : update) global[label] = std::move(cv);
}

PrototypeMap aggregate_prototypes(const std::vector<const PrototypeMap*>& uploads) {
  std::map<int, long long> totals;
  std::map<int, std::vector<double>> anchors;  // first contributor per class
  for (const PrototypeMap* upload : uploads) {
    for (const auto& [label, cv] : *upload) {
      if (cv.count <= 0) throw ArgumentError("aggregate_prototypes: nonpositive count");
      totals[label] += cv.count;
      anchors.emplace(label, cv.value);
    }
  }

  // Count-weighted mean, folded as anchor + sum_i w_i * (c_i - anchor) so
  // agreeing contributors (and single contributors) aggregate exactly.
  PrototypeMap out;
  for (const auto& [label, anchor] : anchors) {
    std::vector<double> acc(anchor.size(), 0.0);
    for (const PrototypeMap* upload : uploads) {
      const auto it = upload->find(label);
      if (it == upload->end()) continue;
      if (it->second.value.size() != anchor.size()) {
        throw DimensionError("aggregate_prototypes: prototype dimension mismatch");
      }
      const double w =
          static_cast<double>(it->second.count) / static_cast<double>(totals[label]);
      for (std::size_t d = 0; d < acc.size(); ++d) {
        acc[d] += w * (it->second.value[d] - anchor[d]);
      }
    }
    ClassVector cv;
    cv.count = totals[label];
    cv.value.resize(anchor.size());
    for (std::size_t d = 0; d < anchor.size(); ++d) cv.value[d] = anchor[d] + acc[d];
    out[label] = std::move(cv);
  }
  return out;
}

}  // namespace pfl
