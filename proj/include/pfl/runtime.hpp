#pragma once

#include <functional>
#include <span>
#include <vector>

#include "pfl/dataset.hpp"
#include "pfl/metrics.hpp"
#include "pfl/strategy.hpp"

namespace pfl {

// One evaluated round: training metadata plus the global and per-client
// metric reports.
struct RoundRecord {
  int round = 0;
  std::vector<int> selected;
  MetricsReport global;
  std::vector<MetricsReport> per_client;
  double mean_train_loss = 0.0;
};

struct ExperimentResult {
  std::vector<RoundRecord> records;
  std::vector<ClientState> clients;  // final per-client state
};

// Uniform sample without replacement of max(floor(fraction*N), 1) clients,
// returned ascending.
std::vector<int> sample_clients(int num_clients, double client_fraction, SplitRng& rng);

struct WeightedModel {
  int client_id = 0;
  const ModelParams* params = nullptr;
  double sample_count = 0.0;
};

// Convex combination with weights n_i / sum(n_j), folded in ascending
// client-id order and anchored on the first model so identical inputs
// average to themselves exactly.
ModelParams weighted_average(std::vector<WeightedModel> entries);

// Same fold over bare layer stacks (used for body-only aggregation).
struct WeightedLayers {
  int client_id = 0;
  const std::vector<LayerParams>* layers = nullptr;
  double sample_count = 0.0;
};
std::vector<LayerParams> weighted_average_layers(std::vector<WeightedLayers> entries);

// Argmax evaluation of `params` against labeled data.
MetricsReport evaluate_model(const ModelParams& params, const Tensor& x,
                             std::span<const int> labels);

MetricsReport metrics_from_predictions(std::span<const int> truth,
                                       std::span<const int> predictions,
                                       int num_classes);

// Test hook: called once per round with that round's uploads.
using UploadObserver =
    std::function<void(int round, const std::vector<RoundMessage>&)>;

// The federated round loop: broadcast snapshot, parallel local updates,
// barrier, aggregate, evaluate on the configured cadence. Identical
// (config, plan, dataset) runs produce bit-identical records.
ExperimentResult run_experiment(const GlobalConfig& config, const ShardPlan& plan,
                                const Dataset& dataset,
                                const UploadObserver& observer = {});

}  // namespace pfl
