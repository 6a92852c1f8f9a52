#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace pfl {

// Per-strategy hyperparameters. Rate fields defaulting to the shared local
// learning rate are resolved at config-parse time.

struct AppleConfig {
  double eta1 = 0.0;        // core-model rate (defaults to local_lr)
  double eta2 = 0.0;        // DR-vector rate
  double mu = 0.0;          // proximal coefficient
  double loss_decay = 0.3;  // L: lambda(r) decays over the first L*R rounds
};

struct AlaConfig {
  double ala_lr = 0.0;         // blend-weight rate (defaults to local_lr)
  double data_percent = 80.0;  // s%: share of local data used to train the blend
  int layer_range = 1;         // p: number of top layers with trainable blend weights
};

struct BabuConfig {
  int fine_tune_epochs = 5;  // head-only fine-tune budget at evaluation time
};

struct GcConfig {
  double lambda = 0.1;  // correction strength; step is lambda * local_lr
};

struct PacConfig {
  double lambda = 1.0;  // feature-alignment weight
  double eta_f = 0.0;   // extractor rate (defaults to local_lr)
  double eta_g = 0.0;   // classifier rate (defaults to local_lr)
};

struct PclConfig {
  double temperature = 1.0;
};

struct ProtoConfig {
  double lambda = 1.0;  // prototype-regularization weight
};

using StrategyConfig = std::variant<AppleConfig, AlaConfig, BabuConfig, GcConfig,
                                    PacConfig, PclConfig, ProtoConfig>;

// Canonical strategy names, in StrategyConfig variant order.
const std::vector<std::string>& strategy_names();
std::string strategy_name(const StrategyConfig& config);

// Server-side experiment parameters driving the round loop.
struct GlobalConfig {
  int rounds = 1;
  double client_fraction = 1.0;
  int local_epochs = 1;
  int batch_size = 32;
  double local_lr = 0.05;
  std::uint64_t seed = 0;
  int num_clients = 0;
  int hidden_dim = 128;
  double holdout_fraction = 0.2;
  int eval_stride = 1;
  int threads = 1;  // 0 = hardware concurrency
  StrategyConfig strategy = ProtoConfig{};

  void validate() const;
};

}  // namespace pfl
