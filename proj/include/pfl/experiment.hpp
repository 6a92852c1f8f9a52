#pragma once

#include <string>

#include "json.hpp"
#include "pfl/errors.hpp"
#include "pfl/runtime.hpp"

namespace pfl {

// Refusal to overwrite an existing non-empty output directory.
class OutputRefusedError : public Error {
 public:
  using Error::Error;
};

struct DatasetSpec {
  enum class Kind { mnist, sign_mnist, synthetic };
  Kind kind = Kind::synthetic;
  // mnist
  std::string images;
  std::string labels;
  // sign_mnist
  std::string csv;
  // synthetic
  int num_classes = 2;
  int per_class = 300;
  int dim = 16;
  double spread = 0.1;
  // optional stratified subset applied after loading (0 = full dataset)
  long long subset = 0;
};

struct PartitionSpec {
  int num_clients = 20;
  int shards_per_client = 2;
  int shard_size = 300;
  double holdout_fraction = 0.2;
};

struct ExperimentConfig {
  DatasetSpec dataset;
  PartitionSpec partition;
  GlobalConfig global;  // num_clients/holdout_fraction mirror the partition spec
  std::string output_dir;

  // Full validation including referenced-file existence.
  void validate() const;
};

// Strict parsing: unknown keys are rejected, defaults are filled, rate
// parameters defaulting to local_lr are resolved.
ExperimentConfig parse_config_file(const std::string& path);
ExperimentConfig parse_config_json(const nlohmann::json& root);

// Resolved snapshot; parse_config_json(config_to_json(c)) reproduces c.
nlohmann::json config_to_json(const ExperimentConfig& config);

// Loads the configured dataset (applying any subset) deterministically.
Dataset load_configured_dataset(const ExperimentConfig& config);

// Builds the shard plan for the configured dataset.
ShardPlan build_plan(const ExperimentConfig& config, const Dataset& dataset);

// metrics.csv: header round,scope,accuracy,precision,recall,f1,loss; one
// global row then one row per client per evaluated round; 6-decimal floats.
void export_csv(const std::vector<RoundRecord>& records, const std::string& path);
std::string render_csv(const std::vector<RoundRecord>& records);

// Executes the experiment and writes metrics.csv, summary.json and the
// resolved config snapshot into the output directory.
struct RunOutcome {
  ExperimentResult result;
  std::string output_dir;
};
RunOutcome run_to_files(const ExperimentConfig& config, bool force);

// Text report of per-client label histograms under the configured partition.
std::string partition_report(const ExperimentConfig& config);

}  // namespace pfl
