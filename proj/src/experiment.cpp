#include "pfl/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

namespace pfl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kDataStream = 1ULL << 57;
constexpr std::uint64_t kPartitionStream = 1ULL << 56;

void check_keys(const json& obj, const std::string& context,
                const std::set<std::string>& allowed) {
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.contains(key)) {
      throw ConfigError("unknown key '" + key + "' in " + context);
    }
  }
}

template <typename T>
T typed_get(const json& value, const std::string& where) {
  if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
    if (!value.is_number_integer() && !value.is_number_unsigned()) {
      throw ConfigError("expected an integer for '" + where + "'");
    }
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!value.is_number()) {
      throw ConfigError("expected a number for '" + where + "'");
    }
  }
  try {
    return value.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("bad value type for '" + where + "'");
  }
}

template <typename T>
T get_or(const json& obj, const std::string& key, const std::string& context, T fallback) {
  if (!obj.contains(key)) return fallback;
  return typed_get<T>(obj.at(key), context + "." + key);
}

template <typename T>
T require(const json& obj, const std::string& key, const std::string& context) {
  if (!obj.contains(key)) {
    throw ConfigError("missing required key '" + context + "." + key + "'");
  }
  return typed_get<T>(obj.at(key), context + "." + key);
}

StrategyConfig parse_strategy(const json& obj, double local_lr) {
  const std::string name = require<std::string>(obj, "name", "strategy");
  if (name == "apple") {
    check_keys(obj, "strategy", {"name", "eta1", "eta2", "mu", "loss_decay"});
    AppleConfig c;
    c.eta1 = get_or(obj, "eta1", "strategy", local_lr);
    c.eta2 = get_or(obj, "eta2", "strategy", 0.05);
    c.mu = get_or(obj, "mu", "strategy", 0.1);
    c.loss_decay = get_or(obj, "loss_decay", "strategy", 0.3);
    return c;
  }
  if (name == "fedala") {
    check_keys(obj, "strategy", {"name", "ala_lr", "data_percent", "layer_range"});
    AlaConfig c;
    c.ala_lr = get_or(obj, "ala_lr", "strategy", local_lr);
    c.data_percent = get_or(obj, "data_percent", "strategy", 80.0);
    c.layer_range = get_or(obj, "layer_range", "strategy", 1);
    return c;
  }
  if (name == "fedbabu") {
    check_keys(obj, "strategy", {"name", "fine_tune_epochs"});
    BabuConfig c;
    c.fine_tune_epochs = get_or(obj, "fine_tune_epochs", "strategy", 5);
    return c;
  }
  if (name == "fedgc") {
    check_keys(obj, "strategy", {"name", "lambda"});
    GcConfig c;
    c.lambda = get_or(obj, "lambda", "strategy", 0.1);
    return c;
  }
  if (name == "fedpac") {
    check_keys(obj, "strategy", {"name", "lambda", "eta_f", "eta_g"});
    PacConfig c;
    c.lambda = get_or(obj, "lambda", "strategy", 1.0);
    c.eta_f = get_or(obj, "eta_f", "strategy", local_lr);
    c.eta_g = get_or(obj, "eta_g", "strategy", local_lr);
    return c;
  }
  if (name == "fedpcl") {
    check_keys(obj, "strategy", {"name", "temperature"});
    PclConfig c;
    c.temperature = get_or(obj, "temperature", "strategy", 1.0);
    return c;
  }
  if (name == "fedproto") {
    check_keys(obj, "strategy", {"name", "lambda"});
    ProtoConfig c;
    c.lambda = get_or(obj, "lambda", "strategy", 1.0);
    return c;
  }
  std::string valid;
  for (const std::string& s : strategy_names()) valid += (valid.empty() ? "" : ", ") + s;
  throw ConfigError("unknown strategy '" + name + "' (valid: " + valid + ")");
}

json strategy_to_json(const StrategyConfig& config) {
  struct Writer {
    json operator()(const AppleConfig& c) const {
      return {{"name", "apple"}, {"eta1", c.eta1},        {"eta2", c.eta2},
              {"mu", c.mu},      {"loss_decay", c.loss_decay}};
    }
    json operator()(const AlaConfig& c) const {
      return {{"name", "fedala"},
              {"ala_lr", c.ala_lr},
              {"data_percent", c.data_percent},
              {"layer_range", c.layer_range}};
    }
    json operator()(const BabuConfig& c) const {
      return {{"name", "fedbabu"}, {"fine_tune_epochs", c.fine_tune_epochs}};
    }
    json operator()(const GcConfig& c) const {
      return {{"name", "fedgc"}, {"lambda", c.lambda}};
    }
    json operator()(const PacConfig& c) const {
      return {{"name", "fedpac"}, {"lambda", c.lambda}, {"eta_f", c.eta_f},
              {"eta_g", c.eta_g}};
    }
    json operator()(const PclConfig& c) const {
      return {{"name", "fedpcl"}, {"temperature", c.temperature}};
    }
    json operator()(const ProtoConfig& c) const {
      return {{"name", "fedproto"}, {"lambda", c.lambda}};
    }
  };
  return std::visit(Writer{}, config);
}

}  // namespace

void ExperimentConfig::validate() const {
  global.validate();
  if (partition.num_clients < 1 || partition.shards_per_client < 1 ||
      partition.shard_size < 1) {
    throw ConfigError("partition counts must be >= 1");
  }
  if (global.num_clients != partition.num_clients) {
    throw ConfigError("global num_clients does not mirror partition.num_clients");
  }
  switch (dataset.kind) {
    case DatasetSpec::Kind::mnist:
      if (!fs::exists(dataset.images)) {
        throw ConfigError("dataset.images does not exist: " + dataset.images);
      }
      if (!fs::exists(dataset.labels)) {
        throw ConfigError("dataset.labels does not exist: " + dataset.labels);
      }
      break;
    case DatasetSpec::Kind::sign_mnist:
      if (!fs::exists(dataset.csv)) {
        throw ConfigError("dataset.csv does not exist: " + dataset.csv);
      }
      break;
    case DatasetSpec::Kind::synthetic:
      if (dataset.num_classes < 1 || dataset.per_class < 1 || dataset.dim < 1 ||
          dataset.spread <= 0.0) {
        throw ConfigError("synthetic dataset parameters must be positive");
      }
      break;
  }
  if (dataset.subset < 0) throw ConfigError("dataset.subset must be >= 0");
}

ExperimentConfig parse_config_json(const json& root) {
  if (!root.is_object()) throw ConfigError("config root must be a JSON object");
  check_keys(root, "config",
             {"dataset", "partition", "rounds", "client_fraction", "local_epochs",
              "batch_size", "local_lr", "seed", "hidden_dim", "eval_stride", "threads",
              "strategy", "output_dir"});

  ExperimentConfig config;

  const json& ds = root.contains("dataset") ? root.at("dataset") : json::object();
  if (!ds.is_object()) throw ConfigError("dataset must be an object");
  const std::string kind = get_or<std::string>(ds, "kind", "dataset", "synthetic");
  if (kind == "mnist") {
    check_keys(ds, "dataset", {"kind", "images", "labels", "subset"});
    config.dataset.kind = DatasetSpec::Kind::mnist;
    config.dataset.images = require<std::string>(ds, "images", "dataset");
    config.dataset.labels = require<std::string>(ds, "labels", "dataset");
  } else if (kind == "sign_mnist") {
    check_keys(ds, "dataset", {"kind", "csv", "subset"});
    config.dataset.kind = DatasetSpec::Kind::sign_mnist;
    config.dataset.csv = require<std::string>(ds, "csv", "dataset");
  } else if (kind == "synthetic") {
    check_keys(ds, "dataset", {"kind", "num_classes", "per_class", "dim", "spread", "subset"});
    config.dataset.kind = DatasetSpec::Kind::synthetic;
    config.dataset.num_classes = get_or(ds, "num_classes", "dataset", 2);
    config.dataset.per_class = get_or(ds, "per_class", "dataset", 300);
    config.dataset.dim = get_or(ds, "dim", "dataset", 16);
    config.dataset.spread = get_or(ds, "spread", "dataset", 0.1);
  } else {
    throw ConfigError("dataset.kind must be one of mnist, sign_mnist, synthetic");
  }
  config.dataset.subset = get_or<long long>(ds, "subset", "dataset", 0);

  const json& part = root.contains("partition") ? root.at("partition") : json::object();
  if (!part.is_object()) throw ConfigError("partition must be an object");
  check_keys(part, "partition",
             {"num_clients", "shards_per_client", "shard_size", "holdout_fraction"});
  config.partition.num_clients = get_or(part, "num_clients", "partition", 20);
  config.partition.shards_per_client = get_or(part, "shards_per_client", "partition", 2);
  config.partition.shard_size = get_or(part, "shard_size", "partition", 300);
  config.partition.holdout_fraction = get_or(part, "holdout_fraction", "partition", 0.2);

  config.global.rounds = get_or(root, "rounds", "config", 1);
  config.global.client_fraction = get_or(root, "client_fraction", "config", 1.0);
  config.global.local_epochs = get_or(root, "local_epochs", "config", 1);
  config.global.batch_size = get_or(root, "batch_size", "config", 32);
  config.global.local_lr = get_or(root, "local_lr", "config", 0.05);
  config.global.seed = get_or<std::uint64_t>(root, "seed", "config", 0);
  config.global.hidden_dim = get_or(root, "hidden_dim", "config", 128);
  config.global.eval_stride = get_or(root, "eval_stride", "config", 1);
  config.global.threads = get_or(root, "threads", "config", 1);
  config.global.num_clients = config.partition.num_clients;
  config.global.holdout_fraction = config.partition.holdout_fraction;

  if (!root.contains("strategy")) throw ConfigError("missing required key 'strategy'");
  if (!root.at("strategy").is_object()) throw ConfigError("strategy must be an object");
  config.global.strategy = parse_strategy(root.at("strategy"), config.global.local_lr);

  config.output_dir = get_or<std::string>(root, "output_dir", "config", "");

  config.global.validate();
  return config;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  json root;
  try {
    root = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return parse_config_json(root);
}

json config_to_json(const ExperimentConfig& config) {
  json ds;
  switch (config.dataset.kind) {
    case DatasetSpec::Kind::mnist:
      ds = {{"kind", "mnist"},
            {"images", config.dataset.images},
            {"labels", config.dataset.labels}};
      break;
    case DatasetSpec::Kind::sign_mnist:
      ds = {{"kind", "sign_mnist"}, {"csv", config.dataset.csv}};
      break;
    case DatasetSpec::Kind::synthetic:
      ds = {{"kind", "synthetic"},
            {"num_classes", config.dataset.num_classes},
            {"per_class", config.dataset.per_class},
            {"dim", config.dataset.dim},
            {"spread", config.dataset.spread}};
      break;
  }
  ds["subset"] = config.dataset.subset;

  return json{
      {"dataset", ds},
      {"partition",
       {{"num_clients", config.partition.num_clients},
        {"shards_per_client", config.partition.shards_per_client},
        {"shard_size", config.partition.shard_size},
        {"holdout_fraction", config.partition.holdout_fraction}}},
      {"rounds", config.global.rounds},
      {"client_fraction", config.global.client_fraction},
      {"local_epochs", config.global.local_epochs},
      {"batch_size", config.global.batch_size},
      {"local_lr", config.global.local_lr},
      {"seed", config.global.seed},
      {"hidden_dim", config.global.hidden_dim},
      {"eval_stride", config.global.eval_stride},
      {"threads", config.global.threads},
      {"strategy", strategy_to_json(config.global.strategy)},
      {"output_dir", config.output_dir},
  };
}

Dataset load_configured_dataset(const ExperimentConfig& config) {
  SplitRng root(config.global.seed);
  Dataset ds;
  switch (config.dataset.kind) {
    case DatasetSpec::Kind::mnist:
      ds = load_idx(config.dataset.images, config.dataset.labels);
      break;
    case DatasetSpec::Kind::sign_mnist:
      ds = load_sign_csv(config.dataset.csv);
      break;
    case DatasetSpec::Kind::synthetic:
      ds = synthetic_blobs(config.dataset.num_classes, config.dataset.per_class,
                           config.dataset.dim, config.dataset.spread,
                           root.stream(kDataStream));
      break;
  }
  if (config.dataset.subset > 0 &&
      static_cast<std::size_t>(config.dataset.subset) < ds.size()) {
    ds = stratified_subset(ds, static_cast<std::size_t>(config.dataset.subset),
                           root.stream(kDataStream + 1));
  }
  return ds;
}

ShardPlan build_plan(const ExperimentConfig& config, const Dataset& dataset) {
  SplitRng root(config.global.seed);
  return sort_and_shard(dataset, static_cast<std::size_t>(config.partition.num_clients),
                        static_cast<std::size_t>(config.partition.shards_per_client),
                        static_cast<std::size_t>(config.partition.shard_size),
                        root.stream(kPartitionStream));
}

namespace {

std::string format6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

void append_row(std::string& out, int round, const std::string& scope,
                const MetricsReport& report, double loss) {
  out += std::to_string(round);
  out += ',';
  out += scope;
  out += ',';
  out += format6(report.accuracy);
  out += ',';
  out += format6(report.precision);
  out += ',';
  out += format6(report.recall);
  out += ',';
  out += format6(report.f1);
  out += ',';
  out += format6(loss);
  out += '\n';
}

}  // namespace

std::string render_csv(const std::vector<RoundRecord>& records) {
  if (records.empty()) throw ArgumentError("render_csv: no records");
  std::string out = "round,scope,accuracy,precision,recall,f1,loss\n";
  for (const RoundRecord& record : records) {
    append_row(out, record.round, "global", record.global, record.mean_train_loss);
    for (std::size_t c = 0; c < record.per_client.size(); ++c) {
      append_row(out, record.round, std::to_string(c), record.per_client[c],
                 record.mean_train_loss);
    }
  }
  return out;
}

void export_csv(const std::vector<RoundRecord>& records, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write csv: " + path);
  out << render_csv(records);
  if (!out) throw IoError("write failure: " + path);
}

RunOutcome run_to_files(const ExperimentConfig& config, bool force) {
  config.validate();
  if (config.output_dir.empty()) throw ConfigError("no output directory configured");

  const fs::path out_dir(config.output_dir);
  if (fs::exists(out_dir) && !fs::is_empty(out_dir) && !force) {
    throw OutputRefusedError("output directory exists and is not empty: " +
                             config.output_dir + " (use --force to overwrite)");
  }
  fs::create_directories(out_dir);

  const auto start = std::chrono::steady_clock::now();
  const Dataset dataset = load_configured_dataset(config);
  const ShardPlan plan = build_plan(config, dataset);
  ExperimentResult result = run_experiment(config.global, plan, dataset);
  const double wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  export_csv(result.records, (out_dir / "metrics.csv").string());

  {
    std::ofstream snapshot(out_dir / "config.json");
    if (!snapshot) throw IoError("cannot write config snapshot");
    snapshot << config_to_json(config).dump(2) << '\n';
  }

  const RoundRecord& last = result.records.back();
  double mean_personalized_acc = 0.0, mean_p = 0.0, mean_r = 0.0, mean_f = 0.0;
  for (const MetricsReport& report : last.per_client) {
    mean_personalized_acc += report.accuracy;
    mean_p += report.precision;
    mean_r += report.recall;
    mean_f += report.f1;
  }
  const double nc = static_cast<double>(last.per_client.size());
  json summary = {
      {"strategy", strategy_name(config.global.strategy)},
      {"seed", config.global.seed},
      {"rounds", config.global.rounds},
      {"wall_time_seconds", wall_seconds},
      {"final",
       {{"round", last.round},
        {"mean_train_loss", last.mean_train_loss},
        {"global",
         {{"accuracy", last.global.accuracy},
          {"precision", last.global.precision},
          {"recall", last.global.recall},
          {"f1", last.global.f1}}},
        {"personalized_mean",
         {{"accuracy", mean_personalized_acc / nc},
          {"precision", mean_p / nc},
          {"recall", mean_r / nc},
          {"f1", mean_f / nc}}}}},
  };
  {
    std::ofstream out(out_dir / "summary.json");
    if (!out) throw IoError("cannot write summary.json");
    out << summary.dump(2) << '\n';
  }

  return {std::move(result), config.output_dir};
}

std::string partition_report(const ExperimentConfig& config) {
  const Dataset dataset = load_configured_dataset(config);
  const ShardPlan plan = build_plan(config, dataset);
  std::string out;
  out += "clients=" + std::to_string(plan.num_clients()) +
         " shards_per_client=" + std::to_string(plan.shards_per_client) +
         " shard_size=" + std::to_string(plan.shard_size) + "\n";
  for (std::size_t c = 0; c < plan.num_clients(); ++c) {
    const auto indices = plan.client_sample_indices(c);
    std::map<int, int> hist;
    for (std::size_t idx : indices) ++hist[dataset.labels[idx]];
    out += "client " + std::to_string(c) + ": total=" + std::to_string(indices.size());
    for (const auto& [label, count] : hist) {
      out += " " + std::to_string(label) + ":" + std::to_string(count);
    }
    out += '\n';
  }
  return out;
}

}  // namespace pfl
