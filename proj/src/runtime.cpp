#include "pfl/runtime.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <memory>
#include <numeric>
#include <string>
#include <thread>

#include "pfl/errors.hpp"

namespace pfl {

namespace {

// Stream-id bases for the derived RNG consumers. Client streams occupy
// client_id * 2^20 + round and stay far below these.
constexpr std::uint64_t kClientStreamStride = 1ULL << 20;
constexpr std::uint64_t kSplitStreamBase = 1ULL << 60;
constexpr std::uint64_t kSampleStreamBase = 1ULL << 61;
constexpr std::uint64_t kInitStream = 1ULL << 62;
constexpr std::uint64_t kFinetuneStreamBase = 1ULL << 59;

// index-sharded parallel for; results must be written by index only.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn) {
  int workers = threads == 0 ? static_cast<int>(std::thread::hardware_concurrency())
                             : threads;
  workers = std::max(1, std::min<int>(workers, static_cast<int>(count)));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      try {
        for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
          fn(i);
        }
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }
}

}  // namespace

std::vector<int> sample_clients(int num_clients, double client_fraction, SplitRng& rng) {
  if (num_clients < 1) throw ArgumentError("sample_clients: num_clients must be >= 1");
  if (!(client_fraction > 0.0 && client_fraction <= 1.0)) {
    throw ArgumentError("sample_clients: fraction must be in (0, 1]");
  }
  const int m = std::max(
      1, static_cast<int>(std::floor(client_fraction * static_cast<double>(num_clients))));
  std::vector<int> ids(static_cast<std::size_t>(num_clients));
  std::iota(ids.begin(), ids.end(), 0);
  for (int i = 0; i < m; ++i) {
    const std::size_t j = static_cast<std::size_t>(i) +
                          rng.next_below(static_cast<std::uint64_t>(num_clients - i));
    std::swap(ids[static_cast<std::size_t>(i)], ids[j]);
  }
  ids.resize(static_cast<std::size_t>(m));
  std::sort(ids.begin(), ids.end());
  return ids;
}

namespace {

// Anchored convex combination over parallel tensor lists, ascending id order.
template <typename Entry, typename TensorsOf>
void anchored_average(std::vector<Entry>& entries, const TensorsOf& tensors_of,
                      std::vector<Tensor*> out_tensors) {
  std::sort(entries.begin(), entries.end(),
            [](const Entry& a, const Entry& b) { return a.client_id < b.client_id; });
  double total = 0.0;
  for (const Entry& e : entries) {
    if (e.sample_count <= 0.0) throw ArgumentError("weighted average: nonpositive count");
    total += e.sample_count;
  }
  const auto anchor = tensors_of(entries.front());
  if (anchor.size() != out_tensors.size()) {
    throw DimensionError("weighted average: tensor count mismatch");
  }
  for (std::size_t t = 0; t < out_tensors.size(); ++t) {
    *out_tensors[t] = *anchor[t];
  }
  for (const Entry& e : entries) {
    const double w = e.sample_count / total;
    const auto tensors = tensors_of(e);
    for (std::size_t t = 0; t < out_tensors.size(); ++t) {
      if (!tensors[t]->same_shape(*out_tensors[t])) {
        throw DimensionError("weighted average: shape mismatch across models");
      }
      Tensor& out = *out_tensors[t];
      const Tensor& in = *tensors[t];
      const Tensor& anc = *anchor[t];
      for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] += w * (in.data[i] - anc.data[i]);
      }
    }
  }
}

}  // namespace

ModelParams weighted_average(std::vector<WeightedModel> entries) {
  if (entries.empty()) throw ArgumentError("weighted_average: empty input");
  ModelParams out = *entries.front().params;
  anchored_average(entries,
                   [](const WeightedModel& e) { return parameter_tensors(*e.params); },
                   parameter_tensors(out));
  return out;
}

std::vector<LayerParams> weighted_average_layers(std::vector<WeightedLayers> entries) {
  if (entries.empty()) throw ArgumentError("weighted_average_layers: empty input");
  std::vector<LayerParams> out = *entries.front().layers;
  auto tensors_of_layers = [](const std::vector<LayerParams>& layers) {
    std::vector<const Tensor*> t;
    t.reserve(layers.size() * 2);
    for (const LayerParams& l : layers) {
      t.push_back(&l.weight);
      t.push_back(&l.bias);
    }
    return t;
  };
  std::vector<Tensor*> out_tensors;
  for (LayerParams& l : out) {
    out_tensors.push_back(&l.weight);
    out_tensors.push_back(&l.bias);
  }
  anchored_average(entries,
                   [&](const WeightedLayers& e) { return tensors_of_layers(*e.layers); },
                   std::move(out_tensors));
  return out;
}

MetricsReport metrics_from_predictions(std::span<const int> truth,
                                       std::span<const int> predictions,
                                       int num_classes) {
  return macro_metrics(confusion_matrix(truth, predictions, num_classes));
}

MetricsReport evaluate_model(const ModelParams& params, const Tensor& x,
                             std::span<const int> labels) {
  if (labels.empty()) throw ArgumentError("evaluate_model: empty data");
  const std::vector<int> preds = predict(params, x);
  return metrics_from_predictions(labels, preds,
                                  static_cast<int>(params.num_classes()));
}

ExperimentResult run_experiment(const GlobalConfig& config, const ShardPlan& plan,
                                const Dataset& dataset, const UploadObserver& observer) {
  config.validate();
  plan.validate(dataset.size());
  if (plan.num_clients() != static_cast<std::size_t>(config.num_clients)) {
    throw ConfigError("plan has " + std::to_string(plan.num_clients()) +
                      " clients, config expects " + std::to_string(config.num_clients));
  }

  SplitRng root(config.seed);

  // Materialize per-client train/test splits.
  std::vector<ClientState> clients(plan.num_clients());
  for (std::size_t c = 0; c < plan.num_clients(); ++c) {
    const auto indices = plan.client_sample_indices(c);
    const Dataset slice = subset(dataset, indices);
    clients[c].id = static_cast<int>(c);
    clients[c].data = split_client(slice, config.holdout_fraction,
                                   root.stream(kSplitStreamBase + c));
  }

  SplitRng init_rng = root.stream(kInitStream);
  const ModelParams init_model =
      make_mlp(dataset.input_dim(), {static_cast<std::size_t>(config.hidden_dim)},
               static_cast<std::size_t>(dataset.num_classes), init_rng);

  std::unique_ptr<Strategy> strategy = make_strategy(config, init_model);
  strategy->setup(clients, init_model);

  ExperimentResult result;
  for (int round = 1; round <= config.rounds; ++round) {
    SplitRng sample_rng = root.stream(kSampleStreamBase + static_cast<std::uint64_t>(round));
    const std::vector<int> selected =
        sample_clients(config.num_clients, config.client_fraction, sample_rng);

    RoundContext ctx{round, &config};

    // Phase 1: parallel local updates against the round-start snapshot.
    std::vector<RoundMessage> uploads(selected.size());
    parallel_for(selected.size(), config.threads, [&](std::size_t i) {
      const int id = selected[i];
      SplitRng client_rng = root.stream(
          static_cast<std::uint64_t>(id) * kClientStreamStride +
          static_cast<std::uint64_t>(round));
      uploads[i] = strategy->local_update(clients[static_cast<std::size_t>(id)], ctx,
                                          client_rng);
    });
    if (observer) observer(round, uploads);

    // Phase 2: single-writer aggregation in ascending client-id order.
    std::sort(uploads.begin(), uploads.end(),
              [](const RoundMessage& a, const RoundMessage& b) {
                return a.client_id < b.client_id;
              });
    strategy->aggregate(uploads, ctx, clients);

    double mean_loss = 0.0;
    for (const RoundMessage& msg : uploads) mean_loss += msg.train_loss;
    mean_loss /= static_cast<double>(uploads.size());

    if (round % config.eval_stride != 0 && round != config.rounds) continue;

    RoundRecord record;
    record.round = round;
    record.selected = selected;
    record.mean_train_loss = mean_loss;

    // Personalized metrics: each client's model on its own test split.
    record.per_client.resize(clients.size());
    parallel_for(clients.size(), config.threads, [&](std::size_t c) {
      SplitRng eval_rng = root.stream(
          kFinetuneStreamBase + static_cast<std::uint64_t>(round) * kClientStreamStride +
          static_cast<std::uint64_t>(c));
      const std::vector<int> preds =
          strategy->predict_personalized(clients[c], clients[c].data.test_x, eval_rng);
      record.per_client[c] = metrics_from_predictions(clients[c].data.test_y, preds,
                                                      dataset.num_classes);
    });

    // Global metrics: the strategy's global knowledge over the union of test
    // splits, accumulated into one confusion matrix.
    std::vector<std::vector<int>> global_confusion;
    std::vector<std::vector<int>> per_client_preds(clients.size());
    parallel_for(clients.size(), config.threads, [&](std::size_t c) {
      per_client_preds[c] = strategy->predict_global(clients[c], clients[c].data.test_x);
    });
    for (std::size_t c = 0; c < clients.size(); ++c) {
      const auto confusion =
          confusion_matrix(clients[c].data.test_y, per_client_preds[c],
                           dataset.num_classes);
      if (global_confusion.empty()) {
        global_confusion = confusion;
      } else {
        for (std::size_t t = 0; t < confusion.size(); ++t) {
          for (std::size_t p = 0; p < confusion.size(); ++p) {
            global_confusion[t][p] += confusion[t][p];
          }
        }
      }
    }
    record.global = macro_metrics(global_confusion);

    result.records.push_back(std::move(record));
  }

  // Materialize final personalized models into the returned client states.
  parallel_for(clients.size(), config.threads, [&](std::size_t c) {
    SplitRng eval_rng = root.stream(
        kFinetuneStreamBase +
        static_cast<std::uint64_t>(config.rounds + 1) * kClientStreamStride +
        static_cast<std::uint64_t>(c));
    clients[c].personalized = strategy->personalized_model(clients[c], eval_rng);
  });

  result.clients = std::move(clients);
  return result;
}

}  // namespace pfl
