#include "pfl/partition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "pfl/errors.hpp"

namespace pfl {

std::vector<std::size_t> ShardPlan::shard_sample_indices(std::size_t shard) const {
  if (shard >= num_shards()) throw ArgumentError("shard index out of range");
  const auto begin = sorted_order.begin() + static_cast<std::ptrdiff_t>(shard * shard_size);
  return {begin, begin + static_cast<std::ptrdiff_t>(shard_size)};
}

std::vector<std::size_t> ShardPlan::client_sample_indices(std::size_t client) const {
  if (client >= num_clients()) throw ArgumentError("client index out of range");
  std::vector<std::size_t> out;
  out.reserve(samples_per_client());
  for (std::size_t shard : assignments[client]) {
    const auto indices = shard_sample_indices(shard);
    out.insert(out.end(), indices.begin(), indices.end());
  }
  return out;
}

void ShardPlan::validate(std::size_t dataset_size) const {
  if (shard_size == 0 || shards_per_client == 0 || assignments.empty()) {
    throw ConfigError("shard plan: empty dimensions");
  }
  const std::size_t covered = num_shards() * shard_size;
  if (sorted_order.size() < covered || sorted_order.size() > dataset_size) {
    throw ConfigError("shard plan inconsistent with dataset size");
  }
  std::vector<bool> seen(num_shards(), false);
  for (const auto& shards : assignments) {
    if (shards.size() != shards_per_client) {
      throw ConfigError("shard plan: client does not hold shards_per_client shards");
    }
    for (std::size_t s : shards) {
      if (s >= num_shards()) throw ConfigError("shard plan: shard id out of range");
      if (seen[s]) throw ConfigError("shard plan: shard assigned twice");
      seen[s] = true;
    }
  }
}

ShardPlan sort_and_shard(const Dataset& dataset, std::size_t num_clients,
                         std::size_t shards_per_client, std::size_t shard_size,
                         SplitRng rng) {
  if (num_clients == 0 || shards_per_client == 0 || shard_size == 0) {
    throw ArgumentError("sort_and_shard: counts must be >= 1");
  }
  const std::size_t required = num_clients * shards_per_client * shard_size;
  if (required > dataset.size()) {
    throw CapacityError("sort_and_shard: need " + std::to_string(required) +
                        " samples, dataset has " + std::to_string(dataset.size()));
  }

  ShardPlan plan;
  plan.shard_size = shard_size;
  plan.shards_per_client = shards_per_client;

  // Stable sort by label; ties keep original index order.
  plan.sorted_order.resize(dataset.size());
  std::iota(plan.sorted_order.begin(), plan.sorted_order.end(), std::size_t{0});
  std::stable_sort(plan.sorted_order.begin(), plan.sorted_order.end(),
                   [&dataset](std::size_t a, std::size_t b) {
                     return dataset.labels[a] < dataset.labels[b];
                   });
  plan.sorted_order.resize(required);  // leftover samples are dropped

  const std::size_t num_shards = num_clients * shards_per_client;
  std::vector<std::size_t> shard_ids(num_shards);
  std::iota(shard_ids.begin(), shard_ids.end(), std::size_t{0});
  rng.shuffle(shard_ids);

  plan.assignments.resize(num_clients);
  for (std::size_t c = 0; c < num_clients; ++c) {
    auto& shards = plan.assignments[c];
    shards.assign(shard_ids.begin() + static_cast<std::ptrdiff_t>(c * shards_per_client),
                  shard_ids.begin() + static_cast<std::ptrdiff_t>((c + 1) * shards_per_client));
    std::sort(shards.begin(), shards.end());
  }
  return plan;
}

ClientDataset split_client(const Dataset& slice, double holdout_fraction, SplitRng rng) {
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw ArgumentError("split_client: holdout_fraction must be in (0,1)");
  }
  const std::size_t n = slice.size();
  if (n < 2) throw CapacityError("split_client: need at least 2 samples");

  std::size_t test_target = static_cast<std::size_t>(
      std::llround(holdout_fraction * static_cast<double>(n)));
  test_target = std::clamp<std::size_t>(test_target, 1, n - 1);

  // Stratified allocation: floor(f * n_c) per class, then largest remainders.
  std::vector<std::vector<std::size_t>> by_class(
      static_cast<std::size_t>(slice.num_classes));
  for (std::size_t i = 0; i < n; ++i) {
    by_class[static_cast<std::size_t>(slice.labels[i])].push_back(i);
  }
  for (auto& group : by_class) rng.shuffle(group);

  std::vector<std::size_t> take(by_class.size(), 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (by_class[c].empty()) continue;
    const double exact = holdout_fraction * static_cast<double>(by_class[c].size());
    take[c] = std::min<std::size_t>(static_cast<std::size_t>(exact), by_class[c].size());
    assigned += take[c];
    remainders.emplace_back(exact - std::floor(exact), c);
  }
  std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (const auto& [frac, c] : remainders) {
    if (assigned >= test_target) break;
    if (take[c] < by_class[c].size()) {
      ++take[c];
      ++assigned;
    }
  }
  for (std::size_t c = 0; assigned < test_target && c < by_class.size(); ++c) {
    while (assigned < test_target && take[c] < by_class[c].size()) {
      ++take[c];
      ++assigned;
    }
  }
  while (assigned > test_target) {  // over-allocation from the floor pass
    for (std::size_t c = 0; c < by_class.size() && assigned > test_target; ++c) {
      if (take[c] > 0) {
        --take[c];
        --assigned;
      }
    }
  }

  std::vector<bool> is_test(n, false);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    for (std::size_t i = 0; i < take[c]; ++i) is_test[by_class[c][i]] = true;
  }

  std::vector<std::size_t> train_idx, test_idx;
  train_idx.reserve(n - test_target);
  test_idx.reserve(test_target);
  for (std::size_t i = 0; i < n; ++i) {
    (is_test[i] ? test_idx : train_idx).push_back(i);
  }

  const Dataset train = subset(slice, train_idx);
  const Dataset test = subset(slice, test_idx);
  ClientDataset out;
  out.num_classes = slice.num_classes;
  out.train_x = train.samples;
  out.train_y = train.labels;
  out.test_x = test.samples;
  out.test_y = test.labels;
  return out;
}

}  // namespace pfl
