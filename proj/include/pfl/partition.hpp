#pragma once

#include <vector>

#include "pfl/dataset.hpp"
#include "pfl/rng.hpp"

namespace pfl {

// Assignment of label-sorted shards to clients. Shards are consecutive blocks
// of `shard_size` positions in `sorted_order`; shard s covers
// sorted_order[s*shard_size, (s+1)*shard_size).
struct ShardPlan {
  std::size_t shard_size = 0;
  std::size_t shards_per_client = 0;
  std::vector<std::size_t> sorted_order;            // dataset indices after stable label sort
  std::vector<std::vector<std::size_t>> assignments;  // per-client shard ids, ascending

  std::size_t num_clients() const { return assignments.size(); }
  std::size_t num_shards() const { return num_clients() * shards_per_client; }
  std::size_t samples_per_client() const { return shards_per_client * shard_size; }

  // Dataset row indices held by one client, shard by shard.
  std::vector<std::size_t> client_sample_indices(std::size_t client) const;
  // Dataset row indices of one shard.
  std::vector<std::size_t> shard_sample_indices(std::size_t shard) const;

  void validate(std::size_t dataset_size) const;
};

// The non-IID partitioner: stable sort by label, cut the first
// num_clients*shards_per_client*shard_size samples into consecutive shards,
// assign exactly shards_per_client random shards to each client. Leftover
// samples are unused.
ShardPlan sort_and_shard(const Dataset& dataset, std::size_t num_clients,
                         std::size_t shards_per_client, std::size_t shard_size,
                         SplitRng rng);

// Train/test split of one client's samples, stratified when possible.
struct ClientDataset {
  Tensor train_x;
  std::vector<int> train_y;
  Tensor test_x;
  std::vector<int> test_y;
  int num_classes = 0;

  std::size_t train_size() const { return train_y.size(); }
  std::size_t test_size() const { return test_y.size(); }
};

ClientDataset split_client(const Dataset& slice, double holdout_fraction, SplitRng rng);

}  // namespace pfl
