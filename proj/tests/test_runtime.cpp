#include <set>

#include "doctest.h"
#include "pfl/errors.hpp"
#include "pfl/experiment.hpp"
#include "pfl/runtime.hpp"

using namespace pfl;

namespace {

GlobalConfig blob_config(const StrategyConfig& strategy, int rounds = 5,
                         std::uint64_t seed = 1) {
  GlobalConfig config;
  config.rounds = rounds;
  config.client_fraction = 1.0;
  config.local_epochs = 1;
  config.batch_size = 16;
  config.local_lr = 0.1;
  config.seed = seed;
  config.num_clients = 4;
  config.hidden_dim = 16;
  config.strategy = strategy;
  return config;
}

struct Fixture {
  Dataset dataset;
  ShardPlan plan;
  Fixture(int num_clients = 4, std::uint64_t seed = 1)
      : dataset(synthetic_blobs(2, num_clients * 20 + 40, 8, 0.1,
                                SplitRng(seed).stream(1000))),
        plan(sort_and_shard(dataset, static_cast<std::size_t>(num_clients), 2, 20,
                            SplitRng(seed).stream(1001))) {}
};

}  // namespace

TEST_CASE("sample_clients: full participation, minimum one, determinism") {
  SplitRng rng(1);
  const auto all = sample_clients(20, 1.0, rng);
  CHECK(all.size() == 20);
  for (int i = 0; i < 20; ++i) CHECK(all[static_cast<std::size_t>(i)] == i);

  SplitRng rng2(2);
  const auto one = sample_clients(20, 0.05, rng2);
  CHECK(one.size() == 1);

  SplitRng a(3), b(3);
  CHECK(sample_clients(10, 0.5, a) == sample_clients(10, 0.5, b));

  SplitRng c(4);
  const auto five = sample_clients(10, 0.5, c);
  CHECK(five.size() == 5);
  CHECK(std::is_sorted(five.begin(), five.end()));
  std::set<int> unique(five.begin(), five.end());
  CHECK(unique.size() == 5);
}

TEST_CASE("weighted_average: fixed point, arithmetic, permutation invariance") {
  SplitRng rng(5);
  const ModelParams m = make_mlp(6, {4}, 3, rng);

  // Identical inputs average to themselves exactly.
  std::vector<WeightedModel> same{{0, &m, 1.0}, {1, &m, 3.0}, {2, &m, 2.0}};
  CHECK(parameter_hash(weighted_average(same)) == parameter_hash(m));

  // Scalar case: (1*1 + 5*3) / 4 = 4.
  ModelParams s1, s5;
  s1.head = {Tensor::from({1, 1}, {1.0}), Tensor::from({1}, {0.0})};
  s5.head = {Tensor::from({1, 1}, {5.0}), Tensor::from({1}, {0.0})};
  std::vector<WeightedModel> scalars{{0, &s1, 1.0}, {1, &s5, 3.0}};
  CHECK(weighted_average(scalars).head.weight.data[0] == doctest::Approx(4.0));

  // Permuting the entry list leaves the result bit-identical.
  SplitRng rng2(6);
  const ModelParams a = make_mlp(6, {4}, 3, rng2);
  const ModelParams b = make_mlp(6, {4}, 3, rng2);
  const ModelParams c = make_mlp(6, {4}, 3, rng2);
  std::vector<WeightedModel> fwd{{0, &a, 2.0}, {1, &b, 1.0}, {2, &c, 5.0}};
  std::vector<WeightedModel> rev{{2, &c, 5.0}, {0, &a, 2.0}, {1, &b, 1.0}};
  CHECK(parameter_hash(weighted_average(fwd)) == parameter_hash(weighted_average(rev)));

  CHECK_THROWS_AS(weighted_average({}), ArgumentError);
}

TEST_CASE("evaluate: oracle stub, random baseline, purity") {
  // A model that always predicts the true label: identity feature map routed
  // through a one-hot head on one-hot inputs.
  ModelParams oracle;
  oracle.activation = Activation::identity;
  oracle.head = {Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}),
                 Tensor::from({3}, {0, 0, 0})};
  Tensor onehots = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  const std::vector<int> labels{0, 1, 2};
  CHECK(evaluate_model(oracle, onehots, labels).accuracy == 1.0);

  // Untrained 10-class model on balanced data: accuracy near 1/10.
  double acc_sum = 0.0;
  const int seeds = 5;
  for (int s = 0; s < seeds; ++s) {
    SplitRng rng(static_cast<std::uint64_t>(100 + s));
    const ModelParams m = make_mlp(12, {16}, 10, rng);
    const Dataset ds = synthetic_blobs(10, 40, 12, 0.2, SplitRng(200 + s));
    acc_sum += evaluate_model(m, ds.samples, ds.labels).accuracy;
  }
  const double mean_acc = acc_sum / seeds;
  CHECK(mean_acc > 0.05);
  CHECK(mean_acc < 0.15);

  // Evaluation never mutates the parameters.
  SplitRng rng(300);
  const ModelParams m = make_mlp(8, {8}, 4, rng);
  const Dataset ds = synthetic_blobs(4, 10, 8, 0.2, SplitRng(301));
  const std::uint64_t before = parameter_hash(m);
  evaluate_model(m, ds.samples, ds.labels);
  CHECK(parameter_hash(m) == before);
}

TEST_CASE("run_experiment: loop contract") {
  Fixture fx;
  GlobalConfig bad = blob_config(ProtoConfig{});
  bad.rounds = 0;
  CHECK_THROWS_AS(run_experiment(bad, fx.plan, fx.dataset), ConfigError);

  const GlobalConfig one = blob_config(ProtoConfig{}, 1);
  const ExperimentResult result = run_experiment(one, fx.plan, fx.dataset);
  REQUIRE(result.records.size() == 1);
  CHECK(result.records[0].round == 1);
  CHECK(result.records[0].selected == std::vector<int>{0, 1, 2, 3});
  CHECK(result.records[0].per_client.size() == 4);
  CHECK(result.clients.size() == 4);
}

TEST_CASE("run_experiment: participation obeys m = max(floor(N f), 1)") {
  Fixture fx(10);
  GlobalConfig config = blob_config(ProtoConfig{}, 4);
  config.num_clients = 10;
  config.client_fraction = 0.33;
  Fixture fx10(10);
  const ExperimentResult result = run_experiment(config, fx10.plan, fx10.dataset);
  for (const RoundRecord& record : result.records) {
    CHECK(record.selected.size() == 3);
  }

  config.client_fraction = 0.01;
  const ExperimentResult minimal = run_experiment(config, fx10.plan, fx10.dataset);
  for (const RoundRecord& record : minimal.records) {
    CHECK(record.selected.size() == 1);
  }
}

TEST_CASE("run_experiment: zero local_lr under fedbabu leaves the body fixed") {
  Fixture fx;
  GlobalConfig config = blob_config(BabuConfig{0}, 3);
  config.local_lr = 0.0;
  const ExperimentResult result = run_experiment(config, fx.plan, fx.dataset);
  // With lr = 0 and fine-tune epochs 0 every personalized model equals the
  // frozen initial model, so all rounds report identical metrics.
  for (const RoundRecord& record : result.records) {
    CHECK(record.global.accuracy == result.records[0].global.accuracy);
  }
  const std::uint64_t h0 = parameter_hash(result.clients[0].personalized);
  for (const ClientState& client : result.clients) {
    CHECK(parameter_hash(client.personalized) == h0);
  }
}

TEST_CASE("run_experiment: learning smoke on blobs with fedproto") {
  Dataset dataset = synthetic_blobs(2, 150, 8, 0.1, SplitRng(42).stream(1));
  ShardPlan plan = sort_and_shard(dataset, 2, 2, 30, SplitRng(42).stream(2));
  GlobalConfig config = blob_config(ProtoConfig{}, 30, 42);
  config.num_clients = 2;
  const ExperimentResult result = run_experiment(config, plan, dataset);
  double mean_acc = 0.0;
  for (const MetricsReport& r : result.records.back().per_client) mean_acc += r.accuracy;
  mean_acc /= 2.0;
  CHECK(mean_acc > 0.9);
}

TEST_CASE("run_experiment: replay produces bit-identical records") {
  Fixture fx;
  const GlobalConfig config = blob_config(AlaConfig{0.1, 80.0, 1}, 4);
  const ExperimentResult r1 = run_experiment(config, fx.plan, fx.dataset);
  const ExperimentResult r2 = run_experiment(config, fx.plan, fx.dataset);
  CHECK(render_csv(r1.records) == render_csv(r2.records));
  for (std::size_t c = 0; c < r1.clients.size(); ++c) {
    CHECK(parameter_hash(r1.clients[c].personalized) ==
          parameter_hash(r2.clients[c].personalized));
  }
}

TEST_CASE("run_experiment: thread count does not change results") {
  Fixture fx;
  GlobalConfig config = blob_config(GcConfig{0.1}, 3);
  config.threads = 1;
  const ExperimentResult serial = run_experiment(config, fx.plan, fx.dataset);
  config.threads = 4;
  const ExperimentResult parallel = run_experiment(config, fx.plan, fx.dataset);
  CHECK(render_csv(serial.records) == render_csv(parallel.records));
}

TEST_CASE("run_experiment: eval stride still evaluates the final round") {
  Fixture fx;
  GlobalConfig config = blob_config(ProtoConfig{}, 5);
  config.eval_stride = 2;
  const ExperimentResult result = run_experiment(config, fx.plan, fx.dataset);
  REQUIRE(result.records.size() == 3);
  CHECK(result.records[0].round == 2);
  CHECK(result.records[1].round == 4);
  CHECK(result.records[2].round == 5);
}

TEST_CASE("run_experiment: plan/config mismatch rejected before round 1") {
  Fixture fx;
  GlobalConfig config = blob_config(ProtoConfig{});
  config.num_clients = 5;  // plan has 4
  CHECK_THROWS_AS(run_experiment(config, fx.plan, fx.dataset), ConfigError);
}
