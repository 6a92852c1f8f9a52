#include <cmath>
#include <set>

#include "doctest.h"
#include "pfl/errors.hpp"
#include "pfl/geometry.hpp"
#include "pfl/model.hpp"
#include "pfl/rng.hpp"
#include "pfl/tensor.hpp"
#include "test_util.hpp"

using namespace pfl;

TEST_CASE("rng: same (seed, stream) reproduces, different streams diverge") {
  SplitRng a(42, 7);
  SplitRng b(42, 7);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  SplitRng c = SplitRng(42).stream(1);
  SplitRng d = SplitRng(42).stream(2);
  int same = 0;
  for (int i = 0; i < 64; ++i) {
    if (c.next_u64() == d.next_u64()) ++same;
  }
  CHECK(same == 0);
}

TEST_CASE("rng: next_below stays in range and shuffle is a permutation") {
  SplitRng rng(3);
  for (int i = 0; i < 1000; ++i) CHECK(rng.next_below(7) < 7);
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  rng.shuffle(v);
  std::set<int> seen(v.begin(), v.end());
  CHECK(seen.size() == 10);
}

TEST_CASE("tensor: shape invariant and finite checks") {
  CHECK_THROWS_AS(Tensor::from({2, 3}, {1.0, 2.0}), DimensionError);
  Tensor t = Tensor::from({2, 2}, {1.0, 2.0, 3.0, 4.0});
  CHECK(t.at(1, 0) == 3.0);
  t.data[2] = std::nan("");
  CHECK_FALSE(all_finite(t));
  CHECK_THROWS_AS(check_finite(t, "probe"), ArgumentError);
}

TEST_CASE("clip01: endpoints, interior, idempotence") {
  const Tensor t = Tensor::from({4}, {1.2, -0.3, 0.5, 0.0});
  const Tensor c = clip01(t);
  CHECK(c.data[0] == 1.0);
  CHECK(c.data[1] == 0.0);
  CHECK(c.data[2] == 0.5);
  CHECK(c.data[3] == 0.0);

  SplitRng rng(11);
  Tensor random = Tensor::zeros({64});
  for (double& v : random.data) v = rng.next_uniform(-3.0, 3.0);
  const Tensor once = clip01(random);
  const Tensor twice = clip01(once);
  CHECK(once.data == twice.data);
}

namespace {

// Exhaustive oracle: the best simplex point on a grid of step 1/den.
double simplex_grid_best_objective(const std::vector<double>& v, int den) {
  const int n = static_cast<int>(v.size());
  double best = 1e300;
  std::vector<int> parts(static_cast<std::size_t>(n), 0);
  std::function<void(int, int)> rec = [&](int idx, int remaining) {
    if (idx == n - 1) {
      parts[static_cast<std::size_t>(idx)] = remaining;
      double obj = 0.0;
      for (int i = 0; i < n; ++i) {
        const double w = static_cast<double>(parts[static_cast<std::size_t>(i)]) / den;
        const double d = w - v[static_cast<std::size_t>(i)];
        obj += d * d;
      }
      best = std::min(best, obj);
      return;
    }
    for (int k = 0; k <= remaining; ++k) {
      parts[static_cast<std::size_t>(idx)] = k;
      rec(idx + 1, remaining - k);
    }
  };
  rec(0, den);
  return best;
}

double objective(const std::vector<double>& w, const std::vector<double>& v) {
  double obj = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double d = w[i] - v[i];
    obj += d * d;
  }
  return obj;
}

}  // namespace

TEST_CASE("simplex_project: examples") {
  CHECK_THROWS_AS(simplex_project({}), ArgumentError);

  const auto already = simplex_project({1.0, 0.0, 0.0});
  CHECK(already[0] == doctest::Approx(1.0));
  CHECK(already[1] == doctest::Approx(0.0));

  const auto uniform = simplex_project({0.5, 0.5, 0.5});
  for (double w : uniform) CHECK(w == doctest::Approx(1.0 / 3.0));

  const auto spike = simplex_project({2.0, 0.0, 0.0});
  CHECK(spike[0] == doctest::Approx(1.0));
  CHECK(spike[1] == doctest::Approx(0.0));
  CHECK(spike[2] == doctest::Approx(0.0));
}

TEST_CASE("simplex_project: feasibility, grid oracle, idempotence") {
  SplitRng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + static_cast<int>(rng.next_below(3));  // dim 2..4
    std::vector<double> v(static_cast<std::size_t>(n));
    // Coordinates on the 0.25 grid in [-2, 2].
    for (double& x : v) x = 0.25 * (static_cast<double>(rng.next_below(17)) - 8.0);

    const auto w = simplex_project(v);
    double sum = 0.0;
    for (double x : w) {
      CHECK(x >= 0.0);
      sum += x;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

    // Grid with denominator 48 contains the exact projection for these inputs.
    const double oracle = simplex_grid_best_objective(v, 48);
    CHECK(objective(w, v) <= oracle + 1e-6);

    const auto w2 = simplex_project(w);
    for (std::size_t i = 0; i < w.size(); ++i) {
      CHECK(w2[i] == doctest::Approx(w[i]).epsilon(1e-12));
    }
  }
}

namespace {

ModelParams tiny_identity_model() {
  // 1x1 body (weight=1, bias=0, linear activation), head weight=2, bias=1.
  ModelParams m;
  m.activation = Activation::identity;
  m.body.push_back({Tensor::from({1, 1}, {1.0}), Tensor::from({1}, {0.0})});
  m.head = {Tensor::from({1, 1}, {2.0}), Tensor::from({1}, {1.0})};
  return m;
}

ModelParams random_model(SplitRng& rng, std::size_t input_dim = 5,
                         std::size_t hidden = 4, std::size_t classes = 3) {
  return make_mlp(input_dim, {hidden}, classes, rng);
}

Tensor random_batch(SplitRng& rng, std::size_t rows, std::size_t cols) {
  Tensor x = Tensor::zeros({rows, cols});
  for (double& v : x.data) v = rng.next_uniform(0.0, 1.0);
  return x;
}

}  // namespace

TEST_CASE("forward: zero model, identity-like model, duplicated rows") {
  SplitRng rng(5);
  ModelParams zero = random_model(rng);
  for (Tensor* t : parameter_tensors(zero)) {
    for (double& v : t->data) v = 0.0;
  }
  const Tensor batch = random_batch(rng, 3, 5);
  const ForwardResult out = forward(zero, batch);
  for (double v : out.features.data) CHECK(v == 0.0);
  for (double v : out.logits.data) CHECK(v == 0.0);

  const ModelParams tiny = tiny_identity_model();
  const ForwardResult tiny_out = forward(tiny, Tensor::from({1, 1}, {3.0}));
  CHECK(tiny_out.features.data[0] == doctest::Approx(3.0));
  CHECK(tiny_out.logits.data[0] == doctest::Approx(7.0));

  ModelParams m = random_model(rng);
  Tensor same_rows = Tensor::zeros({4, 5});
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 5; ++c) same_rows.at(r, c) = batch.at(0, c);
  }
  const ForwardResult rows_out = forward(m, same_rows);
  for (std::size_t r = 1; r < 4; ++r) {
    for (std::size_t c = 0; c < 3; ++c) {
      CHECK(rows_out.logits.at(r, c) == rows_out.logits.at(0, c));
    }
  }
}

TEST_CASE("forward: shape mismatch names the offending layer") {
  SplitRng rng(6);
  const ModelParams m = random_model(rng);
  CHECK_THROWS_WITH_AS(forward(m, Tensor::zeros({2, 7})),
                       doctest::Contains("layer 0"), DimensionError);
}

TEST_CASE("loss_and_grad: uniform softmax gives ln 2, labels validated") {
  SplitRng rng(7);
  ModelParams m = make_mlp(4, {3}, 2, rng);
  for (Tensor* t : parameter_tensors(m)) {
    for (double& v : t->data) v = 0.0;
  }
  const Tensor batch = random_batch(rng, 5, 4);
  const std::vector<int> labels{0, 1, 0, 1, 1};
  const LossGrad lg = loss_and_grad(m, batch, labels);
  CHECK(lg.loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  const std::vector<int> bad{0, 1, 2, 1, 0};
  CHECK_THROWS_WITH_AS(loss_and_grad(m, batch, bad), doctest::Contains("index 2"),
                       LabelError);
}

TEST_CASE("loss_and_grad: duplicating the batch leaves the loss unchanged") {
  SplitRng rng(8);
  const ModelParams m = random_model(rng);
  const Tensor batch = random_batch(rng, 4, 5);
  const std::vector<int> labels{0, 2, 1, 1};

  Tensor doubled = Tensor::zeros({8, 5});
  std::vector<int> doubled_labels;
  for (int rep = 0; rep < 2; ++rep) {
    for (std::size_t r = 0; r < 4; ++r) {
      for (std::size_t c = 0; c < 5; ++c) doubled.at(rep * 4 + r, c) = batch.at(r, c);
      doubled_labels.push_back(labels[r]);
    }
  }
  const double l1 = loss_and_grad(m, batch, labels).loss;
  const double l2 = loss_and_grad(m, doubled, doubled_labels).loss;
  CHECK(l1 == doctest::Approx(l2).epsilon(1e-13));
}

TEST_CASE("loss_and_grad: analytic gradient matches finite differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SplitRng rng(seed);
    const ModelParams m = random_model(rng);
    const Tensor batch = random_batch(rng, 4, 5);
    std::vector<int> labels(4);
    for (int& y : labels) y = static_cast<int>(rng.next_below(3));

    const LossGrad lg = loss_and_grad(m, batch, labels);
    const GradientBundle fd = testutil::finite_difference(
        m, [&](const ModelParams& p) { return loss_and_grad(p, batch, labels).loss; });
    CHECK(testutil::max_relative_error(lg.grad, fd) < 1e-4);
  }
}

TEST_CASE("softmax rows sum to one; cross-entropy non-negative") {
  SplitRng rng(21);
  const ModelParams m = random_model(rng);
  const Tensor batch = random_batch(rng, 6, 5);
  const ForwardResult out = forward(m, batch);
  const Tensor probs = softmax_rows(out.logits);
  for (std::size_t r = 0; r < 6; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < 3; ++c) sum += probs.at(r, c);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
  std::vector<int> labels(6, 0);
  CHECK(loss_and_grad(m, batch, labels).loss >= 0.0);
}

TEST_CASE("sgd_step: zero grad, arithmetic example, linearity") {
  SplitRng rng(9);
  const ModelParams m = random_model(rng);
  const GradientBundle zero = zero_gradients(m);
  const ModelParams after = sgd_step(m, zero, 0.1);
  CHECK(parameter_hash(after) == parameter_hash(m));

  ModelParams scalar;
  scalar.activation = Activation::identity;
  scalar.head = {Tensor::from({1, 1}, {2.0}), Tensor::from({1}, {0.0})};
  GradientBundle g;
  g.head = {Tensor::from({1, 1}, {0.5}), Tensor::from({1}, {0.0})};
  CHECK(sgd_step(scalar, g, 0.1).head.weight.data[0] == doctest::Approx(1.95));

  // Dyadic values: two steps at lr equal one step at 2*lr exactly.
  const ModelParams twice = sgd_step(sgd_step(scalar, g, 0.25), g, 0.25);
  const ModelParams once = sgd_step(scalar, g, 0.5);
  CHECK(twice.head.weight.data[0] == once.head.weight.data[0]);

  CHECK_THROWS_AS(sgd_step(scalar, g, 0.0), ArgumentError);
}

TEST_CASE("forward/loss/sgd are pure: same inputs, bit-identical outputs") {
  SplitRng rng(10);
  const ModelParams m = random_model(rng);
  const Tensor batch = random_batch(rng, 4, 5);
  const std::vector<int> labels{0, 1, 2, 0};

  const ForwardResult f1 = forward(m, batch);
  const ForwardResult f2 = forward(m, batch);
  CHECK(f1.logits.data == f2.logits.data);

  const LossGrad l1 = loss_and_grad(m, batch, labels);
  const LossGrad l2 = loss_and_grad(m, batch, labels);
  CHECK(l1.loss == l2.loss);
  CHECK(l1.grad.head.weight.data == l2.grad.head.weight.data);

  const ModelParams s1 = sgd_step(m, l1.grad, 0.05);
  const ModelParams s2 = sgd_step(m, l2.grad, 0.05);
  CHECK(parameter_hash(s1) == parameter_hash(s2));
}

TEST_CASE("make_mlp: glorot bounds and shape chaining") {
  SplitRng rng(12);
  const ModelParams m = make_mlp(10, {8}, 4, rng);
  m.validate();
  CHECK(m.input_dim() == 10);
  CHECK(m.feature_dim() == 8);
  CHECK(m.num_classes() == 4);
  const double bound = std::sqrt(6.0 / (10 + 8));
  for (double w : m.body[0].weight.data) {
    CHECK(std::abs(w) <= bound);
  }
  for (double b : m.body[0].bias.data) CHECK(b == 0.0);
}
