#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "pfl/dataset.hpp"
#include "pfl/errors.hpp"
#include "pfl/partition.hpp"
#include "pfl/rng.hpp"

using namespace pfl;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("pfl_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_be32(std::ofstream& out, std::uint32_t v) {
  const unsigned char bytes[4] = {
      static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
      static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

// Hand-built 2-image 2x2 IDX pair with known bytes.
void write_tiny_idx(const std::string& images, const std::string& labels,
                    std::uint32_t images_magic = 0x00000803,
                    std::uint32_t labels_magic = 0x00000801) {
  std::ofstream img(images, std::ios::binary);
  write_be32(img, images_magic);
  write_be32(img, 2);
  write_be32(img, 2);
  write_be32(img, 2);
  const unsigned char pixels[8] = {0, 51, 102, 255, 10, 20, 30, 40};
  img.write(reinterpret_cast<const char*>(pixels), 8);
  img.close();

  std::ofstream lbl(labels, std::ios::binary);
  write_be32(lbl, labels_magic);
  write_be32(lbl, 2);
  const unsigned char ys[2] = {3, 9};
  lbl.write(reinterpret_cast<const char*>(ys), 2);
}

}  // namespace

TEST_CASE("load_idx: hand-built pair gives exact byte/255 pixels") {
  TempDir dir;
  write_tiny_idx(dir.file("img"), dir.file("lbl"));
  const Dataset ds = load_idx(dir.file("img"), dir.file("lbl"));
  CHECK(ds.size() == 2);
  CHECK(ds.input_dim() == 4);
  CHECK(ds.num_classes == 10);
  CHECK(ds.samples.at(0, 0) == 0.0);
  CHECK(ds.samples.at(0, 1) == doctest::Approx(51.0 / 255.0));
  CHECK(ds.samples.at(0, 3) == 1.0);
  CHECK(ds.samples.at(1, 2) == doctest::Approx(30.0 / 255.0));
  CHECK(ds.labels[0] == 3);
  CHECK(ds.labels[1] == 9);
  ds.validate();
}

TEST_CASE("load_idx: wrong magic and count mismatch rejected") {
  TempDir dir;
  // Labels file carrying the images magic must be rejected.
  write_tiny_idx(dir.file("img"), dir.file("lbl"), 0x00000803, 0x00000803);
  CHECK_THROWS_AS(load_idx(dir.file("img"), dir.file("lbl")), FormatError);

  write_tiny_idx(dir.file("img2"), dir.file("lbl2"), 0x00000801, 0x00000801);
  CHECK_THROWS_AS(load_idx(dir.file("img2"), dir.file("lbl2")), FormatError);

  // Count mismatch between the two files.
  std::ofstream lbl(dir.file("lbl3"), std::ios::binary);
  write_be32(lbl, 0x00000801);
  write_be32(lbl, 5);
  const unsigned char ys[5] = {0, 1, 2, 3, 4};
  lbl.write(reinterpret_cast<const char*>(ys), 5);
  lbl.close();
  write_tiny_idx(dir.file("img3"), dir.file("unused"));
  CHECK_THROWS_AS(load_idx(dir.file("img3"), dir.file("lbl3")), FormatError);

  // Truncated image payload.
  std::ofstream img(dir.file("img4"), std::ios::binary);
  write_be32(img, 0x00000803);
  write_be32(img, 2);
  write_be32(img, 2);
  write_be32(img, 2);
  const unsigned char few[3] = {1, 2, 3};
  img.write(reinterpret_cast<const char*>(few), 3);
  img.close();
  std::ofstream l4(dir.file("lbl4"), std::ios::binary);
  write_be32(l4, 0x00000801);
  write_be32(l4, 2);
  const unsigned char ys4[2] = {0, 1};
  l4.write(reinterpret_cast<const char*>(ys4), 2);
  l4.close();
  CHECK_THROWS_AS(load_idx(dir.file("img4"), dir.file("lbl4")), IoError);
}

TEST_CASE("save_idx/load_idx round trip reproduces pixels exactly") {
  TempDir dir;
  SplitRng rng(17);
  Dataset ds;
  ds.num_classes = 10;
  ds.samples = Tensor::zeros({12, 16});
  ds.labels.resize(12);
  for (std::size_t i = 0; i < 12; ++i) {
    ds.labels[i] = static_cast<int>(rng.next_below(10));
    for (std::size_t p = 0; p < 16; ++p) {
      ds.samples.at(i, p) = static_cast<double>(rng.next_below(256)) / 255.0;
    }
  }
  save_idx(ds, dir.file("img"), dir.file("lbl"), 4, 4);
  const Dataset back = load_idx(dir.file("img"), dir.file("lbl"));
  CHECK(back.samples.data == ds.samples.data);
  CHECK(back.labels == ds.labels);
}

TEST_CASE("load_sign_csv: fixture row, remapping, errors") {
  TempDir dir;
  {
    std::ofstream csv(dir.file("sign.csv"));
    csv << "label";
    for (int i = 1; i <= 784; ++i) csv << ",pixel" << i;
    csv << "\n3";
    for (int i = 1; i <= 783; ++i) csv << ",0";
    csv << ",255\n";
    // Label 10 (K) remaps to 9 with the J gap removed.
    csv << "10";
    for (int i = 1; i <= 784; ++i) csv << ",128";
    csv << "\n";
  }
  const Dataset ds = load_sign_csv(dir.file("sign.csv"));
  CHECK(ds.size() == 2);
  CHECK(ds.num_classes == 24);
  CHECK(ds.labels[0] == 3);
  CHECK(ds.labels[1] == 9);
  CHECK(ds.samples.at(0, 783) == 1.0);
  CHECK(ds.samples.at(0, 0) == 0.0);

  {
    std::ofstream csv(dir.file("empty.csv"));
  }
  CHECK_THROWS_AS(load_sign_csv(dir.file("empty.csv")), FormatError);

  {
    std::ofstream csv(dir.file("short.csv"));
    csv << "header\n1,2,3\n";
  }
  CHECK_THROWS_WITH_AS(load_sign_csv(dir.file("short.csv")),
                       doctest::Contains("line 2"), FormatError);

  {
    std::ofstream csv(dir.file("badlabel.csv"));
    csv << "header\n9";
    for (int i = 1; i <= 784; ++i) csv << ",0";
    csv << "\n";
  }
  CHECK_THROWS_AS(load_sign_csv(dir.file("badlabel.csv")), LabelError);
}

TEST_CASE("synthetic_blobs: balance, zero-variance limit, determinism") {
  const Dataset ds = synthetic_blobs(2, 10, 4, 0.05, SplitRng(5));
  CHECK(ds.size() == 20);
  const auto hist = ds.label_histogram();
  CHECK(hist[0] == 10);
  CHECK(hist[1] == 10);
  ds.validate();

  const Dataset tight = synthetic_blobs(3, 4, 5, 1e-12, SplitRng(6));
  for (std::size_t i = 0; i < tight.size(); ++i) {
    for (int d = 0; d < 5; ++d) {
      const double expected = (d == tight.labels[i]) ? 0.9 : 0.1;
      CHECK(tight.samples.at(i, static_cast<std::size_t>(d)) ==
            doctest::Approx(expected).epsilon(1e-9));
    }
  }

  const Dataset a = synthetic_blobs(2, 50, 8, 0.2, SplitRng(7));
  const Dataset b = synthetic_blobs(2, 50, 8, 0.2, SplitRng(7));
  CHECK(a.samples.data == b.samples.data);

  CHECK_THROWS_AS(synthetic_blobs(5, 3, 4, 0.1, SplitRng(1)), ArgumentError);
  CHECK_THROWS_AS(synthetic_blobs(2, 3, 4, 0.0, SplitRng(1)), ArgumentError);
}

TEST_CASE("loaders produce pixels in [0,1] and labels in range") {
  TempDir dir;
  write_tiny_idx(dir.file("img"), dir.file("lbl"));
  for (const Dataset& ds :
       {load_idx(dir.file("img"), dir.file("lbl")),
        synthetic_blobs(3, 20, 6, 0.3, SplitRng(9))}) {
    for (double v : ds.samples.data) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    for (int y : ds.labels) {
      CHECK(y >= 0);
      CHECK(y < ds.num_classes);
    }
  }
}

TEST_CASE("sort_and_shard: paper profile shape on a synthetic stand-in") {
  const Dataset ds = synthetic_blobs(10, 1200, 10, 0.1, SplitRng(3));
  const ShardPlan plan = sort_and_shard(ds, 20, 2, 300, SplitRng(4));
  plan.validate(ds.size());
  CHECK(plan.num_clients() == 20);
  for (std::size_t c = 0; c < 20; ++c) {
    CHECK(plan.client_sample_indices(c).size() == 600);
  }
}

TEST_CASE("sort_and_shard: sorted-cut enumeration on 8 samples") {
  Dataset ds;
  ds.num_classes = 4;
  ds.labels = {0, 0, 1, 1, 2, 2, 3, 3};
  ds.samples = Tensor::zeros({8, 1});
  const ShardPlan plan = sort_and_shard(ds, 2, 2, 2, SplitRng(8));
  plan.validate(ds.size());

  for (std::size_t s = 0; s < plan.num_shards(); ++s) {
    std::set<int> labels_in_shard;
    for (std::size_t idx : plan.shard_sample_indices(s)) {
      labels_in_shard.insert(ds.labels[idx]);
    }
    CHECK(labels_in_shard.size() == 1);  // class counts equal shard size here
  }
  for (std::size_t c = 0; c < 2; ++c) {
    std::set<int> client_labels;
    for (std::size_t idx : plan.client_sample_indices(c)) {
      client_labels.insert(ds.labels[idx]);
    }
    CHECK(client_labels.size() <= 2);
  }
}

TEST_CASE("sort_and_shard: degenerate single client holds all shards") {
  Dataset ds;
  ds.num_classes = 2;
  ds.labels = {1, 0, 1, 0, 1, 0};
  ds.samples = Tensor::zeros({6, 1});
  const ShardPlan plan = sort_and_shard(ds, 1, 3, 2, SplitRng(2));
  CHECK(plan.assignments[0].size() == 3);
  std::set<std::size_t> shards(plan.assignments[0].begin(), plan.assignments[0].end());
  CHECK(shards == std::set<std::size_t>{0, 1, 2});
}

TEST_CASE("sort_and_shard: capacity error states required vs available") {
  Dataset ds;
  ds.num_classes = 2;
  ds.labels = {0, 1, 0};
  ds.samples = Tensor::zeros({3, 1});
  CHECK_THROWS_WITH_AS(sort_and_shard(ds, 2, 2, 2, SplitRng(1)),
                       doctest::Contains("need 8"), CapacityError);
}

TEST_CASE("sort_and_shard: shards are disjoint with exact sizes; stable ties") {
  const Dataset ds = synthetic_blobs(5, 40, 6, 0.2, SplitRng(12));
  const ShardPlan plan = sort_and_shard(ds, 4, 3, 10, SplitRng(13));
  std::set<std::size_t> seen;
  for (std::size_t s = 0; s < plan.num_shards(); ++s) {
    const auto indices = plan.shard_sample_indices(s);
    CHECK(indices.size() == 10);
    for (std::size_t idx : indices) {
      CHECK_FALSE(seen.contains(idx));
      seen.insert(idx);
    }
  }
  // Stable sort: within one label, original order is preserved.
  for (std::size_t i = 1; i < plan.sorted_order.size(); ++i) {
    const std::size_t a = plan.sorted_order[i - 1];
    const std::size_t b = plan.sorted_order[i];
    if (ds.labels[a] == ds.labels[b]) CHECK(a < b);
  }
}

TEST_CASE("split_client: arithmetic, minimum split, determinism") {
  const Dataset slice = synthetic_blobs(2, 5, 4, 0.1, SplitRng(20));  // 10 samples
  const ClientDataset split = split_client(slice, 0.2, SplitRng(21));
  CHECK(split.train_size() == 8);
  CHECK(split.test_size() == 2);

  const Dataset two = synthetic_blobs(2, 1, 4, 0.1, SplitRng(22));
  const ClientDataset half = split_client(two, 0.5, SplitRng(23));
  CHECK(half.train_size() == 1);
  CHECK(half.test_size() == 1);

  const ClientDataset s1 = split_client(slice, 0.3, SplitRng(24));
  const ClientDataset s2 = split_client(slice, 0.3, SplitRng(24));
  CHECK(s1.train_x.data == s2.train_x.data);
  CHECK(s1.test_y == s2.test_y);

  Dataset one;
  one.num_classes = 1;
  one.labels = {0};
  one.samples = Tensor::zeros({1, 2});
  CHECK_THROWS_AS(split_client(one, 0.2, SplitRng(25)), CapacityError);
  CHECK_THROWS_AS(split_client(slice, 0.0, SplitRng(25)), ArgumentError);
  CHECK_THROWS_AS(split_client(slice, 1.0, SplitRng(25)), ArgumentError);
}

TEST_CASE("stratified_subset keeps class proportions") {
  const Dataset ds = synthetic_blobs(4, 100, 5, 0.2, SplitRng(30));
  const Dataset sub = stratified_subset(ds, 100, SplitRng(31));
  CHECK(sub.size() == 100);
  const auto hist = sub.label_histogram();
  for (int c = 0; c < 4; ++c) CHECK(hist[static_cast<std::size_t>(c)] == 25);
}
