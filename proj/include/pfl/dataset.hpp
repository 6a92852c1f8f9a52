#pragma once

#include <span>
#include <string>
#include <vector>

#include "pfl/rng.hpp"
#include "pfl/tensor.hpp"

namespace pfl {

// Labeled sample matrix with pixel/feature values in [0, 1].
struct Dataset {
  Tensor samples;           // [N x input_dim]
  std::vector<int> labels;  // N class indices
  int num_classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t input_dim() const { return samples.rank() == 2 ? samples.cols() : 0; }

  void validate() const;

  std::vector<int> label_histogram() const;
};

// IDX pair reader (big-endian; images magic 0x00000803, labels 0x00000801).
// Pixels are scaled to [0,1] as byte/255; num_classes = 10.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// IDX pair writer, the exact inverse of load_idx for byte-grid pixel values.
void save_idx(const Dataset& dataset, const std::string& images_path,
              const std::string& labels_path, std::size_t image_rows,
              std::size_t image_cols);

// Sign-MNIST CSV: header line, then rows of label,pixel1..pixel784 (0-255).
// The 24-letter alphabet (0-24 skipping 9) is remapped to contiguous 0-23.
Dataset load_sign_csv(const std::string& path);

// Gaussian clusters, one per class, centered on scaled unit axes; samples are
// clamped to [0,1]. Deterministic in the rng.
Dataset synthetic_blobs(int num_classes, int per_class, int dim, double spread,
                        SplitRng rng);

// Rows of `dataset` at `indices`, in order.
Dataset subset(const Dataset& dataset, std::span<const std::size_t> indices);

// Class-proportional random subset of `target` samples.
Dataset stratified_subset(const Dataset& dataset, std::size_t target, SplitRng rng);

}  // namespace pfl
