#pragma once

#include <span>
#include <vector>

namespace pfl {

// Confusion matrix plus the macro-averaged metric suite. Rows are truth,
// columns are predictions; macro means run over classes with support > 0.
struct MetricsReport {
  std::vector<std::vector<int>> confusion;
  std::vector<int> support;          // per-class truth counts
  std::vector<double> per_class_precision;
  std::vector<double> per_class_recall;
  std::vector<double> per_class_f1;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long long total = 0;
};

// Cell (t, p) counts samples with truth t predicted p.
std::vector<std::vector<int>> confusion_matrix(std::span<const int> truth,
                                               std::span<const int> predictions,
                                               int num_classes);

// Per-class precision/recall/F1 (0 when the denominator is 0), macro averages
// over supported classes, accuracy = trace/total. Throws on an all-zero matrix.
MetricsReport macro_metrics(const std::vector<std::vector<int>>& confusion);

}  // namespace pfl
