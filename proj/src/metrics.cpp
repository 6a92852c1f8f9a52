#include "pfl/metrics.hpp"

#include <string>

#include "pfl/errors.hpp"

namespace pfl {

std::vector<std::vector<int>> confusion_matrix(std::span<const int> truth,
                                               std::span<const int> predictions,
                                               int num_classes) {
  if (truth.size() != predictions.size()) {
    throw ArgumentError("confusion_matrix: truth length " + std::to_string(truth.size()) +
                        " != predictions length " + std::to_string(predictions.size()));
  }
  if (num_classes <= 0) throw ArgumentError("confusion_matrix: num_classes must be positive");
  std::vector<std::vector<int>> matrix(
      static_cast<std::size_t>(num_classes),
      std::vector<int>(static_cast<std::size_t>(num_classes), 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i];
    const int p = predictions[i];
    if (t < 0 || t >= num_classes || p < 0 || p >= num_classes) {
      throw LabelError("confusion_matrix: index out of range at sample " + std::to_string(i));
    }
    ++matrix[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
  }
  return matrix;
}

MetricsReport macro_metrics(const std::vector<std::vector<int>>& confusion) {
  const std::size_t classes = confusion.size();
  if (classes == 0) throw ArgumentError("macro_metrics: empty confusion matrix");

  long long total = 0;
  long long diag = 0;
  for (std::size_t t = 0; t < classes; ++t) {
    if (confusion[t].size() != classes) {
      throw DimensionError("macro_metrics: confusion matrix is not square");
    }
    for (std::size_t p = 0; p < classes; ++p) {
      if (confusion[t][p] < 0) throw ArgumentError("macro_metrics: negative cell");
      total += confusion[t][p];
    }
    diag += confusion[t][t];
  }
  if (total == 0) throw ArgumentError("macro_metrics: all-zero confusion matrix");

  MetricsReport report;
  report.confusion = confusion;
  report.total = total;
  report.support.resize(classes);
  report.per_class_precision.assign(classes, 0.0);
  report.per_class_recall.assign(classes, 0.0);
  report.per_class_f1.assign(classes, 0.0);

  double sum_p = 0.0, sum_r = 0.0, sum_f = 0.0;
  int supported = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    long long tp = confusion[c][c];
    long long fp = 0, fn = 0;
    for (std::size_t o = 0; o < classes; ++o) {
      if (o == c) continue;
      fp += confusion[o][c];
      fn += confusion[c][o];
    }
    report.support[c] = static_cast<int>(tp + fn);
    const double precision =
        (tp + fp) == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall =
        (tp + fn) == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    const double f1 =
        (precision + recall) == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
    report.per_class_precision[c] = precision;
    report.per_class_recall[c] = recall;
    report.per_class_f1[c] = f1;
    if (report.support[c] > 0) {
      sum_p += precision;
      sum_r += recall;
      sum_f += f1;
      ++supported;
    }
  }

  report.accuracy = static_cast<double>(diag) / static_cast<double>(total);
  report.precision = supported > 0 ? sum_p / supported : 0.0;
  report.recall = supported > 0 ? sum_r / supported : 0.0;
  report.f1 = supported > 0 ? sum_f / supported : 0.0;
  return report;
}

}  // namespace pfl
