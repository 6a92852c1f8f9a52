#include "pfl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>

#include "pfl/errors.hpp"

namespace pfl {

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

std::uint32_t read_be32(std::istream& in, const std::string& path) {
  unsigned char bytes[4];
  in.read(reinterpret_cast<char*>(bytes), 4);
  if (!in) throw IoError("truncated file: " + path);
  return (std::uint32_t(bytes[0]) << 24) | (std::uint32_t(bytes[1]) << 16) |
         (std::uint32_t(bytes[2]) << 8) | std::uint32_t(bytes[3]);
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const unsigned char bytes[4] = {
      static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
      static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

}  // namespace

void Dataset::validate() const {
  samples.check();
  if (samples.rank() != 2 || samples.rows() != labels.size()) {
    throw DimensionError("dataset: samples/labels row count mismatch");
  }
  if (num_classes <= 0) throw ArgumentError("dataset: num_classes must be positive");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw LabelError("dataset: label " + std::to_string(labels[i]) + " at row " +
                       std::to_string(i) + " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
  for (double v : samples.data) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ArgumentError("dataset: sample value outside [0,1]");
    }
  }
}

std::vector<int> Dataset::label_histogram() const {
  std::vector<int> hist(static_cast<std::size_t>(num_classes), 0);
  for (int y : labels) ++hist[static_cast<std::size_t>(y)];
  return hist;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream images(images_path, std::ios::binary);
  if (!images) throw IoError("cannot open images file: " + images_path);
  std::ifstream labels(labels_path, std::ios::binary);
  if (!labels) throw IoError("cannot open labels file: " + labels_path);

  const std::uint32_t img_magic = read_be32(images, images_path);
  if (img_magic != kImagesMagic) {
    std::ostringstream msg;
    msg << "bad images magic 0x" << std::hex << img_magic << " in " << images_path;
    throw FormatError(msg.str());
  }
  const std::uint32_t lbl_magic = read_be32(labels, labels_path);
  if (lbl_magic != kLabelsMagic) {
    std::ostringstream msg;
    msg << "bad labels magic 0x" << std::hex << lbl_magic << " in " << labels_path;
    throw FormatError(msg.str());
  }

  const std::uint32_t img_count = read_be32(images, images_path);
  const std::uint32_t rows = read_be32(images, images_path);
  const std::uint32_t cols = read_be32(images, images_path);
  const std::uint32_t lbl_count = read_be32(labels, labels_path);
  if (img_count != lbl_count) {
    throw FormatError("image count " + std::to_string(img_count) + " != label count " +
                      std::to_string(lbl_count));
  }

  const std::size_t dim = std::size_t(rows) * std::size_t(cols);
  Dataset out;
  out.num_classes = 10;
  out.samples = Tensor::zeros({img_count, dim});
  out.labels.resize(img_count);

  std::vector<unsigned char> buf(dim);
  for (std::uint32_t i = 0; i < img_count; ++i) {
    images.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(dim));
    if (!images) throw IoError("truncated image data: " + images_path);
    double* row = out.samples.data.data() + std::size_t(i) * dim;
    for (std::size_t p = 0; p < dim; ++p) row[p] = buf[p] / 255.0;
  }
  for (std::uint32_t i = 0; i < lbl_count; ++i) {
    unsigned char y;
    labels.read(reinterpret_cast<char*>(&y), 1);
    if (!labels) throw IoError("truncated label data: " + labels_path);
    if (y > 9) throw LabelError("idx label " + std::to_string(int(y)) + " outside [0,10)");
    out.labels[i] = int(y);
  }
  return out;
}

void save_idx(const Dataset& dataset, const std::string& images_path,
              const std::string& labels_path, std::size_t image_rows,
              std::size_t image_cols) {
  if (image_rows * image_cols != dataset.input_dim()) {
    throw DimensionError("save_idx: rows*cols != input_dim");
  }
  std::ofstream images(images_path, std::ios::binary);
  if (!images) throw IoError("cannot write images file: " + images_path);
  std::ofstream labels(labels_path, std::ios::binary);
  if (!labels) throw IoError("cannot write labels file: " + labels_path);

  const std::size_t n = dataset.size();
  write_be32(images, kImagesMagic);
  write_be32(images, static_cast<std::uint32_t>(n));
  write_be32(images, static_cast<std::uint32_t>(image_rows));
  write_be32(images, static_cast<std::uint32_t>(image_cols));
  std::vector<unsigned char> buf(dataset.input_dim());
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = dataset.samples.data.data() + i * buf.size();
    for (std::size_t p = 0; p < buf.size(); ++p) {
      buf[p] = static_cast<unsigned char>(std::lround(row[p] * 255.0));
    }
    images.write(reinterpret_cast<const char*>(buf.data()),
                 static_cast<std::streamsize>(buf.size()));
  }

  write_be32(labels, kLabelsMagic);
  write_be32(labels, static_cast<std::uint32_t>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char y = static_cast<unsigned char>(dataset.labels[i]);
    labels.write(reinterpret_cast<const char*>(&y), 1);
  }
  if (!images || !labels) throw IoError("write failure in save_idx");
}

Dataset load_sign_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open csv file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty csv file: " + path);

  std::vector<double> pixels;
  std::vector<int> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::size_t fields = 0;
    int label = -1;
    std::size_t pos = 0;
    const std::size_t row_start = pixels.size();
    while (pos <= line.size()) {
      std::size_t comma = line.find(',', pos);
      if (comma == std::string::npos) comma = line.size();
      const std::string field = line.substr(pos, comma - pos);
      int value = 0;
      try {
        value = std::stoi(field);
      } catch (const std::exception&) {
        throw FormatError("line " + std::to_string(line_no) + ": non-numeric field '" +
                          field + "' in " + path);
      }
      if (fields == 0) {
        label = value;
      } else {
        if (value < 0 || value > 255) {
          throw FormatError("line " + std::to_string(line_no) + ": pixel value " +
                            std::to_string(value) + " outside 0-255");
        }
        pixels.push_back(value / 255.0);
      }
      ++fields;
      pos = comma + 1;
      if (comma == line.size()) break;
    }
    if (fields != 785) {
      throw FormatError("line " + std::to_string(line_no) + ": expected 785 fields, got " +
                        std::to_string(fields));
    }
    // Alphabet labels are 0-24 with 9 (J) absent; remap to contiguous 0-23.
    if (label < 0 || label > 24 || label == 9) {
      throw LabelError("line " + std::to_string(line_no) + ": label " +
                       std::to_string(label) + " outside the sign alphabet");
    }
    labels.push_back(label < 9 ? label : label - 1);
    (void)row_start;
  }

  Dataset out;
  out.num_classes = 24;
  out.labels = std::move(labels);
  out.samples = Tensor::from({out.labels.size(), 784}, std::move(pixels));
  return out;
}

Dataset synthetic_blobs(int num_classes, int per_class, int dim, double spread,
                        SplitRng rng) {
  if (num_classes < 1 || per_class < 1 || dim < 1) {
    throw ArgumentError("synthetic_blobs: counts must be >= 1");
  }
  if (spread <= 0.0) throw ArgumentError("synthetic_blobs: spread must be positive");
  if (dim < num_classes) {
    throw ArgumentError("synthetic_blobs: dim " + std::to_string(dim) +
                        " < num_classes " + std::to_string(num_classes) +
                        " (centers need distinct axes)");
  }

  const std::size_t n = std::size_t(num_classes) * std::size_t(per_class);
  Dataset out;
  out.num_classes = num_classes;
  out.samples = Tensor::zeros({n, std::size_t(dim)});
  out.labels.resize(n);

  // Class k centered at 0.1 everywhere except 0.9 on axis k; clamped samples
  // stay in [0,1] and collapse onto the center as spread -> 0.
  std::size_t row = 0;
  for (int k = 0; k < num_classes; ++k) {
    for (int s = 0; s < per_class; ++s, ++row) {
      double* x = out.samples.data.data() + row * std::size_t(dim);
      for (int d = 0; d < dim; ++d) {
        const double center = (d == k) ? 0.9 : 0.1;
        x[d] = std::clamp(center + spread * rng.next_gaussian(), 0.0, 1.0);
      }
      out.labels[row] = k;
    }
  }
  return out;
}

Dataset subset(const Dataset& dataset, std::span<const std::size_t> indices) {
  const std::size_t dim = dataset.input_dim();
  Dataset out;
  out.num_classes = dataset.num_classes;
  out.samples = Tensor::zeros({indices.size(), dim});
  out.labels.resize(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t src = indices[i];
    if (src >= dataset.size()) throw ArgumentError("subset: index out of range");
    std::copy_n(dataset.samples.data.data() + src * dim, dim,
                out.samples.data.data() + i * dim);
    out.labels[i] = dataset.labels[src];
  }
  return out;
}

Dataset stratified_subset(const Dataset& dataset, std::size_t target, SplitRng rng) {
  if (target == 0 || target > dataset.size()) {
    throw ArgumentError("stratified_subset: target outside (0, N]");
  }
  std::vector<std::vector<std::size_t>> by_class(
      static_cast<std::size_t>(dataset.num_classes));
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    by_class[static_cast<std::size_t>(dataset.labels[i])].push_back(i);
  }
  for (auto& group : by_class) rng.shuffle(group);

  // Proportional allocation, then largest-remainder fill to hit the target.
  const double scale = static_cast<double>(target) / static_cast<double>(dataset.size());
  std::vector<std::size_t> take(by_class.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    const double exact = scale * static_cast<double>(by_class[c].size());
    take[c] = std::min(by_class[c].size(), static_cast<std::size_t>(exact));
    assigned += take[c];
    remainders.emplace_back(exact - std::floor(exact), c);
  }
  std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (const auto& [frac, c] : remainders) {
    if (assigned >= target) break;
    if (take[c] < by_class[c].size()) {
      ++take[c];
      ++assigned;
    }
  }
  // Top up from any class with spare samples if rounding fell short.
  for (std::size_t c = 0; assigned < target && c < by_class.size(); ++c) {
    while (assigned < target && take[c] < by_class[c].size()) {
      ++take[c];
      ++assigned;
    }
  }

  std::vector<std::size_t> indices;
  indices.reserve(target);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    indices.insert(indices.end(), by_class[c].begin(), by_class[c].begin() + take[c]);
  }
  std::sort(indices.begin(), indices.end());
  return subset(dataset, indices);
}

}  // namespace pfl
