#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace augmetrics {

struct ImageShape {
  int height = 0;
  int width = 0;
  int channels = 0;

  std::size_t size() const noexcept {
    return static_cast<std::size_t>(height) * width * channels;
  }
  bool operator==(const ImageShape &) const = default;
};

/// H x W x C image, values stored row-major as (row, col, channel).
struct Image {
  ImageShape shape;
  std::vector<float> values;

  Image() = default;
  explicit Image(ImageShape s, float fill = 0.0f)
      : shape(s), values(s.size(), fill) {}

  int height() const noexcept { return shape.height; }
  int width() const noexcept { return shape.width; }
  int channels() const noexcept { return shape.channels; }

  float &at(int row, int col, int ch) noexcept {
    return values[(static_cast<std::size_t>(row) * shape.width + col) *
                      shape.channels +
                  ch];
  }
  float at(int row, int col, int ch) const noexcept {
    return values[(static_cast<std::size_t>(row) * shape.width + col) *
                      shape.channels +
                  ch];
  }

  bool operator==(const Image &) const = default;
};

/// Per-channel statistics used to normalize model inputs.
struct NormalizationStats {
  std::vector<double> mean;
  std::vector<double> stddev;
  /// Set for channels whose fitted std was zero and was replaced by 1.
  std::vector<bool> stddev_fallback;

  bool fitted() const noexcept { return !mean.empty(); }
  bool any_fallback() const noexcept;
  bool operator==(const NormalizationStats &) const = default;
};

/// Images with class labels. Values live in scaled [0, 1] space unless
/// `values_normalized` is set; `stats` carries the constants every consumer
/// (training, evaluation, Cutout fill) must use.
struct LabeledDataset {
  std::vector<Image> images;
  std::vector<int> labels;
  int num_classes = 0;
  NormalizationStats stats;
  bool values_normalized = false;

  std::size_t size() const noexcept { return images.size(); }
  bool empty() const noexcept { return images.empty(); }
  ImageShape shape() const;
  std::vector<std::size_t> class_counts() const;

  bool operator==(const LabeledDataset &) const = default;
};

struct GaussianMixtureSpec {
  int dim = 2;
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covariances;
  int samples_per_class = 0;

  /// Two classes at +/-(1, 0) with identity covariance.
  static GaussianMixtureSpec two_class_default(int samples_per_class);
  void validate() const;
};

struct VectorDataset {
  std::vector<std::vector<double>> points;
  std::vector<int> labels;
  int num_classes = 0;

  std::size_t size() const noexcept { return points.size(); }
  bool operator==(const VectorDataset &) const = default;
};

/// Record layout of the CIFAR-style binary container: one label byte then
/// `shape.size()` pixel bytes stored as one row-major plane per channel.
struct RecordLayout {
  ImageShape shape{32, 32, 3};
  int max_label = 9;

  std::size_t record_bytes() const noexcept { return 1 + shape.size(); }
  static RecordLayout cifar10() { return {}; }
};

LabeledDataset load_binary_records(const std::filesystem::path &path,
                                   const RecordLayout &layout,
                                   std::size_t max_records);

/// CIFAR-10 binary batch (3073-byte records). Pixels are scaled by 1/255.
LabeledDataset load_cifar_binary(const std::filesystem::path &path,
                                 std::size_t max_records);

/// Writes `ds` in the record container. Values are quantized to k/255, so
/// datasets whose values are already on that grid round-trip exactly.
void write_binary_records(const LabeledDataset &ds,
                          const std::filesystem::path &path);

VectorDataset make_gaussian_mixture(const GaussianMixtureSpec &spec,
                                    std::uint64_t seed);

/// Wraps each point as a 1 x dim x 1 image with identity normalization so
/// vector data can go through the same training path as images.
LabeledDataset as_labeled(const VectorDataset &ds);

/// Procedural shape-classification task: each class is a vertically oriented
/// trapezoid profile (left-right symmetric, generally not up-down symmetric)
/// rendered with position, scale, color and pixel noise. Three channels,
/// values on the k/255 grid. Labels cycle 0..num_classes-1.
LabeledDataset make_synthetic_images(int num_classes, int per_class, int side,
                                     std::uint64_t seed);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  bool operator==(const SplitIndices &) const = default;
};

/// Seeded shuffle, then a class-balanced training subset (per-class counts
/// differ by at most one); validation comes from the remaining shuffled pool.
SplitIndices balanced_split_indices(std::span<const int> labels,
                                    int num_classes, std::size_t train_size,
                                    std::size_t val_size, std::uint64_t seed);

struct Split {
  LabeledDataset train;
  LabeledDataset val;
};

Split split_balanced(const LabeledDataset &ds, std::size_t train_size,
                     std::size_t val_size, std::uint64_t seed);

LabeledDataset subset(const LabeledDataset &ds,
                      std::span<const std::size_t> indices);

/// Per-channel mean/std over every pixel of `ds` (scaled values). A zero std
/// is replaced by 1 and flagged.
NormalizationStats fit_normalization(const LabeledDataset &ds);

/// Fits statistics on `ds` and returns it normalized, stats attached.
LabeledDataset normalize(const LabeledDataset &ds);

/// Normalizes `ds` with externally supplied statistics (e.g. a validation
/// split using training statistics).
LabeledDataset normalize_with(const LabeledDataset &ds,
                              const NormalizationStats &stats);

/// Attaches statistics without touching values; consumers normalize lazily.
LabeledDataset with_stats(LabeledDataset ds, const NormalizationStats &stats);

/// Writes the model input for `img` into `out`: normalized with `stats` unless
/// the values are already normalized or no stats are fitted.
void write_model_input(const Image &img, const NormalizationStats &stats,
                       bool already_normalized, std::span<float> out);

} // namespace augmetrics
