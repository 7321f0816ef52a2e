#include "augmetrics/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>

#include "augmetrics/errors.hpp"
#include "augmetrics/rng.hpp"

namespace augmetrics {

bool NormalizationStats::any_fallback() const noexcept {
  return std::any_of(stddev_fallback.begin(), stddev_fallback.end(),
                     [](bool b) { return b; });
}

ImageShape LabeledDataset::shape() const {
  if (images.empty()) {
    throw ValidationError("dataset is empty; no image shape");
  }
  return images.front().shape;
}

std::vector<std::size_t> LabeledDataset::class_counts() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes), 0);
  for (int y : labels) {
    ++counts.at(static_cast<std::size_t>(y));
  }
  return counts;
}

// ---------------------------------------------------------------------------
// Binary record container

LabeledDataset load_binary_records(const std::filesystem::path &path,
                                   const RecordLayout &layout,
                                   std::size_t max_records) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError("cannot open " + path.string());
  }
  const auto file_size = std::filesystem::file_size(path);
  const std::size_t rec = layout.record_bytes();
  if (file_size % rec != 0) {
    throw FormatError(path.string() + ": size " + std::to_string(file_size) +
                      " is not a multiple of the record size " +
                      std::to_string(rec) + "; record " +
                      std::to_string(file_size / rec) + " is truncated");
  }
  const std::size_t available = file_size / rec;
  const std::size_t count = std::min(available, max_records);

  const ImageShape shape = layout.shape;
  const std::size_t plane =
      static_cast<std::size_t>(shape.height) * shape.width;

  LabeledDataset ds;
  ds.num_classes = layout.max_label + 1;
  ds.images.reserve(count);
  ds.labels.reserve(count);

  std::vector<unsigned char> buf(rec);
  for (std::size_t r = 0; r < count; ++r) {
    if (!in.read(reinterpret_cast<char *>(buf.data()),
                 static_cast<std::streamsize>(rec))) {
      throw FormatError(path.string() + ": record " + std::to_string(r) +
                        " is truncated");
    }
    const int label = buf[0];
    if (label > layout.max_label) {
      throw FormatError(path.string() + ": record " + std::to_string(r) +
                        " is corrupt (label byte " + std::to_string(label) +
                        " > " + std::to_string(layout.max_label) + ")");
    }
    Image img(shape);
    for (int c = 0; c < shape.channels; ++c) {
      for (std::size_t p = 0; p < plane; ++p) {
        img.values[p * shape.channels + c] =
            static_cast<float>(buf[1 + c * plane + p]) / 255.0f;
      }
    }
    ds.images.push_back(std::move(img));
    ds.labels.push_back(label);
  }
  return ds;
}

LabeledDataset load_cifar_binary(const std::filesystem::path &path,
                                 std::size_t max_records) {
  return load_binary_records(path, RecordLayout::cifar10(), max_records);
}

void write_binary_records(const LabeledDataset &ds,
                          const std::filesystem::path &path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw FormatError("cannot write " + path.string());
  }
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Image &img = ds.images[i];
    const int label = ds.labels[i];
    if (label < 0 || label > 255) {
      throw ValidationError("label " + std::to_string(label) +
                            " does not fit in a record byte");
    }
    const std::size_t plane =
        static_cast<std::size_t>(img.height()) * img.width();
    std::vector<unsigned char> buf(1 + img.values.size());
    buf[0] = static_cast<unsigned char>(label);
    for (int c = 0; c < img.channels(); ++c) {
      for (std::size_t p = 0; p < plane; ++p) {
        const float v = img.values[p * img.channels() + c];
        const long q = std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f);
        buf[1 + c * plane + p] = static_cast<unsigned char>(q);
      }
    }
    out.write(reinterpret_cast<const char *>(buf.data()),
              static_cast<std::streamsize>(buf.size()));
  }
}

// ---------------------------------------------------------------------------
// Gaussian mixture

GaussianMixtureSpec GaussianMixtureSpec::two_class_default(int samples_per_class) {
  GaussianMixtureSpec spec;
  spec.dim = 2;
  spec.means = {Eigen::Vector2d(-1.0, 0.0), Eigen::Vector2d(1.0, 0.0)};
  spec.covariances = {Eigen::Matrix2d::Identity(), Eigen::Matrix2d::Identity()};
  spec.samples_per_class = samples_per_class;
  return spec;
}

void GaussianMixtureSpec::validate() const {
  if (dim < 1) {
    throw ValidationError("gaussian mixture: dim must be >= 1");
  }
  if (means.size() < 2 || means.size() != covariances.size()) {
    throw ValidationError(
        "gaussian mixture: need >= 2 classes with one covariance each");
  }
  if (samples_per_class < 0) {
    throw ValidationError("gaussian mixture: samples_per_class < 0");
  }
  for (std::size_t k = 0; k < means.size(); ++k) {
    if (means[k].size() != dim || covariances[k].rows() != dim ||
        covariances[k].cols() != dim) {
      throw ValidationError("gaussian mixture: class " + std::to_string(k) +
                            " has mismatched dimensions");
    }
    const Eigen::MatrixXd &cov = covariances[k];
    if (!cov.isApprox(cov.transpose(), 1e-12)) {
      throw ValidationError("gaussian mixture: covariance " +
                            std::to_string(k) + " is not symmetric");
    }
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) {
      throw ValidationError("gaussian mixture: covariance " +
                            std::to_string(k) + " is not positive definite");
    }
  }
}

VectorDataset make_gaussian_mixture(const GaussianMixtureSpec &spec,
                                    std::uint64_t seed) {
  spec.validate();
  const int k_classes = static_cast<int>(spec.means.size());
  std::vector<Eigen::MatrixXd> chol;
  chol.reserve(spec.covariances.size());
  for (const auto &cov : spec.covariances) {
    chol.push_back(Eigen::LLT<Eigen::MatrixXd>(cov).matrixL());
  }

  VectorDataset ds;
  ds.num_classes = k_classes;
  const std::size_t total =
      static_cast<std::size_t>(spec.samples_per_class) * k_classes;
  ds.points.reserve(total);
  ds.labels.reserve(total);

  Rng rng = Rng::derive(seed, "gaussian_mixture");
  Eigen::VectorXd z(spec.dim);
  for (int i = 0; i < spec.samples_per_class; ++i) {
    for (int k = 0; k < k_classes; ++k) {
      for (int d = 0; d < spec.dim; ++d) {
        z[d] = rng.normal();
      }
      const Eigen::VectorXd x = spec.means[k] + chol[k] * z;
      ds.points.emplace_back(x.data(), x.data() + x.size());
      ds.labels.push_back(k);
    }
  }
  return ds;
}

LabeledDataset as_labeled(const VectorDataset &ds) {
  LabeledDataset out;
  out.num_classes = ds.num_classes;
  out.labels = ds.labels;
  out.images.reserve(ds.size());
  for (const auto &p : ds.points) {
    Image img(ImageShape{1, static_cast<int>(p.size()), 1});
    std::transform(p.begin(), p.end(), img.values.begin(),
                   [](double v) { return static_cast<float>(v); });
    out.images.push_back(std::move(img));
  }
  out.stats.mean = {0.0};
  out.stats.stddev = {1.0};
  out.stats.stddev_fallback = {false};
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic shapes

namespace {

struct Profile {
  double top;    // width at the top edge, relative to the shape size
  double bottom; // width at the bottom edge
  double height;
};

// Left-right symmetric profiles; pairs (0,1), (5,6), (7,8) are vertical
// mirror images of each other.
constexpr std::array<Profile, 10> kProfiles{{
    {0.10, 1.00, 1.00},
    {1.00, 0.10, 1.00},
    {0.70, 0.70, 0.70},
    {0.25, 0.25, 1.00},
    {1.00, 1.00, 0.30},
    {0.45, 1.00, 0.55},
    {1.00, 0.45, 0.55},
    {0.10, 0.55, 0.60},
    {0.55, 0.10, 0.60},
    {0.30, 1.00, 0.35},
}};

Image render_shape(const Profile &prof, int side, Rng &rng) {
  const double jitter = side / 6.0;
  const double cx = side / 2.0 + rng.uniform(-jitter, jitter);
  const double cy = side / 2.0 + rng.uniform(-jitter, jitter);
  const double size = 0.55 * side * rng.uniform(0.75, 1.25);
  const double half_h = 0.5 * prof.height * size;

  // Low-contrast draws make some examples genuinely hard.
  std::array<double, 3> bg{}, fg{};
  const double contrast = rng.uniform(0.15, 0.5);
  for (int ch = 0; ch < 3; ++ch) {
    bg[ch] = rng.uniform(0.05, 0.5);
    fg[ch] = std::clamp(bg[ch] + contrast + rng.uniform(-0.1, 0.1), 0.0, 1.0);
  }

  // Optional square distractor in a random color.
  const bool blob = rng.bernoulli(0.3);
  const int blob_side = 2 + static_cast<int>(rng.uniform_int(3));
  const int blob_r = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(side - blob_side + 1)));
  const int blob_c = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(side - blob_side + 1)));
  std::array<double, 3> blob_color{};
  for (auto &v : blob_color) v = rng.uniform(0.0, 1.0);

  Image img(ImageShape{side, side, 3});
  constexpr std::array<double, 2> kSub{0.25, 0.75};
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      int hits = 0;
      for (double sy : kSub) {
        for (double sx : kSub) {
          const double y = r + sy;
          const double x = c + sx;
          const double dy = y - (cy - half_h);
          if (dy < 0.0 || dy > 2.0 * half_h) continue;
          const double t = dy / (2.0 * half_h);
          const double w = size * (prof.top + (prof.bottom - prof.top) * t);
          if (std::abs(x - cx) <= 0.5 * w) ++hits;
        }
      }
      const double cover = hits / 4.0;
      const bool in_blob = blob && r >= blob_r && r < blob_r + blob_side && c >= blob_c &&
                           c < blob_c + blob_side;
      for (int ch = 0; ch < 3; ++ch) {
        double v = in_blob ? blob_color[ch] : bg[ch] * (1.0 - cover) + fg[ch] * cover;
        v = std::clamp(v + rng.normal(0.0, 0.06), 0.0, 1.0);
        img.at(r, c, ch) = static_cast<float>(std::round(v * 255.0) / 255.0);
      }
    }
  }
  return img;
}

} // namespace

LabeledDataset make_synthetic_images(int num_classes, int per_class, int side,
                                     std::uint64_t seed) {
  if (num_classes < 2 || num_classes > static_cast<int>(kProfiles.size())) {
    throw ValidationError("synthetic images: num_classes must be in [2, 10]");
  }
  if (side < 8) {
    throw ValidationError("synthetic images: side must be >= 8");
  }
  if (per_class < 0) {
    throw ValidationError("synthetic images: per_class must be >= 0");
  }
  LabeledDataset ds;
  ds.num_classes = num_classes;
  const std::size_t total = static_cast<std::size_t>(num_classes) * per_class;
  ds.images.reserve(total);
  ds.labels.reserve(total);
  for (std::size_t i = 0; i < total; ++i) {
    const int label = static_cast<int>(i % num_classes);
    Rng rng = Rng::derive(seed, "synthetic_image", {i});
    ds.images.push_back(render_shape(kProfiles[label], side, rng));
    ds.labels.push_back(label);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Splitting

SplitIndices balanced_split_indices(std::span<const int> labels,
                                    int num_classes, std::size_t train_size,
                                    std::size_t val_size, std::uint64_t seed) {
  const std::size_t n = labels.size();
  if (num_classes < 1) {
    throw ValidationError("split: num_classes must be >= 1");
  }
  if (train_size + val_size > n) {
    throw ValidationError("split: train_size + val_size = " +
                          std::to_string(train_size + val_size) +
                          " exceeds dataset size " + std::to_string(n));
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = Rng::derive(seed, "split_balanced");
  for (std::size_t i = n; i > 1; --i) {
    std::swap(order[i - 1], order[rng.uniform_int(i)]);
  }

  // Per-class quotas: floor(train/K), with the remainder handed to a seeded
  // random choice of classes.
  const auto k = static_cast<std::size_t>(num_classes);
  std::vector<std::size_t> quota(k, train_size / k);
  std::vector<std::size_t> class_order(k);
  std::iota(class_order.begin(), class_order.end(), std::size_t{0});
  for (std::size_t i = k; i > 1; --i) {
    std::swap(class_order[i - 1], class_order[rng.uniform_int(i)]);
  }
  for (std::size_t r = 0; r < train_size % k; ++r) {
    ++quota[class_order[r]];
  }

  std::vector<std::size_t> available(k, 0);
  for (int y : labels) {
    if (y < 0 || y >= num_classes) {
      throw ValidationError("split: label " + std::to_string(y) +
                            " out of range");
    }
    ++available[static_cast<std::size_t>(y)];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (quota[c] > available[c]) {
      throw ValidationError("split: class " + std::to_string(c) + " has " +
                            std::to_string(available[c]) +
                            " examples but the balanced training subset needs " +
                            std::to_string(quota[c]));
    }
  }

  SplitIndices out;
  out.train.reserve(train_size);
  std::vector<std::size_t> rest;
  rest.reserve(n - train_size);
  std::vector<std::size_t> taken(k, 0);
  for (std::size_t idx : order) {
    const auto y = static_cast<std::size_t>(labels[idx]);
    if (taken[y] < quota[y]) {
      ++taken[y];
      out.train.push_back(idx);
    } else {
      rest.push_back(idx);
    }
  }
  out.val.assign(rest.begin(),
                 rest.begin() + static_cast<std::ptrdiff_t>(val_size));
  return out;
}

LabeledDataset subset(const LabeledDataset &ds,
                      std::span<const std::size_t> indices) {
  LabeledDataset out;
  out.num_classes = ds.num_classes;
  out.stats = ds.stats;
  out.values_normalized = ds.values_normalized;
  out.images.reserve(indices.size());
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) {
    out.images.push_back(ds.images.at(i));
    out.labels.push_back(ds.labels.at(i));
  }
  return out;
}

Split split_balanced(const LabeledDataset &ds, std::size_t train_size,
                     std::size_t val_size, std::uint64_t seed) {
  const SplitIndices idx = balanced_split_indices(ds.labels, ds.num_classes,
                                                  train_size, val_size, seed);
  return {subset(ds, idx.train), subset(ds, idx.val)};
}

// ---------------------------------------------------------------------------
// Normalization

NormalizationStats fit_normalization(const LabeledDataset &ds) {
  const ImageShape shape = ds.shape();
  const auto channels = static_cast<std::size_t>(shape.channels);
  std::vector<double> sum(channels, 0.0);
  std::vector<std::size_t> count(channels, 0);
  for (const Image &img : ds.images) {
    for (std::size_t i = 0; i < img.values.size(); ++i) {
      sum[i % channels] += img.values[i];
      ++count[i % channels];
    }
  }
  NormalizationStats stats;
  stats.mean.resize(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    stats.mean[c] = sum[c] / static_cast<double>(count[c]);
  }
  // Second pass for a numerically stable variance.
  std::vector<double> sq(channels, 0.0);
  for (const Image &img : ds.images) {
    for (std::size_t i = 0; i < img.values.size(); ++i) {
      const double d = img.values[i] - stats.mean[i % channels];
      sq[i % channels] += d * d;
    }
  }
  stats.stddev.resize(channels);
  stats.stddev_fallback.assign(channels, false);
  for (std::size_t c = 0; c < channels; ++c) {
    const double sd = std::sqrt(sq[c] / static_cast<double>(count[c]));
    if (sd > 0.0) {
      stats.stddev[c] = sd;
    } else {
      stats.stddev[c] = 1.0;
      stats.stddev_fallback[c] = true;
    }
  }
  return stats;
}

LabeledDataset normalize_with(const LabeledDataset &ds,
                              const NormalizationStats &stats) {
  if (ds.values_normalized) {
    throw ValidationError("normalize: dataset is already normalized");
  }
  LabeledDataset out = ds;
  for (Image &img : out.images) {
    write_model_input(img, stats, false, img.values);
  }
  out.stats = stats;
  out.values_normalized = true;
  return out;
}

LabeledDataset normalize(const LabeledDataset &ds) {
  return normalize_with(ds, fit_normalization(ds));
}

LabeledDataset with_stats(LabeledDataset ds, const NormalizationStats &stats) {
  ds.stats = stats;
  return ds;
}

void write_model_input(const Image &img, const NormalizationStats &stats,
                       bool already_normalized, std::span<float> out) {
  const std::size_t n = img.values.size();
  if (already_normalized || !stats.fitted()) {
    std::copy(img.values.begin(), img.values.end(), out.begin());
    return;
  }
  const auto channels = static_cast<std::size_t>(img.channels());
  if (stats.mean.size() != channels) {
    throw ValidationError("normalization stats have " +
                          std::to_string(stats.mean.size()) +
                          " channels, image has " + std::to_string(channels));
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % channels;
    out[i] = static_cast<float>((img.values[i] - stats.mean[c]) / stats.stddev[c]);
  }
}

} // namespace augmetrics
