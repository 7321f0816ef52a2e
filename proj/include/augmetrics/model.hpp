#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "augmetrics/data.hpp"
#include "augmetrics/rng.hpp"

namespace augmetrics {

enum class Architecture { Linear, MLP, TinyCNN };

std::string_view to_string(Architecture arch) noexcept;
Architecture architecture_from_string(std::string_view name);

/// Linear softmax, one-hidden-layer tanh MLP, or a tiny CNN
/// (3x3 same-padded conv, tanh, 2x2 average pool, linear head).
struct ModelSpec {
  Architecture architecture = Architecture::Linear;
  int hidden_width = 0;  // MLP only
  int conv_channels = 0; // TinyCNN only
  ImageShape input_shape;
  int num_classes = 2;
  double init_scale = 1.0;

  static ModelSpec linear(ImageShape input, int num_classes);
  static ModelSpec mlp(ImageShape input, int num_classes, int hidden_width);
  static ModelSpec tiny_cnn(ImageShape input, int num_classes, int conv_channels);

  void validate() const;
  std::size_t input_size() const noexcept { return input_shape.size(); }
  /// Stable textual description; hashed into checkpoint headers.
  std::string describe() const;
  std::uint64_t hash() const;

  bool operator==(const ModelSpec &) const = default;
};

struct LayerSlice {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
  /// Weights take L2 regularization; biases do not.
  bool is_weight = false;

  bool operator==(const LayerSlice &) const = default;
};

/// Flat parameter vector plus a name -> slice layout.
struct Params {
  std::vector<float> values;
  std::vector<LayerSlice> layout;

  std::size_t size() const noexcept { return values.size(); }
  const LayerSlice &slice(std::string_view name) const;
  std::span<float> view(std::string_view name);
  std::span<const float> view(std::string_view name) const;
  bool all_finite() const noexcept;

  bool operator==(const Params &) const = default;
};

std::vector<LayerSlice> layout_for(const ModelSpec &spec);

/// Zero-mean Gaussian weights scaled by init_scale / sqrt(fan_in); zero
/// biases. Deterministic per seed.
Params init(const ModelSpec &spec, std::uint64_t seed);

/// Row-major inputs (one model input per row) and labels.
struct Batch {
  std::span<const float> inputs;
  std::span<const int> labels;

  std::size_t size() const noexcept { return labels.size(); }
};

struct BatchEval {
  std::vector<double> logits; // size() x num_classes
  double loss = 0.0;          // mean cross-entropy + l2/2 * ||weights||^2
  double data_loss = 0.0;     // mean cross-entropy only
  double accuracy = 0.0;
  std::vector<double> grad;   // empty unless requested
};

/// Forward pass, loss and (optionally) the exact gradient. Accuracy ties go
/// to the lowest class index. Throws NumericalError naming the first
/// example with a non-finite input.
BatchEval evaluate(const ModelSpec &spec, const Params &params,
                   const Batch &batch, double l2_coeff, bool want_grad);

/// Per-example results over a whole dataset, inputs normalized with the
/// dataset's attached statistics.
struct DatasetEval {
  std::vector<int> predictions;
  std::vector<bool> correct;
  std::vector<double> log_sum_exp;
  double accuracy = 0.0;
  double mean_log_sum_exp = 0.0;
};

DatasetEval evaluate_dataset(const ModelSpec &spec, const Params &params,
                             const LabeledDataset &ds);

double accuracy(const ModelSpec &spec, const Params &params,
                const LabeledDataset &ds);

/// Mean over examples of logsumexp(logits), max-subtracted.
double mean_log_likelihood(const ModelSpec &spec, const Params &params,
                           const LabeledDataset &ds);

/// Stable logsumexp of one logit row.
double log_sum_exp(std::span<const double> logits) noexcept;

/// Training state snapshot. Little-endian on disk; round-trips bit-exactly.
struct Checkpoint {
  std::int64_t step = 0;
  std::uint64_t spec_hash = 0;
  Rng::State rng_state{};
  Params params;
  std::vector<float> velocity;

  bool operator==(const Checkpoint &) const = default;
};

void write_checkpoint(const std::filesystem::path &path, const Checkpoint &ckpt);
Checkpoint read_checkpoint(const std::filesystem::path &path);

} // namespace augmetrics
