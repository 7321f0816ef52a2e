#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <vector>

#include "augmetrics/data.hpp"
#include "augmetrics/model.hpp"
#include "augmetrics/transforms.hpp"

namespace augmetrics {

struct LrSchedule {
  enum class Kind { Cosine, StepDecay, Constant };
  Kind kind = Kind::Cosine;
  std::int64_t decay_step = 0; // StepDecay only
  double factor = 10.0;        // StepDecay only

  static LrSchedule cosine() { return {}; }
  static LrSchedule constant() { return {Kind::Constant, 0, 1.0}; }
  static LrSchedule step_decay(std::int64_t step, double factor) {
    return {Kind::StepDecay, step, factor};
  }
  bool operator==(const LrSchedule &) const = default;
};

enum class AugmentMode { Dynamic, Static };

struct TrainConfig {
  std::int64_t steps = 3000;
  int batch_size = 64;
  double base_lr = 0.1;
  LrSchedule lr_schedule;
  double momentum = 0.9;
  double l2_coeff = 5e-4;
  std::optional<std::int64_t> l2_off_step;
  Policy policy;
  AugmentMode mode = AugmentMode::Dynamic;
  std::optional<std::int64_t> switch_off_step;
  std::uint64_t seed = 0;
  std::int64_t log_every = 10;
  /// Validation accuracy is computed on this cadence and at the last step.
  std::int64_t val_every = 250;
  double train_acc_threshold = 0.97;
  int final_loss_window = 10;
  /// Steps (in [0, steps]) at which the pre-step state is snapshotted.
  std::vector<std::int64_t> checkpoint_steps;

  void validate(std::size_t train_size) const;
  bool operator==(const TrainConfig &) const = default;
};

struct LogEntry {
  std::int64_t step = 0;
  double lr = 0.0;
  double train_loss = 0.0; // mean batch cross-entropy, regularizer excluded
  double train_acc = 0.0;
  std::optional<double> val_acc;

  bool operator==(const LogEntry &) const = default;
};

struct TrainRun {
  TrainConfig config;
  ModelSpec spec;
  Params final_params;
  std::vector<float> final_velocity;
  std::vector<LogEntry> log;
  std::map<std::int64_t, Checkpoint> checkpoints;
  std::optional<std::int64_t> steps_to_threshold;
  double final_train_loss = 0.0;
  double final_val_acc = 0.0;
  /// Number of transform applications performed while assembling each
  /// step's batch (dynamic mode).
  std::vector<std::uint32_t> augmentations_per_step;

  bool operator==(const TrainRun &) const = default;
};

double lr_at(const TrainConfig &config, std::int64_t step);

/// Index of the dataset example at flat position `position` of the training
/// stream (epoch-wise seeded permutations laid end to end).
std::size_t example_at(std::uint64_t seed, std::size_t dataset_size,
                       std::uint64_t position);

/// SGD with momentum:  v <- m v - lr g,  w <- w + v.
///
/// Datasets hold scaled values with normalization statistics attached (the
/// training split's statistics are used for both when validation has none).
/// Dynamic mode augments each batch image with a stream derived from
/// (seed, step, example index); static mode materializes the training set
/// once before step 0. From `switch_off_step` on the clean training set is
/// used; from `l2_off_step` on the L2 coefficient is zero. Throws
/// DivergenceError on a non-finite loss.
TrainRun train(const ModelSpec &spec, const LabeledDataset &train_set,
               const LabeledDataset &val_set, const TrainConfig &config);

/// Continues `run` from its checkpoint at `from_step` with augmentation
/// disabled; schedules stay functions of the absolute step.
TrainRun resume_without_augmentation(const LabeledDataset &train_set,
                                     const LabeledDataset &val_set,
                                     const TrainRun &run, std::int64_t from_step);

/// Mean train_loss over the last `window` log entries.
double trailing_train_loss(const std::vector<LogEntry> &log, int window);

std::optional<std::int64_t> first_step_reaching(const std::vector<LogEntry> &log,
                                                double threshold);

/// `step,lr,train_loss,train_acc,val_acc`; val_acc blank when not measured.
void write_log_csv(const std::vector<LogEntry> &log, const std::filesystem::path &path);
std::vector<LogEntry> read_log_csv(const std::filesystem::path &path);

} // namespace augmetrics
