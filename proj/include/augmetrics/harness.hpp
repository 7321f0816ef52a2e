#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "augmetrics/data.hpp"
#include "augmetrics/metrics.hpp"
#include "augmetrics/model.hpp"
#include "augmetrics/toygauss.hpp"
#include "augmetrics/trainer.hpp"
#include "augmetrics/transforms.hpp"

namespace augmetrics {

inline constexpr std::string_view kToolVersion = "augmetrics 0.1.0";

enum class Task { Affinity, Diversity, Entropy, SwitchOff, StaticCompare, ToyGauss };

std::string_view to_string(Task task) noexcept;
Task task_from_string(std::string_view name);

struct DatasetConfig {
  std::string source = "synthetic"; // "synthetic" or "cifar10"
  /// cifar10: directory holding data_batch_*.bin and test_batch.bin.
  std::filesystem::path path;
  int num_classes = 10;
  int side = 16; // synthetic only
  std::size_t train_size = 4096;
  std::size_t val_size = 1024;
  std::size_t test_size = 1024;
  std::uint64_t seed = 0;
};

struct ModelConfig {
  Architecture architecture = Architecture::TinyCNN;
  int hidden_width = 64;
  int conv_channels = 8;
  double init_scale = 1.0;

  ModelSpec spec_for(ImageShape shape, int num_classes) const;
};

struct SwitchOffConfig {
  /// Explicit candidate steps; when empty `count` steps are spread evenly
  /// between `from` and `to` (fractions of the run length).
  std::vector<std::int64_t> steps;
  int count = 6;
  double from = 0.3;
  double to = 0.95;

  std::vector<std::int64_t> candidates(std::int64_t total_steps) const;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  ModelConfig model;
  TrainConfig train; // policy, mode, seed and switch-off step are per run
  std::vector<Policy> policies;
  std::vector<std::uint64_t> seeds;
  std::set<Task> tasks{Task::Affinity, Task::Diversity, Task::Entropy};
  SwitchOffConfig switchoff;
  ToyConfig toy;
  std::filesystem::path outputs = "results";

  /// Parses and type-checks; cross-field checks are left to validate().
  /// Throws ValidationError naming the offending field.
  static ExperimentConfig from_json(const nlohmann::json &j);
  static ExperimentConfig load(const std::filesystem::path &path);
  /// Fully resolved configuration, every default spelled out.
  nlohmann::json to_json() const;
  void validate() const;
  /// Hash of everything that affects results (outputs excluded).
  std::uint64_t hash() const;
};

/// Train, validation and test splits sharing the training statistics.
struct ExperimentData {
  LabeledDataset train;
  LabeledDataset val;
  LabeledDataset test;
};

ExperimentData prepare_data(const DatasetConfig &cfg);

struct RunOptions {
  int jobs = 1;
  /// Stop after executing this many new runs (cached runs are free).
  std::optional<std::size_t> run_budget;
  std::function<void(const std::string &)> progress;
};

struct ExperimentOutcome {
  std::vector<MetricsRecord> records;
  std::size_t executed = 0;
  std::size_t cached = 0;
  std::size_t failed = 0;
  /// False when the run budget stopped the sweep before aggregation.
  bool complete = false;
  std::filesystem::path results_dir;
};

/// Executes (or reuses) every run the configured tasks need and writes
/// results.csv, per-run directories under runs/, task-specific tables and a
/// manifest. Runs whose directory holds a summary with a matching key are
/// not retrained.
ExperimentOutcome run_experiment(const ExperimentConfig &cfg, const RunOptions &options = {});

/// Filesystem-safe directory name for a policy label.
std::string policy_slug(const std::string &label);

struct ReportOutputs {
  std::filesystem::path scatter;
  std::vector<std::filesystem::path> switch_off_curves;
  std::filesystem::path table;
  std::string table_text;
};

/// Reads results.csv (and switchoff.csv when present) from `results_dir` and
/// writes scatter.tsv, curves/<policy>.tsv and summary.txt into `out_dir`.
ReportOutputs report(const std::filesystem::path &results_dir,
                     const std::filesystem::path &out_dir);

/// Writes `content` to `path` through a temporary file and rename.
void write_file_atomic(const std::filesystem::path &path, const std::string &content);

} // namespace augmetrics
