#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "augmetrics/data.hpp"
#include "augmetrics/model.hpp"
#include "augmetrics/trainer.hpp"
#include "augmetrics/transforms.hpp"

namespace augmetrics {

/// One results row. Unset fields are written as blank cells.
struct MetricsRecord {
  std::string policy_label;
  std::optional<double> affinity; // accuracy fraction
  std::optional<double> affinity_sem;
  std::optional<double> diversity_loss;
  std::optional<double> diversity_entropy; // nats
  std::optional<std::int64_t> steps_to_threshold;
  std::optional<double> test_acc;
  std::optional<double> test_acc_sem;
  std::optional<double> switch_off_lift;
  std::optional<std::int64_t> best_switch_step;
  int num_seeds = 0;

  bool operator==(const MetricsRecord &) const = default;
};

struct AffinityResult {
  double clean_acc = 0.0;
  double augmented_acc = 0.0;
  double value = 0.0; // augmented_acc - clean_acc
  /// Per validation example: correct(augmented) - correct(clean), in {-1,0,1}.
  std::vector<int> per_example;
};

/// Accuracy of one clean model on a static augmented pass over `val` minus
/// its accuracy on `val`.
AffinityResult affinity_detail(const ModelSpec &spec, const Params &params,
                               const LabeledDataset &val, const Policy &policy,
                               std::uint64_t seed);
double affinity(const ModelSpec &spec, const Params &params,
                const LabeledDataset &val, const Policy &policy, std::uint64_t seed);

/// Baseline-referenced mean logsumexp(logits): augmented minus clean.
double log_likelihood_shift(const ModelSpec &spec, const Params &params,
                            const LabeledDataset &val, const Policy &policy,
                            std::uint64_t seed);

/// What aggregation needs from one finished (or diverged) run.
struct RunSummary {
  std::uint64_t seed = 0;
  bool diverged = false;
  std::optional<std::int64_t> diverged_at;
  double final_train_loss = 0.0;
  double final_val_acc = 0.0;
  double test_acc = 0.0;
  std::optional<std::int64_t> steps_to_threshold;

  bool operator==(const RunSummary &) const = default;
};

RunSummary summarize(const TrainRun &run, double test_acc);
RunSummary diverged_summary(std::uint64_t seed, std::int64_t step);

/// Mean final training loss over runs; nullopt when any run diverged.
std::optional<double> diversity_loss(std::span<const RunSummary> runs);
std::optional<double> diversity_loss(std::span<const TrainRun> runs);

/// Sum of outcome entropies of the policy's constituents. Throws
/// NotDiscreteError if any constituent has continuous randomness.
double diversity_entropy(const Policy &policy, const ImageShape &shape);
/// True when diversity_entropy is defined for the policy.
bool entropy_defined(const Policy &policy);

std::optional<std::int64_t> steps_to_threshold(const TrainRun &run);
/// Mean over seeds, rounded to the nearest step; nullopt if any seed never
/// reached the threshold or diverged.
std::optional<std::int64_t> mean_steps_to_threshold(std::span<const RunSummary> runs);

struct PairedStats {
  double mean_diff = 0.0;
  double sem = 0.0;
};

/// d_i = a_i - b_i; mean and sample standard deviation / sqrt(n).
PairedStats paired_sem(std::span<const std::pair<double, double>> pairs);

/// sqrt(var(a)/n_a + var(b)/n_b) with sample variances.
double unpaired_sem(std::span<const double> a, std::span<const double> b);

/// Mean and standard error of one sample.
PairedStats mean_sem(std::span<const double> values);

struct SwitchPoint {
  std::int64_t step = 0;
  double mean_val_acc = 0.0;
  double mean_test_acc = 0.0;
  double lift = 0.0; // mean paired test-accuracy difference vs. base
  std::optional<double> lift_sem;
  int pairs = 0;
};

struct SwitchOffResult {
  double lift = 0.0;
  std::optional<double> lift_sem;
  std::int64_t best_step = 0;
  std::vector<SwitchPoint> curve; // ascending step
};

/// Picks the candidate step with the highest mean final validation accuracy
/// (earliest on ties) and reports the seed-paired test-accuracy lift there.
/// Switched runs are paired with base runs by seed; diverged runs drop their
/// pair.
SwitchOffResult switch_off_lift(std::span<const RunSummary> base,
                                const std::map<std::int64_t, std::vector<RunSummary>> &switched);

/// KL(N0 || N1) in nats. Throws NumericalError if a covariance is not
/// positive definite.
double kl_gaussian(const Eigen::VectorXd &mean0, const Eigen::MatrixXd &cov0,
                   const Eigen::VectorXd &mean1, const Eigen::MatrixXd &cov1);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

inline constexpr std::string_view kResultsHeader =
    "policy_label,affinity,affinity_sem,diversity_loss,diversity_entropy,"
    "steps_to_threshold,test_acc,test_acc_sem,switch_off_lift,best_switch_step,num_seeds";

std::string format_results_csv(std::span<const MetricsRecord> records);
void write_results_csv(std::span<const MetricsRecord> records,
                       const std::filesystem::path &path);
/// Throws FormatError naming the offending line.
std::vector<MetricsRecord> parse_results_csv(std::string_view text,
                                             const std::string &source = "results.csv");
std::vector<MetricsRecord> read_results_csv(const std::filesystem::path &path);

} // namespace augmetrics
