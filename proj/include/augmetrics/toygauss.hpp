#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "augmetrics/data.hpp"
#include "augmetrics/model.hpp"
#include "augmetrics/trainer.hpp"

namespace augmetrics {

/// Evenly spaced shift values, both ends included.
struct GridAxis {
  double min = -3.0;
  double max = 3.0;
  int resolution = 31;

  double value(int i) const;
  void validate() const;
};

struct ToyConfig {
  GaussianMixtureSpec mixture = GaussianMixtureSpec::two_class_default(2000);
  GridAxis axis;
  /// Fresh validation samples per grid cell, split evenly over classes.
  int val_samples_per_cell = 4000;
  TrainConfig train = default_train();
  std::uint64_t seed = 0;
  int jobs = 1;

  static TrainConfig default_train();
  void validate() const;
};

/// Accuracy shift along one direction through the origin.
struct ShiftProfile {
  Eigen::Vector2d direction; // unit length
  std::vector<double> t;     // shift = t * direction
  std::vector<double> affinity;
  std::vector<double> sem;
  std::vector<double> oracle;
};

/// Rows index the second shift component, columns the first:
/// cell (i, j) holds the shift (axis.value(j), axis.value(i)).
struct ShiftGrid {
  GridAxis axis;
  Eigen::MatrixXd affinity;
  Eigen::MatrixXd affinity_sem;
  Eigen::MatrixXd oracle; // Gaussian-CDF prediction for the learned boundary
  Eigen::MatrixXd kl;

  ModelSpec spec;
  Params params;
  /// Learned boundary {x : normal . x + offset = 0}; class 1 on the positive
  /// side. `normal` is unit length.
  Eigen::Vector2d normal;
  double offset = 0.0;

  ShiftProfile parallel;      // along the learned boundary
  ShiftProfile perpendicular; // along the learned normal
};

/// Per-class Gaussian KL(shifted || original), averaged over equal class
/// priors; labels do not move.
double shifted_mixture_kl(const GaussianMixtureSpec &spec, const Eigen::VectorXd &delta);

/// Expected accuracy of the boundary (normal, offset) on the two-class
/// mixture with both class means moved by `delta`.
double boundary_accuracy(const GaussianMixtureSpec &spec, const Eigen::Vector2d &normal,
                         double offset, const Eigen::Vector2d &delta);

/// Trains one linear model on clean samples, then for every grid cell and
/// profile point draws a fresh validation set, evaluates it clean and
/// shifted (paired per example), and records affinity, its SEM, the
/// Gaussian-CDF oracle and the closed-form KL.
ShiftGrid run_toy_experiment(const ToyConfig &config);

/// Matrix with axis headers: first row `d2\d1` then the first-component
/// values; each later row starts with its second-component value.
void write_grid_tsv(const GridAxis &axis, const Eigen::MatrixXd &values,
                    const std::filesystem::path &path);
/// `direction,t,affinity,sem,oracle` rows for both profiles.
void write_profiles_tsv(const ShiftGrid &grid, const std::filesystem::path &path);

} // namespace augmetrics
