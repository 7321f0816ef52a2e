#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "augmetrics/data.hpp"
#include "augmetrics/rng.hpp"

namespace augmetrics {

enum class TransformKind {
  Identity,
  FlipLR,
  FlipUD,
  Crop,
  Cutout,
  RotateFixed,
  RotateVariable,
  RotateSquare,
  ShearFixed,
  ShearVariable,
  PatchGaussianFixed,
  PatchGaussianVariable,
  FullGaussian,
  RandomErasing,
  SolarizeAdd,
};

std::string_view to_string(TransformKind kind) noexcept;
TransformKind transform_kind_from_string(std::string_view name);

/// True for kinds whose randomness is a finite set of parameter draws.
bool is_discrete(TransformKind kind) noexcept;

/// One parameterized augmentation.
///
/// Meaning of `magnitude` by kind:
///   Crop                 padding in pixels added on every side
///   Cutout               side of the square patch, pixels
///   Rotate*              maximum/fixed angle in degrees (unused for square)
///   Shear*               maximum/fixed horizontal shear coefficient
///   PatchGaussian*       side of the square patch (maximum for variable)
///   FullGaussian         noise standard deviation
///   RandomErasing        side of the square patch, pixels
///   SolarizeAdd          threshold; values below it get `secondary` added
/// `secondary` is sigma_max for PatchGaussian and the added amount for
/// SolarizeAdd.
struct TransformSpec {
  TransformKind kind = TransformKind::Identity;
  double magnitude = 0.0;
  double secondary = 0.0;
  double probability = 1.0;

  static TransformSpec identity() { return {}; }
  static TransformSpec flip_lr(double p) { return {TransformKind::FlipLR, 0, 0, p}; }
  static TransformSpec flip_ud(double p) { return {TransformKind::FlipUD, 0, 0, p}; }
  static TransformSpec crop(int pad, double p) { return {TransformKind::Crop, double(pad), 0, p}; }
  static TransformSpec cutout(int size, double p) { return {TransformKind::Cutout, double(size), 0, p}; }
  static TransformSpec rotate_fixed(double deg, double p) { return {TransformKind::RotateFixed, deg, 0, p}; }
  static TransformSpec rotate_variable(double deg, double p) { return {TransformKind::RotateVariable, deg, 0, p}; }
  static TransformSpec rotate_square(double p) { return {TransformKind::RotateSquare, 0, 0, p}; }
  static TransformSpec shear_fixed(double s, double p) { return {TransformKind::ShearFixed, s, 0, p}; }
  static TransformSpec shear_variable(double s, double p) { return {TransformKind::ShearVariable, s, 0, p}; }
  static TransformSpec patch_gaussian(int size, double sigma_max, double p) {
    return {TransformKind::PatchGaussianFixed, double(size), sigma_max, p};
  }
  static TransformSpec patch_gaussian_variable(int max_size, double sigma_max, double p) {
    return {TransformKind::PatchGaussianVariable, double(max_size), sigma_max, p};
  }
  static TransformSpec full_gaussian(double sigma, double p) { return {TransformKind::FullGaussian, sigma, 0, p}; }
  static TransformSpec random_erasing(int size, double p) { return {TransformKind::RandomErasing, double(size), 0, p}; }
  static TransformSpec solarize_add(double threshold, double addition, double p) {
    return {TransformKind::SolarizeAdd, threshold, addition, p};
  }

  /// Shape-independent checks: probability in [0,1], non-negative magnitudes,
  /// integral pixel sizes.
  void validate() const;
  /// Additionally checks size limits against an image shape (Cutout side must
  /// not exceed the image side).
  void validate_for(const ImageShape &shape) const;

  /// Canonical label, e.g. `Rotate(fixed,60deg,50%)` or `Crop(4,100%)`.
  std::string label() const;

  bool operator==(const TransformSpec &) const = default;
};

/// Parses a canonical label back into a spec.
TransformSpec parse_transform_label(std::string_view label);

/// Ordered composition: every pre-op in list order, then Crop, FlipLR and
/// Cutout.
struct Policy {
  std::vector<TransformSpec> pre_ops;
  std::optional<TransformSpec> crop;
  std::optional<TransformSpec> flip_lr;
  std::optional<TransformSpec> cutout;

  /// Builds a policy from transforms in any order; Crop, FlipLR and Cutout go
  /// to their standard slots (at most one each).
  static Policy from_ops(const std::vector<TransformSpec> &ops);
  static Policy single(const TransformSpec &op) { return from_ops({op}); }

  /// Transforms in application order.
  std::vector<TransformSpec> ordered() const;
  void validate() const;
  void validate_for(const ImageShape &shape) const;
  /// Joined canonical labels (`Crop(4,100%)+FlipLR(50%)`); "Identity" when
  /// empty.
  std::string label() const;
  /// True when no constituent can change an image.
  bool is_identity() const;

  bool operator==(const Policy &) const = default;
};

/// Accepts `Identity`, a single label, or several joined by '+'.
Policy parse_policy_label(std::string_view label);

nlohmann::json to_json(const TransformSpec &spec);
TransformSpec transform_from_json(const nlohmann::json &j);
/// `{"transforms": [...]}` in application order.
nlohmann::json to_json(const Policy &policy);
Policy policy_from_json(const nlohmann::json &j);

/// Constants the transforms need from the dataset.
struct AugmentContext {
  /// Per-channel Cutout fill, in scaled [0,1] units.
  std::vector<double> fill;

  static AugmentContext for_dataset(const LabeledDataset &ds);
};

/// Realized parameters of one stochastic application.
struct TransformDraw {
  TransformKind kind = TransformKind::Identity;
  bool applied = false;
  int offset_row = 0; // crop offsets relative to centered, or patch origin
  int offset_col = 0;
  int size = 0;       // patch side
  double amount = 0;  // angle in degrees, shear coefficient or noise sigma
  bool flip = false;  // whether a flip happens
};

/// Consumes the Bernoulli gate and the kind's parameter draws from `rng`.
TransformDraw draw_parameters(const TransformSpec &spec, const ImageShape &shape,
                              Rng &rng);

/// Applies a realized draw. Noise kinds take their per-pixel noise from `rng`.
Image apply_draw(const TransformSpec &spec, const TransformDraw &draw,
                 const Image &img, const AugmentContext &ctx, Rng &rng);

/// Outcome descriptor for a draw, merging provably identity draws into
/// "identity".
std::string outcome_of(const TransformDraw &draw);

/// Draws and applies `spec`. With probability 1 - p the image is returned
/// unchanged.
Image apply(const TransformSpec &spec, const Image &img, Rng &rng,
            const AugmentContext &ctx = {});

/// Records which transform slots a policy application visited, in order.
struct PolicyTrace {
  std::vector<TransformKind> visited;
  std::size_t applied = 0;
};

/// Applies every constituent in policy order. Each slot draws from its own
/// child stream of `rng`, so one slot's draws never shift another's.
Image apply_policy_dynamic(const Policy &policy, const Image &img, Rng &rng,
                           const AugmentContext &ctx = {},
                           PolicyTrace *trace = nullptr);

/// One stochastic draw of the policy per image, using per-image streams
/// derived from (seed, index). Labels and size are unchanged.
LabeledDataset materialize_static(const Policy &policy, const LabeledDataset &ds,
                                  std::uint64_t seed);

/// Single static pass over a validation split (the Affinity protocol).
LabeledDataset augment_validation(const Policy &policy,
                                  const LabeledDataset &val, std::uint64_t seed);

struct Outcome {
  std::string descriptor;
  double probability = 0.0;
};

struct OutcomeDistribution {
  std::vector<Outcome> outcomes;
  bool is_discrete = true;

  double probability_of(std::string_view descriptor) const;
  double entropy() const;
};

/// Exact distribution over parameter draws of a discrete transform. Throws
/// NotDiscreteError for kinds with continuous randomness.
OutcomeDistribution enumerate_outcomes(const TransformSpec &spec,
                                       const ImageShape &shape);

/// Geometric primitives, exposed for tests and tools. Angles are degrees,
/// counter-clockwise; fill is zero.
Image flip_left_right(const Image &img);
Image flip_up_down(const Image &img);
Image rotate_image(const Image &img, double degrees);
Image shear_image(const Image &img, double coefficient);

} // namespace augmetrics
