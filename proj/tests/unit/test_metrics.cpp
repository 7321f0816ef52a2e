#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "augmetrics/errors.hpp"
#include "augmetrics/metrics.hpp"
#include "helpers.hpp"

using namespace augmetrics;

namespace {

RunSummary run(std::uint64_t seed, double loss, double val, double test,
               std::optional<std::int64_t> steps = std::nullopt) {
  RunSummary s;
  s.seed = seed;
  s.final_train_loss = loss;
  s.final_val_acc = val;
  s.test_acc = test;
  s.steps_to_threshold = steps;
  return s;
}

} // namespace

TEST(Sem, PairedHandValues) {
  const std::vector<std::pair<double, double>> two = {{2, 1}, {4, 2}};
  const PairedStats s = paired_sem(two);
  EXPECT_NEAR(s.mean_diff, 1.5, 1e-12);
  EXPECT_NEAR(s.sem, 0.5, 1e-12);

  // Reference values from an independent statistics package.
  const std::vector<std::pair<double, double>> five = {
      {0.81, 0.78}, {0.84, 0.80}, {0.79, 0.77}, {0.86, 0.83}, {0.80, 0.79}};
  const PairedStats p = paired_sem(five);
  EXPECT_NEAR(p.mean_diff, 0.026, 1e-12);
  EXPECT_NEAR(p.sem, 0.005099019513592774, 1e-12);
  const std::vector<double> a = {0.81, 0.84, 0.79, 0.86, 0.80};
  const std::vector<double> b = {0.78, 0.80, 0.77, 0.83, 0.79};
  EXPECT_NEAR(unpaired_sem(a, b), 0.016613247725836132, 1e-12);

  const std::vector<std::pair<double, double>> same = {{1, 1}, {3, 3}, {5, 5}};
  EXPECT_EQ(paired_sem(same).sem, 0.0);
}

TEST(Sem, NeedsTwoValues) {
  const std::vector<std::pair<double, double>> one = {{1, 0}};
  EXPECT_THROW(paired_sem(one), ValidationError);
  const std::vector<double> v = {1.0};
  EXPECT_THROW(mean_sem(v), ValidationError);
  EXPECT_THROW(unpaired_sem(v, v), ValidationError);
}

TEST(Sem, PairingNeverHurtsWithSharedOffsets) {
  // Property: when both members of a pair share a per-seed offset, the paired
  // SEM removes it and is no larger than the unpaired one.
  std::mt19937_64 gen(1);
  std::normal_distribution<double> offset(0.0, 0.05), noise(0.0, 0.005);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::pair<double, double>> pairs;
    std::vector<double> a, b;
    for (int i = 0; i < 5; ++i) {
      const double o = offset(gen);
      pairs.emplace_back(0.8 + o + noise(gen), 0.78 + o + noise(gen));
      a.push_back(pairs.back().first);
      b.push_back(pairs.back().second);
    }
    EXPECT_LE(paired_sem(pairs).sem, unpaired_sem(a, b));
  }
}

TEST(Diversity, MeanLossBlankOnDivergence) {
  std::vector<RunSummary> runs = {run(0, 0.2, 0, 0), run(1, 0.4, 0, 0)};
  EXPECT_NEAR(*diversity_loss(runs), 0.3, 1e-15);
  runs.push_back(diverged_summary(2, 17));
  EXPECT_FALSE(diversity_loss(runs).has_value());
}

TEST(Diversity, StepsToThresholdMean) {
  std::vector<RunSummary> runs = {run(0, 0, 0, 0, 100), run(1, 0, 0, 0, 151)};
  EXPECT_EQ(mean_steps_to_threshold(runs), std::optional<std::int64_t>(126));
  runs.push_back(run(2, 0, 0, 0));
  EXPECT_FALSE(mean_steps_to_threshold(runs).has_value());
}

TEST(Diversity, EntropySumsConstituents) {
  const ImageShape s{32, 32, 3};
  const Policy p = parse_policy_label("Crop(4,100%)+FlipLR(50%)");
  EXPECT_NEAR(diversity_entropy(p, s), std::log(81.0) + std::log(2.0), 1e-12);
  EXPECT_TRUE(entropy_defined(p));
  EXPECT_EQ(diversity_entropy(Policy{}, s), 0.0);
  const Policy cont = parse_policy_label("FlipLR(50%)+FullGaussian(0.1,50%)");
  EXPECT_FALSE(entropy_defined(cont));
  EXPECT_THROW(diversity_entropy(cont, s), NotDiscreteError);
  // A constituent that never fires adds nothing, discrete or not.
  const Policy off = parse_policy_label("FlipLR(50%)+FullGaussian(0.1,0%)");
  EXPECT_TRUE(entropy_defined(off));
  EXPECT_NEAR(diversity_entropy(off, s), std::log(2.0), 1e-12);
}

TEST(Affinity, IdentityIsExactlyZero) {
  const auto val = testutil::random_dataset({6, 6, 3}, 3, 40, 2);
  const auto spec = ModelSpec::tiny_cnn({6, 6, 3}, 3, 2);
  const Params p = init(spec, 1);
  const auto v = with_stats(val, fit_normalization(val));
  const AffinityResult r = affinity_detail(spec, p, v, Policy{}, 5);
  EXPECT_EQ(r.value, 0.0);
  EXPECT_EQ(affinity(spec, p, v, parse_policy_label("FlipLR(0%)"), 5), 0.0);
  EXPECT_EQ(log_likelihood_shift(spec, p, v, Policy{}, 5), 0.0);
}

TEST(Affinity, PerExampleDifferencesAddUp) {
  const auto val = testutil::random_dataset({6, 6, 3}, 3, 60, 3);
  const auto spec = ModelSpec::mlp({6, 6, 3}, 3, 6);
  const Params p = init(spec, 2);
  const auto v = with_stats(val, fit_normalization(val));
  const Policy pol = parse_policy_label("Rotate(fixed,90deg,100%)");
  const AffinityResult r = affinity_detail(spec, p, v, pol, 8);
  int total = 0;
  for (int d : r.per_example) {
    EXPECT_GE(d, -1);
    EXPECT_LE(d, 1);
    total += d;
  }
  EXPECT_NEAR(r.value, total / 60.0, 1e-15);
  EXPECT_DOUBLE_EQ(r.value, r.augmented_acc - r.clean_acc);
  // The augmented pass is a fixed draw: same seed, same answer.
  EXPECT_EQ(affinity(spec, p, v, pol, 8), r.value);
}

TEST(SwitchOff, PicksBestValidationStepAndPairsBySeed) {
  const std::vector<RunSummary> base = {run(0, 0, 0.70, 0.60), run(1, 0, 0.72, 0.62),
                                        run(2, 0, 0.71, 0.64)};
  std::map<std::int64_t, std::vector<RunSummary>> switched;
  // Listed out of seed order on purpose.
  switched[100] = {run(2, 0, 0.80, 0.70), run(0, 0, 0.80, 0.66), run(1, 0, 0.80, 0.66)};
  switched[200] = {run(0, 0, 0.90, 0.61), run(1, 0, 0.86, 0.63), run(2, 0, 0.88, 0.65)};
  switched[300] = {run(0, 0, 0.88, 0.90), run(1, 0, 0.88, 0.90), run(2, 0, 0.88, 0.90)};
  const SwitchOffResult r = switch_off_lift(base, switched);
  EXPECT_EQ(r.best_step, 200);
  EXPECT_NEAR(r.lift, 0.01, 1e-12);
  ASSERT_TRUE(r.lift_sem.has_value());
  EXPECT_NEAR(*r.lift_sem, 0.0, 1e-12);
  ASSERT_EQ(r.curve.size(), 3u);
  // diffs at 100: 0.06, 0.04, 0.06
  EXPECT_NEAR(r.curve[0].lift, 0.16 / 3, 1e-12);
  EXPECT_NEAR(*r.curve[0].lift_sem, std::sqrt((2 * std::pow(0.02 / 3, 2) + std::pow(0.04 / 3, 2)) / 2 / 3),
              1e-12);
}

TEST(SwitchOff, TiesGoEarlyAndDivergedRunsDropTheirPair) {
  const std::vector<RunSummary> base = {run(0, 0, 0.7, 0.5), run(1, 0, 0.7, 0.5),
                                        diverged_summary(2, 5)};
  std::map<std::int64_t, std::vector<RunSummary>> switched;
  switched[10] = {run(0, 0, 0.8, 0.6), run(1, 0, 0.8, 0.7), run(2, 0, 0.99, 0.99)};
  switched[20] = {run(0, 0, 0.8, 0.9), diverged_summary(1, 3), run(2, 0, 0.8, 0.9)};
  const SwitchOffResult r = switch_off_lift(base, switched);
  EXPECT_EQ(r.best_step, 10);
  EXPECT_EQ(r.curve[0].pairs, 2);
  EXPECT_NEAR(r.lift, 0.15, 1e-12);
  EXPECT_EQ(r.curve[1].pairs, 1);
  EXPECT_FALSE(r.curve[1].lift_sem.has_value());
  EXPECT_THROW(switch_off_lift(base, {}), ValidationError);
}

TEST(Kl, ClosedFormMatchesMonteCarlo) {
  Eigen::Vector2d m0(0.3, -0.2), m1(-0.5, 0.4);
  Eigen::Matrix2d c0, c1;
  c0 << 1.2, 0.3, 0.3, 0.7;
  c1 << 0.9, -0.2, -0.2, 1.5;
  const double kl = kl_gaussian(m0, c0, m1, c1);
  // E_{x~N0}[log N0(x) - log N1(x)] by sampling.
  std::mt19937_64 gen(3);
  std::normal_distribution<double> z(0, 1);
  const Eigen::Matrix2d l0 = c0.llt().matrixL();
  const Eigen::Matrix2d i0 = c0.inverse(), i1 = c1.inverse();
  const double log_norm = 0.5 * std::log(c1.determinant() / c0.determinant());
  const int n = 400000;
  double sum = 0, sq = 0;
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d x = m0 + l0 * Eigen::Vector2d(z(gen), z(gen));
    const double v = log_norm - 0.5 * (x - m0).dot(i0 * (x - m0)) + 0.5 * (x - m1).dot(i1 * (x - m1));
    sum += v;
    sq += v * v;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sq / n - mean * mean) / n);
  EXPECT_NEAR(kl, mean, 5 * se);
}

TEST(Kl, SpecialCases) {
  const Eigen::VectorXd m = Eigen::Vector3d(1, 2, 3);
  const Eigen::MatrixXd c = Eigen::Matrix3d::Identity() * 2.0;
  EXPECT_EQ(kl_gaussian(m, c, m, c), 0.0);
  const Eigen::VectorXd d = Eigen::Vector3d(1, -1, 0.5);
  EXPECT_NEAR(kl_gaussian(m + d, Eigen::MatrixXd::Identity(3, 3), m, Eigen::MatrixXd::Identity(3, 3)),
              d.squaredNorm() / 2, 1e-12);
  // 1-D: log(s1/s0) + (s0^2 + dm^2) / (2 s1^2) - 1/2
  Eigen::VectorXd a(1), b(1);
  a << 0.0;
  b << 1.0;
  Eigen::MatrixXd s0(1, 1), s1(1, 1);
  s0 << 0.25;
  s1 << 4.0;
  EXPECT_NEAR(kl_gaussian(a, s0, b, s1), std::log(2.0 / 0.5) + (0.25 + 1.0) / 8.0 - 0.5, 1e-12);
  Eigen::MatrixXd bad(1, 1);
  bad << -1.0;
  EXPECT_THROW(kl_gaussian(a, bad, b, s1), NumericalError);
  EXPECT_THROW(kl_gaussian(a, s0, m, c), ValidationError);
}

TEST(Spearman, AverageRanksForTies) {
  const std::vector<double> x = {1, 2, 2, 3, 5, 4, 4, 4};
  const std::vector<double> y = {3, 1, 2, 2, 9, 7, 8, 0};
  // Reference value from an independent statistics package.
  EXPECT_NEAR(spearman(x, y), 0.4631041532568715, 1e-12);
  const std::vector<double> up = {1, 2, 3}, down = {9, 5, 1};
  EXPECT_NEAR(spearman(up, down), -1.0, 1e-15);
  const std::vector<double> flat = {1, 1, 1};
  EXPECT_THROW(spearman(up, flat), NumericalError);
}

TEST(ResultsCsv, RoundTripWithBlanksAndQuotedLabels) {
  MetricsRecord a;
  a.policy_label = "Rotate(fixed,60deg,50%)";
  a.affinity = -0.123456789;
  a.affinity_sem = 0.01;
  a.diversity_loss = 0.3;
  a.diversity_entropy = std::log(3.0);
  a.steps_to_threshold = 850;
  a.test_acc = 0.8;
  a.test_acc_sem = 0.002;
  a.switch_off_lift = 0.01;
  a.best_switch_step = 1290;
  a.num_seeds = 5;
  MetricsRecord b;
  b.policy_label = "Identity";
  b.affinity = 0.0;
  b.num_seeds = 3;
  const std::vector<MetricsRecord> rows = {a, b};
  const std::string text = format_results_csv(rows);
  EXPECT_EQ(text.substr(0, text.find('\n')), kResultsHeader);
  EXPECT_NE(text.find("\"Rotate(fixed,60deg,50%)\""), std::string::npos);
  EXPECT_NE(text.find("Identity,0,,,,,,,,,3"), std::string::npos);
  EXPECT_EQ(parse_results_csv(text), rows);
}

TEST(ResultsCsv, ErrorsNameTheLine) {
  const std::string head(kResultsHeader);
  auto message = [](const std::string &text) {
    try {
      parse_results_csv(text, "r.csv");
    } catch (const FormatError &e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_EQ(message("policy,affinity\n").rfind("r.csv:1:", 0), 0u);
  EXPECT_EQ(message(head + "\nIdentity,0,,,,,,,,,3\nFlipLR(50%),abc,,,,,,,,,3\n").rfind("r.csv:3:", 0),
            0u);
  EXPECT_EQ(message(head + "\nIdentity,0,,,,,,,,3\n").rfind("r.csv:2:", 0), 0u);
  EXPECT_EQ(message(head + "\nIdentity,0,,,,,,,,,\n").rfind("r.csv:2:", 0), 0u);
  EXPECT_EQ(message(head + "\n\"Identity,0,,,,,,,,,3\n").rfind("r.csv:2:", 0), 0u);
  EXPECT_EQ(message(""), "r.csv:1: missing header");
}
