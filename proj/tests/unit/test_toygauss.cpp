#include <cmath>

#include <gtest/gtest.h>

#include "augmetrics/errors.hpp"
#include "augmetrics/textio.hpp"
#include "augmetrics/toygauss.hpp"
#include "helpers.hpp"

using namespace augmetrics;

namespace {

double phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

ToyConfig small_config() {
  ToyConfig c;
  c.mixture.samples_per_class = 500;
  c.axis = {-2.0, 2.0, 5};
  c.val_samples_per_cell = 2000;
  c.train.steps = 300;
  c.seed = 3;
  return c;
}

} // namespace

TEST(Toy, AxisValues) {
  const GridAxis a{-3.0, 3.0, 31};
  EXPECT_EQ(a.value(0), -3.0);
  EXPECT_EQ(a.value(30), 3.0);
  EXPECT_EQ(a.value(15), 0.0);
  EXPECT_EQ(a.value(5), -2.0);
  EXPECT_EQ(a.value(25), 2.0);
  EXPECT_THROW((GridAxis{1.0, 0.0, 3}).validate(), ValidationError);
  EXPECT_THROW((GridAxis{0.0, 1.0, 0}).validate(), ValidationError);
}

TEST(Toy, ShiftKlIsHalfSquaredNorm) {
  const auto spec = GaussianMixtureSpec::two_class_default(10);
  for (double x : {-3.0, -0.4, 0.0, 1.7})
    for (double y : {-2.2, 0.0, 3.0}) {
      const Eigen::Vector2d d(x, y);
      EXPECT_NEAR(shifted_mixture_kl(spec, d), d.squaredNorm() / 2, 1e-12);
    }
}

TEST(Toy, BoundaryAccuracyClosedForm) {
  const auto spec = GaussianMixtureSpec::two_class_default(10);
  const Eigen::Vector2d n(1.0, 0.0);
  for (double d : {-2.0, -0.5, 0.0, 1.0, 2.0}) {
    const double want = 0.5 * phi(1 + d) + 0.5 * phi(1 - d);
    EXPECT_NEAR(boundary_accuracy(spec, n, 0.0, Eigen::Vector2d(d, 0.7)), want, 1e-15);
  }
  // Flipping the orientation of the boundary swaps which side is class 1.
  EXPECT_NEAR(boundary_accuracy(spec, -n, 0.0, Eigen::Vector2d::Zero()), 1 - phi(1), 1e-15);
}

TEST(Toy, SmallExperimentTracksOracle) {
  const ShiftGrid g = run_toy_experiment(small_config());
  EXPECT_GT(g.normal.dot(Eigen::Vector2d(1, 0)), 0.98);
  EXPECT_LT(std::abs(g.offset), 0.2);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) {
      const Eigen::Vector2d d(g.axis.value(j), g.axis.value(i));
      EXPECT_NEAR(g.kl(i, j), d.squaredNorm() / 2, 1e-12);
      EXPECT_LE(std::abs(g.affinity(i, j) - g.oracle(i, j)), 5 * g.affinity_sem(i, j) + 1e-12)
          << i << "," << j;
    }
  // Centre cell: no shift, no change.
  EXPECT_EQ(g.affinity(2, 2), 0.0);
  EXPECT_EQ(g.affinity_sem(2, 2), 0.0);
  // Moving along the learned boundary never changes a prediction.
  for (std::size_t k = 0; k < g.parallel.t.size(); ++k) EXPECT_NEAR(g.parallel.affinity[k], 0.0, 1e-3);
  EXPECT_LT(g.perpendicular.affinity.front(), -0.1);
  EXPECT_LT(g.perpendicular.affinity.back(), -0.1);
}

TEST(Toy, DeterministicAcrossJobCounts) {
  ToyConfig c = small_config();
  c.axis.resolution = 3;
  c.val_samples_per_cell = 200;
  const ShiftGrid a = run_toy_experiment(c);
  c.jobs = 3;
  const ShiftGrid b = run_toy_experiment(c);
  EXPECT_EQ(a.affinity, b.affinity);
  EXPECT_EQ(a.affinity_sem, b.affinity_sem);
  EXPECT_EQ(a.perpendicular.affinity, b.perpendicular.affinity);
}

TEST(Toy, TsvLayout) {
  testutil::TempDir dir;
  const GridAxis axis{-1.0, 1.0, 3};
  Eigen::MatrixXd m(3, 3);
  m << 1, 2, 3, 4, 5, 6, 7, 8, 9;
  write_grid_tsv(axis, m, dir / "grid.tsv");
  EXPECT_EQ(testutil::slurp(dir / "grid.tsv"),
            "d2\\d1\t-1\t0\t1\n-1\t1\t2\t3\n0\t4\t5\t6\n1\t7\t8\t9\n");

  ShiftGrid g;
  g.parallel.t = {0.5};
  g.parallel.affinity = {0};
  g.parallel.sem = {0};
  g.parallel.oracle = {0};
  g.perpendicular.t = {0.5};
  g.perpendicular.affinity = {-0.25};
  g.perpendicular.sem = {0.01};
  g.perpendicular.oracle = {-0.2};
  write_profiles_tsv(g, dir / "p.tsv");
  EXPECT_EQ(testutil::slurp(dir / "p.tsv"),
            "direction\tt\taffinity\tsem\toracle\nparallel\t0.5\t0\t0\t0\n"
            "perpendicular\t0.5\t-0.25\t0.01\t-0.2\n");
}

TEST(Toy, ConfigValidation) {
  ToyConfig c = small_config();
  c.val_samples_per_cell = 3;
  EXPECT_THROW(c.validate(), ValidationError);
  c = small_config();
  c.train.policy = parse_policy_label("FlipLR(50%)");
  EXPECT_THROW(c.validate(), ValidationError);
}
