#include <algorithm>
#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "augmetrics/data.hpp"
#include "augmetrics/errors.hpp"
#include "augmetrics/transforms.hpp"
#include "helpers.hpp"

using namespace augmetrics;
using testutil::TempDir;

namespace {

bool on_byte_grid(float v) {
  const double k = std::round(v * 255.0);
  return k >= 0 && k <= 255 && static_cast<float>(k / 255.0) == v;
}

} // namespace

TEST(Synthetic, ShapeLabelsAndGrid) {
  const LabeledDataset ds = make_synthetic_images(4, 5, 12, 3);
  ASSERT_EQ(ds.size(), 20u);
  EXPECT_EQ(ds.num_classes, 4);
  EXPECT_EQ(ds.shape(), (ImageShape{12, 12, 3}));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(ds.labels[i], static_cast<int>(i % 4));
    for (float v : ds.images[i].values) ASSERT_TRUE(on_byte_grid(v));
  }
  EXPECT_FALSE(ds.values_normalized);
}

TEST(Synthetic, DeterministicPerSeed) {
  EXPECT_EQ(make_synthetic_images(3, 4, 8, 9), make_synthetic_images(3, 4, 8, 9));
  EXPECT_NE(make_synthetic_images(3, 4, 8, 9), make_synthetic_images(3, 4, 8, 10));
  // Image i depends only on (seed, i): a longer set extends a shorter one.
  const auto small = make_synthetic_images(3, 2, 8, 9);
  const auto big = make_synthetic_images(3, 4, 8, 9);
  for (std::size_t i = 0; i < small.size(); ++i) EXPECT_EQ(small.images[i], big.images[i]);
}

TEST(Synthetic, MirrorPairsFlipOntoEachOther) {
  // Classes 0 and 1 are vertical mirrors of each other, so the mean image of
  // class 0 flipped upside down should be much closer to class 1's mean than
  // to its own.
  const auto ds = make_synthetic_images(2, 400, 16, 1);
  Image mean0({16, 16, 3}), mean1({16, 16, 3});
  for (std::size_t i = 0; i < ds.size(); ++i) {
    Image &m = ds.labels[i] == 0 ? mean0 : mean1;
    for (std::size_t p = 0; p < m.values.size(); ++p) m.values[p] += ds.images[i].values[p] / 400;
  }
  const Image flipped = flip_up_down(mean0);
  auto dist = [](const Image &a, const Image &b) {
    double s = 0;
    for (std::size_t p = 0; p < a.values.size(); ++p) s += std::pow(a.values[p] - b.values[p], 2);
    return s;
  };
  EXPECT_LT(dist(flipped, mean1), 0.25 * dist(mean0, mean1));
  EXPECT_LT(dist(flip_left_right(mean0), mean0), 0.25 * dist(mean0, mean1));
}

TEST(Synthetic, RejectsBadArguments) {
  EXPECT_THROW(make_synthetic_images(1, 5, 16, 0), ValidationError);
  EXPECT_THROW(make_synthetic_images(11, 5, 16, 0), ValidationError);
  EXPECT_THROW(make_synthetic_images(3, 5, 4, 0), ValidationError);
}

TEST(Split, BalancedDisjointAndDeterministic) {
  // Unequal class sizes: 0..4 cycling plus a surplus of class 0.
  std::vector<int> labels;
  for (int i = 0; i < 200; ++i) labels.push_back(i % 5);
  for (int i = 0; i < 50; ++i) labels.push_back(0);
  for (std::size_t train : {50u, 53u, 99u}) {
    const SplitIndices s = balanced_split_indices(labels, 5, train, 60, 17);
    ASSERT_EQ(s.train.size(), train);
    ASSERT_EQ(s.val.size(), 60u);
    std::vector<std::size_t> counts(5);
    for (auto i : s.train) ++counts[static_cast<std::size_t>(labels[i])];
    const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
    EXPECT_LE(*hi - *lo, 1u);
    std::set<std::size_t> all(s.train.begin(), s.train.end());
    all.insert(s.val.begin(), s.val.end());
    EXPECT_EQ(all.size(), train + 60);
    EXPECT_EQ(s, balanced_split_indices(labels, 5, train, 60, 17));
  }
  EXPECT_NE(balanced_split_indices(labels, 5, 50, 60, 17),
            balanced_split_indices(labels, 5, 50, 60, 18));
}

TEST(Split, InfeasibleRequestsThrow) {
  std::vector<int> labels = {0, 0, 0, 0, 1};
  EXPECT_THROW(balanced_split_indices(labels, 2, 4, 0, 0), ValidationError);
  EXPECT_THROW(balanced_split_indices(labels, 2, 3, 3, 0), ValidationError);
  std::vector<int> bad = {0, 2};
  EXPECT_THROW(balanced_split_indices(bad, 2, 1, 0, 0), ValidationError);
}

TEST(Normalization, HandComputedStats) {
  LabeledDataset ds;
  ds.num_classes = 1;
  Image a({1, 2, 2}), b({1, 2, 2});
  // channel 0: 0, 1, 2, 3 -> mean 1.5, population std sqrt(1.25)
  // channel 1: constant 0.5 -> std 0 -> fallback 1
  a.values = {0, 0.5, 1, 0.5};
  b.values = {2, 0.5, 3, 0.5};
  ds.images = {a, b};
  ds.labels = {0, 0};
  const NormalizationStats s = fit_normalization(ds);
  EXPECT_DOUBLE_EQ(s.mean[0], 1.5);
  EXPECT_DOUBLE_EQ(s.mean[1], 0.5);
  EXPECT_DOUBLE_EQ(s.stddev[0], std::sqrt(1.25));
  EXPECT_EQ(s.stddev[1], 1.0);
  EXPECT_EQ(s.stddev_fallback, (std::vector<bool>{false, true}));
  EXPECT_TRUE(s.any_fallback());

  const LabeledDataset n = normalize(ds);
  EXPECT_TRUE(n.values_normalized);
  EXPECT_NEAR(n.images[0].values[0], -1.5 / std::sqrt(1.25), 1e-6);
  EXPECT_EQ(n.images[0].values[1], 0.0f);
  EXPECT_THROW(normalize(n), ValidationError);
}

TEST(Normalization, ValidationUsesTrainingStats) {
  const auto train = testutil::random_dataset({4, 4, 3}, 2, 20, 1);
  const auto val = testutil::random_dataset({4, 4, 3}, 2, 10, 2);
  const NormalizationStats s = fit_normalization(train);
  const LabeledDataset v = normalize_with(val, s);
  EXPECT_EQ(v.stats, s);
  std::vector<float> buf(48);
  write_model_input(val.images[3], s, false, buf);
  EXPECT_EQ(std::vector<float>(buf), v.images[3].values);
  // Already-normalized values pass through untouched.
  write_model_input(v.images[3], s, true, buf);
  EXPECT_EQ(std::vector<float>(buf), v.images[3].values);
}

TEST(BinaryRecords, RoundTripIsExact) {
  TempDir dir;
  const auto ds = make_synthetic_images(10, 3, 8, 5);
  write_binary_records(ds, dir / "batch.bin");
  RecordLayout layout{{8, 8, 3}, 9};
  const auto back = load_binary_records(dir / "batch.bin", layout, 1000);
  ASSERT_EQ(back.size(), ds.size());
  EXPECT_EQ(back.images, ds.images);
  EXPECT_EQ(back.labels, ds.labels);
  EXPECT_EQ(load_binary_records(dir / "batch.bin", layout, 4).size(), 4u);
}

TEST(BinaryRecords, ChannelPlanesOnDisk) {
  // One 1x2x2 record: label, then the whole R plane, then the whole G plane.
  TempDir dir;
  testutil::spit(dir / "r.bin", std::string("\x01\x00\xff\x33\x66", 5));
  const auto ds = load_binary_records(dir / "r.bin", RecordLayout{{1, 2, 2}, 9}, 10);
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds.labels[0], 1);
  EXPECT_EQ(ds.images[0].at(0, 0, 0), 0.0f);
  EXPECT_EQ(ds.images[0].at(0, 1, 0), 1.0f);
  EXPECT_EQ(ds.images[0].at(0, 0, 1), 0x33 / 255.0f);
  EXPECT_EQ(ds.images[0].at(0, 1, 1), 0x66 / 255.0f);
}

TEST(BinaryRecords, TruncatedAndCorruptFilesNameTheRecord) {
  TempDir dir;
  const RecordLayout layout{{1, 2, 1}, 9};
  testutil::spit(dir / "t.bin", std::string("\x01\x02\x03\x04\x05", 5));
  try {
    load_binary_records(dir / "t.bin", layout, 10);
    FAIL() << "expected FormatError";
  } catch (const FormatError &e) {
    EXPECT_NE(std::string(e.what()).find("record 1"), std::string::npos) << e.what();
  }
  testutil::spit(dir / "c.bin", std::string("\x01\x02\x03\x0c\x05\x06", 6));
  try {
    load_binary_records(dir / "c.bin", layout, 10);
    FAIL() << "expected FormatError";
  } catch (const FormatError &e) {
    EXPECT_NE(std::string(e.what()).find("record 1"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_binary_records(dir / "missing.bin", layout, 10), FormatError);
}

TEST(GaussianMixture, SampleMomentsMatchSpec) {
  GaussianMixtureSpec spec;
  spec.dim = 2;
  spec.means = {Eigen::Vector2d(0.5, -1.0), Eigen::Vector2d(-2.0, 3.0)};
  Eigen::Matrix2d c0, c1;
  c0 << 2.0, 0.6, 0.6, 1.0;
  c1 << 0.5, -0.2, -0.2, 0.3;
  spec.covariances = {c0, c1};
  spec.samples_per_class = 40000;
  const VectorDataset ds = make_gaussian_mixture(spec, 4);
  ASSERT_EQ(ds.size(), 80000u);
  for (int k = 0; k < 2; ++k) {
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    int n = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (ds.labels[i] != k) continue;
      mean += Eigen::Vector2d(ds.points[i][0], ds.points[i][1]);
      ++n;
    }
    mean /= n;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (ds.labels[i] != k) continue;
      const Eigen::Vector2d d = Eigen::Vector2d(ds.points[i][0], ds.points[i][1]) - mean;
      cov += d * d.transpose();
    }
    cov /= n - 1;
    const Eigen::Matrix2d &want = k == 0 ? c0 : c1;
    for (int d = 0; d < 2; ++d) {
      EXPECT_NEAR(mean[d], spec.means[k][d], 5 * std::sqrt(want(d, d) / n));
    }
    EXPECT_NEAR((cov - want).cwiseAbs().maxCoeff(), 0.0, 0.03);
  }
  EXPECT_EQ(make_gaussian_mixture(spec, 4), ds);
}

TEST(GaussianMixture, ValidateRejectsNonPositiveDefinite) {
  auto spec = GaussianMixtureSpec::two_class_default(10);
  Eigen::Matrix2d bad;
  bad << 1.0, 2.0, 2.0, 1.0;
  spec.covariances[1] = bad;
  EXPECT_THROW(spec.validate(), ValidationError);
  spec = GaussianMixtureSpec::two_class_default(10);
  spec.means.pop_back();
  EXPECT_THROW(spec.validate(), ValidationError);
}

TEST(GaussianMixture, AsLabeledKeepsValues) {
  const auto v = make_gaussian_mixture(GaussianMixtureSpec::two_class_default(3), 0);
  const auto ds = as_labeled(v);
  ASSERT_EQ(ds.size(), 6u);
  EXPECT_EQ(ds.shape(), (ImageShape{1, 2, 1}));
  EXPECT_EQ(ds.images[4].values[1], static_cast<float>(v.points[4][1]));
  EXPECT_EQ(ds.labels, v.labels);
}
