#include <cmath>
#include <numbers>
#include <set>

#include <gtest/gtest.h>

#include "augmetrics/errors.hpp"
#include "augmetrics/trainer.hpp"
#include "helpers.hpp"

using namespace augmetrics;

namespace {

struct Fixture {
  LabeledDataset train = make_synthetic_images(4, 24, 8, 1);
  LabeledDataset val = make_synthetic_images(4, 8, 8, 2);
  ModelSpec spec = ModelSpec::tiny_cnn({8, 8, 3}, 4, 3);

  TrainConfig config() const {
    TrainConfig c;
    c.steps = 40;
    c.batch_size = 16;
    c.base_lr = 0.05;
    c.log_every = 5;
    c.val_every = 20;
    c.final_loss_window = 3;
    c.seed = 4;
    return c;
  }
};

} // namespace

TEST(Schedule, CosineStepDecayConstant) {
  TrainConfig c;
  c.steps = 100;
  c.base_lr = 0.2;
  EXPECT_DOUBLE_EQ(lr_at(c, 0), 0.2);
  EXPECT_NEAR(lr_at(c, 50), 0.1, 1e-15);
  EXPECT_NEAR(lr_at(c, 25), 0.1 * (1 + std::cos(std::numbers::pi / 4)), 1e-15);
  EXPECT_NEAR(lr_at(c, 100), 0.0, 1e-15);
  c.lr_schedule = LrSchedule::step_decay(30, 10);
  EXPECT_DOUBLE_EQ(lr_at(c, 29), 0.2);
  EXPECT_DOUBLE_EQ(lr_at(c, 30), 0.02);
  c.lr_schedule = LrSchedule::constant();
  EXPECT_DOUBLE_EQ(lr_at(c, 99), 0.2);
}

TEST(Schedule, EpochsArePermutations) {
  const std::size_t n = 37;
  for (std::uint64_t epoch = 0; epoch < 3; ++epoch) {
    std::set<std::size_t> seen;
    for (std::size_t j = 0; j < n; ++j) seen.insert(example_at(5, n, epoch * n + j));
    EXPECT_EQ(seen.size(), n);
    EXPECT_EQ(*seen.rbegin(), n - 1);
  }
  bool differs = false;
  for (std::size_t j = 0; j < n; ++j) differs |= example_at(5, n, j) != example_at(5, n, n + j);
  EXPECT_TRUE(differs);
}

TEST(TrainConfigCheck, RejectsBadValues) {
  TrainConfig c;
  c.steps = 10;
  c.batch_size = 8;
  EXPECT_NO_THROW(c.validate(100));
  EXPECT_THROW(c.validate(4), ValidationError);
  auto with = [&](auto mutate) {
    TrainConfig d = c;
    mutate(d);
    return d;
  };
  EXPECT_THROW(with([](TrainConfig &d) { d.base_lr = 0; }).validate(100), ValidationError);
  EXPECT_THROW(with([](TrainConfig &d) { d.momentum = 1.0; }).validate(100), ValidationError);
  EXPECT_THROW(with([](TrainConfig &d) { d.switch_off_step = 10; }).validate(100), ValidationError);
  EXPECT_THROW(with([](TrainConfig &d) { d.checkpoint_steps = {11}; }).validate(100), ValidationError);
  EXPECT_THROW(with([](TrainConfig &d) { d.log_every = 0; }).validate(100), ValidationError);
}

TEST(Train, DeterministicAndLearns) {
  Fixture f;
  TrainConfig c = f.config();
  c.steps = 150;
  const TrainRun a = train(f.spec, f.train, f.val, c);
  const TrainRun b = train(f.spec, f.train, f.val, c);
  EXPECT_EQ(a, b);
  ASSERT_FALSE(a.log.empty());
  EXPECT_LT(a.final_train_loss, a.log.front().train_loss);
  EXPECT_EQ(a.log.back().step, 149);
  EXPECT_TRUE(a.log.back().val_acc.has_value());
  EXPECT_EQ(a.final_val_acc, *a.log.back().val_acc);
  c.seed = 5;
  EXPECT_NE(train(f.spec, f.train, f.val, c).final_params, a.final_params);
}

TEST(Train, LogCadence) {
  Fixture f;
  const TrainRun run = train(f.spec, f.train, f.val, f.config());
  std::vector<std::int64_t> steps;
  for (const auto &e : run.log) {
    steps.push_back(e.step);
    EXPECT_EQ(e.val_acc.has_value(), e.step % 20 == 0 || e.step == 39) << e.step;
  }
  EXPECT_EQ(steps, (std::vector<std::int64_t>{0, 5, 10, 15, 20, 25, 30, 35, 39}));
  double tail = 0;
  for (std::size_t i = run.log.size() - 3; i < run.log.size(); ++i) tail += run.log[i].train_loss;
  EXPECT_DOUBLE_EQ(run.final_train_loss, tail / 3);
}

TEST(Train, CheckpointAtZeroIsInitialization) {
  Fixture f;
  TrainConfig c = f.config();
  c.checkpoint_steps = {0, 20, 40};
  const TrainRun run = train(f.spec, f.train, f.val, c);
  ASSERT_EQ(run.checkpoints.size(), 3u);
  EXPECT_EQ(run.checkpoints.at(0).params, init(f.spec, c.seed));
  EXPECT_EQ(run.checkpoints.at(40).params, run.final_params);
  EXPECT_EQ(run.checkpoints.at(40).velocity, run.final_velocity);
  for (float v : run.checkpoints.at(0).velocity) EXPECT_EQ(v, 0.0f);
}

TEST(Train, ResumeEqualsTrainingWithSwitchOff) {
  Fixture f;
  TrainConfig c = f.config();
  c.policy = parse_policy_label("Crop(2,100%)+FlipLR(50%)");
  c.checkpoint_steps = {15};
  const TrainRun augmented = train(f.spec, f.train, f.val, c);
  const TrainRun resumed = resume_without_augmentation(f.train, f.val, augmented, 15);

  TrainConfig direct_cfg = c;
  direct_cfg.switch_off_step = 15;
  const TrainRun direct = train(f.spec, f.train, f.val, direct_cfg);
  EXPECT_EQ(resumed.final_params, direct.final_params);
  EXPECT_EQ(resumed.log, direct.log);
  EXPECT_EQ(resumed.config.switch_off_step, std::optional<std::int64_t>(15));
  EXPECT_NE(resumed.final_params, augmented.final_params);
  for (std::size_t s = 15; s < 40; ++s) EXPECT_EQ(resumed.augmentations_per_step[s], 0u);
  EXPECT_GT(resumed.augmentations_per_step[3], 0u);

  EXPECT_THROW(resume_without_augmentation(f.train, f.val, augmented, 10), std::out_of_range);
  EXPECT_EQ(resume_without_augmentation(f.train, f.val, augmented, 40), augmented);
}

TEST(Train, StaticModeReusesOneDrawPerImage) {
  Fixture f;
  TrainConfig c = f.config();
  c.policy = parse_policy_label("Rotate(variable,30deg,100%)");
  c.mode = AugmentMode::Static;
  const TrainRun s = train(f.spec, f.train, f.val, c);
  for (auto n : s.augmentations_per_step) EXPECT_EQ(n, 0u);
  c.mode = AugmentMode::Dynamic;
  const TrainRun d = train(f.spec, f.train, f.val, c);
  for (auto n : d.augmentations_per_step) EXPECT_EQ(n, 16u);
  EXPECT_NE(s.final_params, d.final_params);
}

TEST(Train, DivergenceIsReported) {
  Fixture f;
  TrainConfig c = f.config();
  c.base_lr = 1e30;
  c.lr_schedule = LrSchedule::constant();
  try {
    train(f.spec, f.train, f.val, c);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError &e) {
    EXPECT_GE(e.step(), 0);
    EXPECT_LT(e.step(), 40);
  }
}

TEST(Train, L2OffStepRemovesPenalty) {
  Fixture f;
  TrainConfig c = f.config();
  c.l2_coeff = 0.0;
  const TrainRun none = train(f.spec, f.train, f.val, c);
  c.l2_coeff = 0.5;
  c.l2_off_step = 0;
  EXPECT_EQ(train(f.spec, f.train, f.val, c).final_params, none.final_params);
  c.l2_off_step.reset();
  EXPECT_NE(train(f.spec, f.train, f.val, c).final_params, none.final_params);
}

TEST(Train, ThresholdAndTrailingHelpers) {
  std::vector<LogEntry> log = {{0, 0.1, 2.0, 0.5, {}}, {10, 0.1, 1.0, 0.97, {}},
                               {20, 0.1, 0.5, 0.99, {}}};
  EXPECT_EQ(first_step_reaching(log, 0.97), std::optional<std::int64_t>(10));
  EXPECT_FALSE(first_step_reaching(log, 0.995));
  EXPECT_DOUBLE_EQ(trailing_train_loss(log, 2), 0.75);
  EXPECT_DOUBLE_EQ(trailing_train_loss(log, 10), 3.5 / 3);
  EXPECT_THROW(trailing_train_loss({}, 2), ValidationError);
}

TEST(LogCsv, RoundTripAndErrors) {
  testutil::TempDir dir;
  std::vector<LogEntry> log = {{0, 0.1, 2.302585092994046, 0.125, 0.1},
                               {10, 0.09999, 1.0 / 3, 0.5, {}}};
  write_log_csv(log, dir / "log.csv");
  EXPECT_EQ(read_log_csv(dir / "log.csv"), log);

  testutil::spit(dir / "bad.csv", "step,lr,train_loss,train_acc,val_acc\n0,0.1,1,0.5,\n5,x,1,0.5,\n");
  try {
    read_log_csv(dir / "bad.csv");
    FAIL() << "expected FormatError";
  } catch (const FormatError &e) {
    EXPECT_NE(std::string(e.what()).find("bad.csv:3"), std::string::npos) << e.what();
  }
  testutil::spit(dir / "head.csv", "step,loss\n");
  EXPECT_THROW(read_log_csv(dir / "head.csv"), FormatError);
}
