#include <cstdlib>
#include <sys/wait.h>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "helpers.hpp"

using testutil::TempDir;

namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

Result run(const TempDir &dir, const std::string &args) {
  const auto out = dir / "stdout.txt";
  const auto err = dir / "stderr.txt";
  const std::string cmd = std::string("\"") + AUGMETRICS_CLI + "\" " + args + " >\"" +
                          out.string() + "\" 2>\"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = testutil::slurp(out);
  r.err = testutil::slurp(err);
  return r;
}

std::string tiny_config(const TempDir &dir) {
  const nlohmann::json j = {
      {"dataset", {{"num_classes", 3}, {"side", 8}, {"train_size", 48}, {"val_size", 24},
                   {"test_size", 24}}},
      {"model", {{"conv_channels", 2}}},
      {"train", {{"steps", 20}, {"batch_size", 8}, {"log_every", 5}, {"val_every", 10},
                 {"final_loss_window", 2}}},
      {"policies", {"Identity", "FlipLR(50%)"}},
      {"seeds", {1, 2}},
  };
  testutil::spit(dir / "cfg.json", j.dump());
  return (dir / "cfg.json").string();
}

} // namespace

TEST(Cli, UnknownFlagExitsOne) {
  TempDir dir;
  EXPECT_EQ(run(dir, "sweep --definitely-not-a-flag").code, 1);
}

TEST(Cli, HelpExitsZero) {
  TempDir dir;
  const Result r = run(dir, "--help");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("toygauss"), std::string::npos);
}

TEST(Cli, InvalidConfigNamesField) {
  TempDir dir;
  testutil::spit(dir / "bad.json", R"({"train": {"steps": -5}, "policies": ["Identity"]})");
  const Result r = run(dir, "sweep --config " + (dir / "bad.json").string() + " --out " +
                                (dir / "o").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("train.steps"), std::string::npos) << r.err;

  testutil::spit(dir / "broken.json", "{ not json");
  EXPECT_EQ(run(dir, "sweep --config " + (dir / "broken.json").string()).code, 1);
  EXPECT_EQ(run(dir, "train --policy 'Blur(2,5%)' --config " + tiny_config(dir)).code, 1);
}

TEST(Cli, TrainWritesRunFiles) {
  TempDir dir;
  const Result r = run(dir, "train --policy 'FlipLR(50%)' --seed 3 --config " + tiny_config(dir) +
                                " --out " + (dir / "run").string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(std::filesystem::exists(dir / "run/log.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "run/ckpt-20"));
  const auto summary = nlohmann::json::parse(testutil::slurp(dir / "run/summary.json"));
  EXPECT_EQ(summary["policy"], "FlipLR(50%)");
  EXPECT_EQ(summary["seed"], 3);
}

TEST(Cli, SweepResumesAndReports) {
  TempDir dir;
  const std::string base = "--config " + tiny_config(dir) + " --out " + (dir / "o").string();
  const Result part = run(dir, "sweep --max-runs 1 " + base);
  ASSERT_EQ(part.code, 0) << part.err;
  EXPECT_NE(part.out.find("incomplete"), std::string::npos);
  const Result rest = run(dir, "sweep " + base);
  ASSERT_EQ(rest.code, 0) << rest.err;
  EXPECT_NE(rest.out.find("1 cached"), std::string::npos) << rest.out;
  const Result rep = run(dir, "report " + (dir / "o").string());
  EXPECT_EQ(rep.code, 0) << rep.err;
  EXPECT_NE(rep.out.find("FlipLR(50%)"), std::string::npos);
  EXPECT_EQ(run(dir, "report " + (dir / "missing").string()).code, 1);
}
