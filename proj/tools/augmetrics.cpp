// Command-line front end: training, metric sweeps, the toy Gaussian field and
// reporting.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "augmetrics/errors.hpp"
#include "augmetrics/harness.hpp"
#include "augmetrics/metrics.hpp"

namespace am = augmetrics;
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config;
  int jobs = 1;
  std::string out;
  std::optional<std::uint64_t> seed;
};

am::ExperimentConfig load_config(const Globals &g) {
  am::ExperimentConfig cfg = g.config.empty() ? am::ExperimentConfig{}
                                              : am::ExperimentConfig::load(g.config);
  if (!g.out.empty()) cfg.outputs = g.out;
  if (g.seed) {
    cfg.seeds = {*g.seed};
    cfg.toy.seed = *g.seed;
  }
  if (g.config.empty() && cfg.seeds.empty()) {
    for (std::uint64_t s = 0; s < 10; ++s) cfg.seeds.push_back(s);
  }
  return cfg;
}

void print_progress(const std::string &msg) { std::cerr << msg << '\n'; }

int sweep(am::ExperimentConfig cfg, const Globals &g, std::optional<std::set<am::Task>> tasks,
          std::optional<std::size_t> max_runs) {
  if (tasks) cfg.tasks = *tasks;
  am::RunOptions opts;
  opts.jobs = g.jobs;
  opts.run_budget = max_runs;
  opts.progress = print_progress;
  const am::ExperimentOutcome outcome = am::run_experiment(cfg, opts);
  std::cout << "runs: " << outcome.executed << " executed, " << outcome.cached << " cached, "
            << outcome.failed << " failed\n";
  if (!outcome.complete) {
    std::cout << "incomplete: rerun the same command to finish\n";
    return 0;
  }
  if (fs::exists(cfg.outputs / "results.csv")) {
    const am::ReportOutputs rep = am::report(cfg.outputs, cfg.outputs / "report");
    std::cout << rep.table_text;
  }
  std::cout << "results in " << cfg.outputs.string() << '\n';
  return outcome.failed == 0 ? 0 : 2;
}

int train_one(const Globals &g, const std::string &policy_label, bool static_mode,
              std::optional<std::int64_t> switch_off) {
  am::ExperimentConfig cfg = load_config(g);
  const fs::path out = g.out.empty() ? fs::path("run") : fs::path(g.out);
  const am::Policy policy = am::parse_policy_label(policy_label);
  const std::uint64_t seed = g.seed ? *g.seed : (cfg.seeds.empty() ? 0 : cfg.seeds.front());

  const am::ExperimentData data = am::prepare_data(cfg.dataset);
  const am::ModelSpec spec = cfg.model.spec_for(data.train.shape(), cfg.dataset.num_classes);
  am::TrainConfig tc = cfg.train;
  tc.policy = policy;
  tc.seed = seed;
  tc.mode = static_mode ? am::AugmentMode::Static : am::AugmentMode::Dynamic;
  tc.switch_off_step = switch_off;
  tc.checkpoint_steps = {tc.steps};
  const am::TrainRun run = am::train(spec, data.train, data.val, tc);
  const double test_acc = am::accuracy(spec, run.final_params, data.test);

  fs::create_directories(out);
  am::write_log_csv(run.log, out / "log.csv");
  am::write_checkpoint(out / ("ckpt-" + std::to_string(tc.steps)), run.checkpoints.at(tc.steps));
  nlohmann::json summary = {
      {"policy", policy.label()},
      {"seed", seed},
      {"model", spec.describe()},
      {"final_train_loss", run.final_train_loss},
      {"final_val_acc", run.final_val_acc},
      {"test_acc", test_acc},
      {"steps_to_threshold",
       run.steps_to_threshold ? nlohmann::json(*run.steps_to_threshold) : nlohmann::json()}};
  am::write_file_atomic(out / "summary.json", summary.dump(2) + "\n");
  std::cout << summary.dump(2) << '\n';
  return 0;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Affinity and Diversity measurements for data augmentation policies"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "Experiment config (JSON)");
  app.add_option("--jobs", g.jobs, "Concurrent training runs")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--seed", g.seed, "Use this single seed instead of the config's list");

  std::string policy = "Identity";
  bool static_mode = false;
  std::optional<std::int64_t> switch_off;
  auto *train_cmd = app.add_subcommand("train", "Train one model and write its log and checkpoint");
  train_cmd->add_option("--policy", policy, "Policy label, e.g. 'Crop(4,100%)+FlipLR(50%)'");
  train_cmd->add_flag("--static", static_mode, "Materialize one augmented copy before training");
  train_cmd->add_option("--switch-off-step", switch_off, "Step from which augmentation is off");

  auto *affinity_cmd = app.add_subcommand("affinity", "Affinity of each policy against clean models");
  auto *diversity_cmd =
      app.add_subcommand("diversity", "Final training loss and entropy of each policy");
  auto *switchoff_cmd =
      app.add_subcommand("switchoff", "Switch-off sweep for each policy");
  auto *toy_cmd = app.add_subcommand("toygauss", "Affinity and KL fields on the two-Gaussian task");
  std::optional<std::size_t> max_runs;
  auto *sweep_cmd = app.add_subcommand("sweep", "Every task listed in the config");
  sweep_cmd->add_option("--max-runs", max_runs, "Stop after this many new training runs");
  std::string results_dir;
  std::string report_dir;
  auto *report_cmd = app.add_subcommand("report", "Scatter data, switch-off curves and a summary table");
  report_cmd->add_option("results", results_dir, "Results directory (default: --out)");
  report_cmd->add_option("--report-dir", report_dir, "Where to write report files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    using am::Task;
    if (*train_cmd) return train_one(g, policy, static_mode, switch_off);
    if (*affinity_cmd) return sweep(load_config(g), g, std::set{Task::Affinity}, std::nullopt);
    if (*diversity_cmd) {
      return sweep(load_config(g), g, std::set{Task::Diversity, Task::Entropy}, std::nullopt);
    }
    if (*switchoff_cmd) {
      return sweep(load_config(g), g, std::set{Task::Diversity, Task::SwitchOff}, std::nullopt);
    }
    if (*toy_cmd) return sweep(load_config(g), g, std::set{Task::ToyGauss}, std::nullopt);
    if (*sweep_cmd) return sweep(load_config(g), g, std::nullopt, max_runs);
    if (*report_cmd) {
      const fs::path dir = !results_dir.empty() ? fs::path(results_dir)
                           : !g.out.empty()     ? fs::path(g.out)
                                                : fs::path("results");
      const fs::path dest = report_dir.empty() ? dir / "report" : fs::path(report_dir);
      const am::ReportOutputs rep = am::report(dir, dest);
      std::cout << rep.table_text;
      std::cout << "scatter: " << rep.scatter.string() << '\n';
      for (const auto &c : rep.switch_off_curves) std::cout << "curve: " << c.string() << '\n';
      return 0;
    }
  } catch (const am::ValidationError &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const am::FormatError &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const nlohmann::json::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
