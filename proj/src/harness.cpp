#include "augmetrics/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>

#include "augmetrics/errors.hpp"
#include "augmetrics/parallel.hpp"
#include "augmetrics/textio.hpp"

namespace augmetrics {

using nlohmann::json;
namespace fs = std::filesystem;

void write_file_atomic(const fs::path &path, const std::string &content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw FormatError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string policy_slug(const std::string &label) {
  std::string slug;
  for (char c : label) {
    const bool keep = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') ||
                      (c >= '0' && c <= '9') || c == '.' || c == '-' || c == '+';
    slug += keep ? c : '_';
  }
  if (label == "Identity") return slug;
  char tag[9];
  std::snprintf(tag, sizeof tag, "%08x", static_cast<unsigned>(fnv1a(label) & 0xffffffffu));
  return slug + "-" + tag;
}

ExperimentData prepare_data(const DatasetConfig &cfg) {
  ExperimentData d;
  const std::size_t pool_size = cfg.train_size + cfg.val_size;
  LabeledDataset pool;
  if (cfg.source == "synthetic") {
    const auto k = static_cast<std::size_t>(cfg.num_classes);
    const int pool_per_class = static_cast<int>((pool_size + k - 1) / k);
    pool = make_synthetic_images(cfg.num_classes, pool_per_class, cfg.side,
                                 Rng::derive(cfg.seed, "pool_images").next_u64());
    const int test_per_class = static_cast<int>((cfg.test_size + k - 1) / k);
    LabeledDataset test = make_synthetic_images(
        cfg.num_classes, test_per_class, cfg.side, Rng::derive(cfg.seed, "test_images").next_u64());
    test.images.resize(cfg.test_size);
    test.labels.resize(cfg.test_size);
    d.test = std::move(test);
  } else {
    for (int b = 1; b <= 5 && pool.size() < pool_size; ++b) {
      const fs::path file = cfg.path / ("data_batch_" + std::to_string(b) + ".bin");
      if (!fs::exists(file)) break;
      LabeledDataset part = load_cifar_binary(file, pool_size - pool.size());
      pool.num_classes = part.num_classes;
      for (std::size_t i = 0; i < part.size(); ++i) {
        pool.images.push_back(std::move(part.images[i]));
        pool.labels.push_back(part.labels[i]);
      }
    }
    if (pool.size() < pool_size) {
      throw ValidationError("dataset.path: fewer than " + std::to_string(pool_size) +
                            " training records found");
    }
    pool.num_classes = 10;
    d.test = load_cifar_binary(cfg.path / "test_batch.bin", cfg.test_size);
    d.test.num_classes = 10;
    if (d.test.size() < cfg.test_size) {
      throw ValidationError("dataset.test_size exceeds the records in test_batch.bin");
    }
  }
  Split split = split_balanced(pool, cfg.train_size, cfg.val_size,
                               Rng::derive(cfg.seed, "split").next_u64());
  const NormalizationStats stats = fit_normalization(split.train);
  d.train = with_stats(std::move(split.train), stats);
  d.val = with_stats(std::move(split.val), stats);
  d.test = with_stats(std::move(d.test), stats);
  return d;
}

namespace {

enum class Variant { Dynamic, Static, Switched };

std::string_view to_string(Variant v) {
  switch (v) {
  case Variant::Dynamic: return "dynamic";
  case Variant::Static: return "static";
  case Variant::Switched: return "switched";
  }
  return "";
}

struct RunJob {
  std::string label;
  Policy policy;
  std::uint64_t seed = 0;
  Variant variant = Variant::Dynamic;
  std::int64_t switch_step = 0;
  TrainConfig config;
  fs::path dir;
  std::string key;
  std::vector<std::int64_t> required_checkpoints;
  const RunJob *base = nullptr; // switched runs only
};

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

fs::path checkpoint_path(const fs::path &dir, std::int64_t step) {
  return dir / ("ckpt-" + std::to_string(step));
}

struct Summary {
  bool found = false;
  std::string status; // complete | diverged
  RunSummary run;
};

Summary read_summary(const RunJob &job) {
  Summary s;
  const fs::path file = job.dir / "summary.json";
  if (!fs::exists(file)) return s;
  json j;
  try {
    std::ifstream in(file);
    j = json::parse(in);
  } catch (const json::exception &) {
    return s;
  }
  if (j.value("key", "") != job.key) return s;
  s.status = j.value("status", "");
  if (s.status != "complete" && s.status != "diverged") return s;
  if (s.status == "complete") {
    for (auto step : job.required_checkpoints)
      if (!fs::exists(checkpoint_path(job.dir, step))) return s;
    if (!fs::exists(job.dir / "log.csv")) return s;
  }
  s.found = true;
  s.run.seed = job.seed;
  if (s.status == "diverged") {
    s.run.diverged = true;
    s.run.diverged_at = j.at("diverged_at").get<std::int64_t>();
    return s;
  }
  s.run.final_train_loss = j.at("final_train_loss").get<double>();
  s.run.final_val_acc = j.at("final_val_acc").get<double>();
  s.run.test_acc = j.at("test_acc").get<double>();
  if (!j.at("steps_to_threshold").is_null()) {
    s.run.steps_to_threshold = j.at("steps_to_threshold").get<std::int64_t>();
  }
  return s;
}

json summary_json(const RunJob &job) {
  return {{"key", job.key},
          {"policy", job.label},
          {"seed", job.seed},
          {"variant", std::string(to_string(job.variant))},
          {"switch_step", job.variant == Variant::Switched ? json(job.switch_step) : json(nullptr)}};
}

/// Rebuilds the parts of a finished base run that resuming needs.
TrainRun load_base_run(const RunJob &base, const ModelSpec &spec, std::int64_t step) {
  TrainRun run;
  run.config = base.config;
  run.spec = spec;
  run.log = read_log_csv(base.dir / "log.csv");
  run.checkpoints[step] = read_checkpoint(checkpoint_path(base.dir, step));
  run.augmentations_per_step.assign(static_cast<std::size_t>(base.config.steps), 0);
  return run;
}

class Executor {
public:
  Executor(const ExperimentConfig &cfg, const ExperimentData &data, const ModelSpec &spec,
           const RunOptions &options)
      : cfg_(cfg), data_(data), spec_(spec), options_(options) {}

  void say(const std::string &msg) {
    if (!options_.progress) return;
    std::lock_guard lock(mu_);
    options_.progress(msg);
  }

  /// Returns false if the job failed with an unexpected error.
  bool execute(const RunJob &job) {
    const std::string name = job.dir.lexically_relative(cfg_.outputs).generic_string();
    say("run " + name);
    json summary = summary_json(job);
    try {
      TrainRun run;
      if (job.variant == Variant::Switched) {
        const TrainRun base = load_base_run(*job.base, spec_, job.switch_step);
        run = resume_without_augmentation(data_.train, data_.val, base, job.switch_step);
      } else {
        run = train(spec_, data_.train, data_.val, job.config);
      }
      fs::create_directories(job.dir);
      write_log_csv(run.log, job.dir / "log.csv.tmp");
      fs::rename(job.dir / "log.csv.tmp", job.dir / "log.csv");
      for (const auto &[step, ckpt] : run.checkpoints) {
        if (job.variant == Variant::Switched && step <= job.switch_step) continue;
        fs::path tmp = checkpoint_path(job.dir, step);
        tmp += ".tmp";
        write_checkpoint(tmp, ckpt);
        fs::rename(tmp, checkpoint_path(job.dir, step));
      }
      summary["status"] = "complete";
      summary["final_train_loss"] = run.final_train_loss;
      summary["final_val_acc"] = run.final_val_acc;
      summary["test_acc"] = accuracy(spec_, run.final_params, data_.test);
      summary["steps_to_threshold"] =
          run.steps_to_threshold ? json(*run.steps_to_threshold) : json(nullptr);
    } catch (const DivergenceError &e) {
      say("run " + name + " diverged at step " + std::to_string(e.step()));
      summary["status"] = "diverged";
      summary["diverged_at"] = e.step();
    } catch (const std::exception &e) {
      say("run " + name + " failed: " + e.what());
      return false;
    }
    write_file_atomic(job.dir / "summary.json", summary.dump(2) + "\n");
    return true;
  }

private:
  const ExperimentConfig &cfg_;
  const ExperimentData &data_;
  const ModelSpec &spec_;
  const RunOptions &options_;
  std::mutex mu_;
};

struct Plan {
  std::vector<std::unique_ptr<RunJob>> jobs;
  std::map<std::uint64_t, const RunJob *> clean;                               // seed
  std::map<std::pair<std::string, std::uint64_t>, const RunJob *> dynamic;     // label, seed
  std::map<std::pair<std::string, std::uint64_t>, const RunJob *> static_runs; // label, seed
  std::map<std::string, std::map<std::int64_t, std::vector<const RunJob *>>> switched;
};

bool needs_runs(const std::set<Task> &tasks) {
  return tasks.contains(Task::Affinity) || tasks.contains(Task::Diversity) ||
         tasks.contains(Task::SwitchOff) || tasks.contains(Task::StaticCompare);
}

std::string run_key(const ExperimentConfig &cfg, const RunJob &job) {
  json j = cfg.to_json();
  json k = {{"tool", std::string(kToolVersion)},
            {"dataset", j["dataset"]},
            {"model", j["model"]},
            {"train", j["train"]},
            {"policy", job.label},
            {"seed", job.seed},
            {"variant", std::string(to_string(job.variant))},
            {"switch_step", job.switch_step}};
  return hex(fnv1a(k.dump()));
}

Plan make_plan(const ExperimentConfig &cfg) {
  Plan plan;
  if (!needs_runs(cfg.tasks)) return plan;
  const fs::path runs = cfg.outputs / "runs";
  const std::int64_t steps = cfg.train.steps;
  const bool switchoff = cfg.tasks.contains(Task::SwitchOff);
  const auto candidates = switchoff ? cfg.switchoff.candidates(steps) : std::vector<std::int64_t>{};

  auto add = [&](const std::string &label, const Policy &policy, std::uint64_t seed,
                 Variant variant, std::int64_t switch_step) {
    auto job = std::make_unique<RunJob>();
    job->label = label;
    job->policy = policy;
    job->seed = seed;
    job->variant = variant;
    job->switch_step = switch_step;
    job->config = cfg.train;
    job->config.policy = policy;
    job->config.seed = seed;
    job->config.mode = variant == Variant::Static ? AugmentMode::Static : AugmentMode::Dynamic;
    job->config.checkpoint_steps = {steps};
    std::string dir = policy_slug(label);
    if (variant == Variant::Static) dir += "@static";
    if (variant == Variant::Switched) dir += "@switch-" + std::to_string(switch_step);
    job->dir = runs / dir / std::to_string(seed);
    job->key = run_key(cfg, *job);
    job->required_checkpoints = {steps};
    plan.jobs.push_back(std::move(job));
    return plan.jobs.back().get();
  };

  const Policy identity;
  for (auto seed : cfg.seeds) plan.clean[seed] = add("Identity", identity, seed, Variant::Dynamic, 0);
  const bool dynamic_needed = cfg.tasks.contains(Task::Diversity) || switchoff ||
                              cfg.tasks.contains(Task::StaticCompare);
  for (const auto &policy : cfg.policies) {
    const std::string label = policy.label();
    for (auto seed : cfg.seeds) {
      if (policy.is_identity()) {
        plan.dynamic[{label, seed}] = plan.clean[seed];
        plan.static_runs[{label, seed}] = plan.clean[seed];
        continue;
      }
      RunJob *dyn = nullptr;
      if (dynamic_needed) {
        dyn = add(label, policy, seed, Variant::Dynamic, 0);
        plan.dynamic[{label, seed}] = dyn;
      }
      if (cfg.tasks.contains(Task::StaticCompare)) {
        plan.static_runs[{label, seed}] = add(label, policy, seed, Variant::Static, 0);
      }
      if (switchoff) {
        for (auto t : candidates) {
          dyn->config.checkpoint_steps.push_back(t);
          dyn->required_checkpoints.push_back(t);
          RunJob *sw = add(label, policy, seed, Variant::Switched, t);
          sw->base = dyn;
          plan.switched[label][t].push_back(sw);
        }
        std::sort(dyn->config.checkpoint_steps.begin(), dyn->config.checkpoint_steps.end());
      }
    }
  }
  return plan;
}

std::uint64_t affinity_seed(std::uint64_t seed) {
  return Rng::derive(seed, "affinity_val").next_u64();
}

std::string csv_opt(const std::optional<double> &v) { return v ? format_double(*v) : ""; }

} // namespace

ExperimentOutcome run_experiment(const ExperimentConfig &cfg, const RunOptions &options) {
  cfg.validate();
  ExperimentOutcome outcome;
  outcome.results_dir = cfg.outputs;
  fs::create_directories(cfg.outputs);
  write_file_atomic(cfg.outputs / "config.json", cfg.to_json().dump(2) + "\n");
  auto say = [&](const std::string &msg) {
    if (options.progress) options.progress(msg);
  };

  json manifest = {{"tool_version", std::string(kToolVersion)},
                   {"config_hash", hex(cfg.hash())},
                   {"runs", json::array()}};

  // Toy Gaussian sweep: cached on its own key.
  if (cfg.tasks.contains(Task::ToyGauss)) {
    const json toy_cfg = cfg.to_json()["toygauss"];
    const std::string toy_key =
        hex(fnv1a(json{{"tool", std::string(kToolVersion)}, {"toygauss", toy_cfg}}.dump()));
    const fs::path key_file = cfg.outputs / "toy_key";
    bool cached = false;
    if (fs::exists(key_file) && fs::exists(cfg.outputs / "toy_affinity.tsv") &&
        fs::exists(cfg.outputs / "toy_kl.tsv")) {
      std::ifstream in(key_file);
      std::string k;
      in >> k;
      cached = k == toy_key;
    }
    if (cached) {
      say("toygauss cached");
      ++outcome.cached;
    } else {
      say("toygauss sweep");
      ToyConfig toy = cfg.toy;
      toy.jobs = options.jobs;
      const ShiftGrid grid = run_toy_experiment(toy);
      write_grid_tsv(grid.axis, grid.affinity, cfg.outputs / "toy_affinity.tsv");
      write_grid_tsv(grid.axis, grid.kl, cfg.outputs / "toy_kl.tsv");
      write_grid_tsv(grid.axis, grid.affinity_sem, cfg.outputs / "toy_affinity_sem.tsv");
      write_profiles_tsv(grid, cfg.outputs / "toy_profiles.tsv");
      write_file_atomic(key_file, toy_key + "\n");
      ++outcome.executed;
    }
    manifest["toygauss_key"] = toy_key;
  }

  if (!needs_runs(cfg.tasks)) {
    manifest["last_invocation"] = {
        {"executed", outcome.executed}, {"cached", outcome.cached}, {"failed", 0}};
    write_file_atomic(cfg.outputs / "manifest.json", manifest.dump(2) + "\n");
    outcome.complete = true;
    return outcome;
  }

  const ExperimentData data = prepare_data(cfg.dataset);
  const ModelSpec spec = cfg.model.spec_for(data.train.shape(), cfg.dataset.num_classes);
  const Plan plan = make_plan(cfg);
  Executor exec(cfg, data, spec, options);

  std::map<const RunJob *, Summary> done;
  std::set<const RunJob *> failed;
  std::size_t budget = options.run_budget.value_or(SIZE_MAX);
  bool stopped = false;

  auto run_phase = [&](bool switched_phase) {
    std::vector<const RunJob *> pending;
    for (const auto &job : plan.jobs) {
      if ((job->variant == Variant::Switched) != switched_phase) continue;
      if (switched_phase) {
        const auto base = done.find(job->base);
        if (base == done.end() || base->second.run.diverged) continue;
      }
      Summary s = read_summary(*job);
      if (s.found) {
        done[job.get()] = s;
        ++outcome.cached;
      } else {
        pending.push_back(job.get());
      }
    }
    if (pending.size() > budget) {
      pending.resize(budget);
      stopped = true;
    }
    budget -= pending.size();
    std::vector<char> ok(pending.size(), 0);
    parallel_for(pending.size(), options.jobs,
                 [&](std::size_t i) { ok[i] = exec.execute(*pending[i]) ? 1 : 0; });
    for (std::size_t i = 0; i < pending.size(); ++i) {
      if (!ok[i]) {
        failed.insert(pending[i]);
        ++outcome.failed;
        continue;
      }
      ++outcome.executed;
      done[pending[i]] = read_summary(*pending[i]);
    }
  };

  run_phase(false);
  if (!stopped) run_phase(true);

  for (const auto &job : plan.jobs) {
    json entry = {{"run", job->dir.lexically_relative(cfg.outputs).generic_string()},
                  {"key", job->key}};
    const auto it = done.find(job.get());
    entry["status"] = it != done.end() ? it->second.status
                      : failed.contains(job.get()) ? "failed"
                                                   : "pending";
    manifest["runs"].push_back(entry);
  }
  manifest["last_invocation"] = {
      {"executed", outcome.executed}, {"cached", outcome.cached}, {"failed", outcome.failed}};
  write_file_atomic(cfg.outputs / "manifest.json", manifest.dump(2) + "\n");
  if (stopped) {
    say("run budget exhausted; rerun to continue");
    return outcome;
  }

  // Aggregation reads only what is on disk, so fresh and cached runs give
  // identical rows.
  auto summaries = [&](const std::vector<const RunJob *> &jobs)
      -> std::optional<std::vector<RunSummary>> {
    std::vector<RunSummary> out;
    for (const RunJob *j : jobs) {
      const auto it = done.find(j);
      if (it == done.end()) return std::nullopt;
      out.push_back(it->second.run);
    }
    return out;
  };

  std::map<std::uint64_t, Params> clean_params;
  auto clean_model = [&](std::uint64_t seed) -> const Params * {
    const auto cached = clean_params.find(seed);
    if (cached != clean_params.end()) return &cached->second;
    const RunJob *job = plan.clean.at(seed);
    const auto it = done.find(job);
    if (it == done.end() || it->second.run.diverged) return nullptr;
    clean_params[seed] = read_checkpoint(checkpoint_path(job->dir, cfg.train.steps)).params;
    return &clean_params[seed];
  };

  std::ostringstream switch_csv;
  switch_csv << "policy_label,step,mean_val_acc,mean_test_acc,lift,lift_sem,pairs\n";
  std::ostringstream static_csv;
  static_csv << "policy_label,dynamic_loss,static_loss,paired_diff,paired_sem,num_seeds\n";

  for (const auto &policy : cfg.policies) {
    const std::string label = policy.label();
    MetricsRecord rec;
    rec.policy_label = label;
    rec.num_seeds = static_cast<int>(cfg.seeds.size());

    if (cfg.tasks.contains(Task::Affinity)) {
      std::vector<std::pair<double, double>> pairs;
      for (auto seed : cfg.seeds) {
        const Params *p = clean_model(seed);
        if (!p) {
          pairs.clear();
          break;
        }
        const AffinityResult a = affinity_detail(spec, *p, data.val, policy, affinity_seed(seed));
        pairs.emplace_back(a.augmented_acc, a.clean_acc);
      }
      if (pairs.size() == cfg.seeds.size()) {
        if (pairs.size() >= 2) {
          const PairedStats s = paired_sem(pairs);
          rec.affinity = s.mean_diff;
          rec.affinity_sem = s.sem;
        } else {
          rec.affinity = pairs[0].first - pairs[0].second;
        }
      }
    }

    std::vector<const RunJob *> dyn_jobs;
    for (auto seed : cfg.seeds) {
      const auto it = plan.dynamic.find({label, seed});
      if (it != plan.dynamic.end()) dyn_jobs.push_back(it->second);
    }
    const auto dyn = dyn_jobs.size() == cfg.seeds.size() ? summaries(dyn_jobs) : std::nullopt;

    if (cfg.tasks.contains(Task::Diversity) && dyn) {
      rec.diversity_loss = diversity_loss(*dyn);
      rec.steps_to_threshold = mean_steps_to_threshold(*dyn);
      if (rec.diversity_loss) {
        std::vector<double> test;
        for (const auto &r : *dyn) test.push_back(r.test_acc);
        if (test.size() >= 2) {
          const PairedStats s = mean_sem(test);
          rec.test_acc = s.mean_diff;
          rec.test_acc_sem = s.sem;
        } else {
          rec.test_acc = test[0];
        }
      }
    }

    if (cfg.tasks.contains(Task::Entropy) && entropy_defined(policy)) {
      rec.diversity_entropy = diversity_entropy(policy, data.train.shape());
    }

    if (cfg.tasks.contains(Task::SwitchOff) && !policy.is_identity() && dyn &&
        plan.switched.contains(label)) {
      std::map<std::int64_t, std::vector<RunSummary>> by_step;
      for (const auto &[step, jobs] : plan.switched.at(label)) {
        for (const RunJob *j : jobs) {
          const auto it = done.find(j);
          if (it != done.end()) by_step[step].push_back(it->second.run);
        }
      }
      try {
        const SwitchOffResult r = switch_off_lift(*dyn, by_step);
        rec.switch_off_lift = r.lift;
        rec.best_switch_step = r.best_step;
        for (const auto &pt : r.curve) {
          switch_csv << csv_field(label) << ',' << pt.step << ',' << format_double(pt.mean_val_acc)
                     << ',' << format_double(pt.mean_test_acc) << ',' << format_double(pt.lift)
                     << ',' << csv_opt(pt.lift_sem) << ',' << pt.pairs << '\n';
        }
      } catch (const ValidationError &e) {
        say("switch-off for " + label + ": " + e.what());
      }
    }

    if (cfg.tasks.contains(Task::StaticCompare) && dyn) {
      std::vector<const RunJob *> st_jobs;
      for (auto seed : cfg.seeds) st_jobs.push_back(plan.static_runs.at({label, seed}));
      const auto st = summaries(st_jobs);
      if (st) {
        const auto dl = diversity_loss(*dyn);
        const auto sl = diversity_loss(*st);
        std::optional<double> diff, sem;
        if (dl && sl) {
          std::vector<std::pair<double, double>> pairs;
          for (std::size_t i = 0; i < st->size(); ++i) {
            pairs.emplace_back((*dyn)[i].final_train_loss, (*st)[i].final_train_loss);
          }
          if (pairs.size() >= 2) {
            const PairedStats s = paired_sem(pairs);
            diff = s.mean_diff;
            sem = s.sem;
          } else {
            diff = pairs[0].first - pairs[0].second;
          }
        }
        static_csv << csv_field(label) << ',' << csv_opt(dl) << ',' << csv_opt(sl) << ','
                   << csv_opt(diff) << ',' << csv_opt(sem) << ',' << cfg.seeds.size() << '\n';
      }
    }
    outcome.records.push_back(std::move(rec));
  }

  write_file_atomic(cfg.outputs / "results.csv", format_results_csv(outcome.records));
  if (cfg.tasks.contains(Task::SwitchOff)) {
    write_file_atomic(cfg.outputs / "switchoff.csv", switch_csv.str());
  }
  if (cfg.tasks.contains(Task::StaticCompare)) {
    write_file_atomic(cfg.outputs / "static_compare.csv", static_csv.str());
  }
  outcome.complete = true;
  return outcome;
}

} // namespace augmetrics
