#include "augmetrics/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include "augmetrics/errors.hpp"
#include "augmetrics/textio.hpp"

namespace augmetrics {

void TrainConfig::validate(std::size_t train_size) const {
  if (steps < 0) throw ValidationError("train.steps must be >= 0");
  if (batch_size < 1) throw ValidationError("train.batch_size must be >= 1");
  if (static_cast<std::size_t>(batch_size) > train_size) {
    throw ValidationError("train.batch_size " + std::to_string(batch_size) +
                          " exceeds training set size " + std::to_string(train_size));
  }
  if (!(base_lr > 0.0) || !std::isfinite(base_lr)) {
    throw ValidationError("train.base_lr must be finite and > 0");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ValidationError("train.momentum must be in [0, 1)");
  }
  if (!(l2_coeff >= 0.0)) throw ValidationError("train.l2_coeff must be >= 0");
  if (switch_off_step && (*switch_off_step < 0 || *switch_off_step >= steps)) {
    throw ValidationError("train.switch_off_step must be in [0, steps)");
  }
  if (l2_off_step && *l2_off_step < 0) {
    throw ValidationError("train.l2_off_step must be >= 0");
  }
  if (lr_schedule.kind == LrSchedule::Kind::StepDecay && !(lr_schedule.factor > 0.0)) {
    throw ValidationError("train.lr_schedule.factor must be > 0");
  }
  if (log_every < 1) throw ValidationError("train.log_every must be >= 1");
  if (val_every < 1) throw ValidationError("train.val_every must be >= 1");
  if (final_loss_window < 1) throw ValidationError("train.final_loss_window must be >= 1");
  for (auto s : checkpoint_steps) {
    if (s < 0 || s > steps) {
      throw ValidationError("train.checkpoint_steps entry " + std::to_string(s) +
                            " outside [0, steps]");
    }
  }
  policy.validate();
}

double lr_at(const TrainConfig &config, std::int64_t step) {
  switch (config.lr_schedule.kind) {
  case LrSchedule::Kind::Cosine:
    return config.base_lr * 0.5 *
           (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) /
                           static_cast<double>(config.steps)));
  case LrSchedule::Kind::StepDecay:
    return step < config.lr_schedule.decay_step
               ? config.base_lr
               : config.base_lr / config.lr_schedule.factor;
  case LrSchedule::Kind::Constant:
    return config.base_lr;
  }
  return config.base_lr;
}

namespace {

std::vector<std::size_t> epoch_permutation(std::uint64_t seed, std::size_t n,
                                           std::uint64_t epoch) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng = Rng::derive(seed, "epoch_shuffle", {epoch});
  for (std::size_t i = n; i > 1; --i) {
    std::swap(perm[i - 1], perm[rng.uniform_int(i)]);
  }
  return perm;
}

class EpochShuffler {
public:
  EpochShuffler(std::uint64_t seed, std::size_t n) : seed_(seed), n_(n) {}

  std::size_t at(std::uint64_t position) {
    const std::uint64_t epoch = position / n_;
    if (!cached_ || epoch != epoch_) {
      perm_ = epoch_permutation(seed_, n_, epoch);
      epoch_ = epoch;
      cached_ = true;
    }
    return perm_[position % n_];
  }

private:
  std::uint64_t seed_;
  std::size_t n_;
  std::uint64_t epoch_ = 0;
  bool cached_ = false;
  std::vector<std::size_t> perm_;
};

struct Prepared {
  LabeledDataset train;
  LabeledDataset val;
};

Prepared prepare(const ModelSpec &spec, const LabeledDataset &train_set,
                 const LabeledDataset &val_set) {
  if (train_set.empty()) throw ValidationError("train: training set is empty");
  if (train_set.shape().size() != spec.input_size()) {
    throw ValidationError("train: training images do not match model input shape");
  }
  if (train_set.num_classes > spec.num_classes) {
    throw ValidationError("train: dataset has more classes than the model");
  }
  Prepared p{train_set, val_set};
  if (!p.train.values_normalized && !p.train.stats.fitted()) {
    p.train.stats = fit_normalization(p.train);
  }
  if (!p.val.values_normalized && !p.val.stats.fitted()) {
    p.val.stats = p.train.stats;
  }
  return p;
}

struct Loop {
  const ModelSpec &spec;
  const LabeledDataset &clean;
  const LabeledDataset *materialized; // static mode only
  const LabeledDataset &val;
  const TrainConfig &config;
  TrainRun &run;

  void execute(Params &params, std::vector<float> &velocity, std::int64_t from) {
    const std::size_t n = clean.size();
    const std::size_t d = spec.input_size();
    const auto bs = static_cast<std::size_t>(config.batch_size);
    const AugmentContext ctx = AugmentContext::for_dataset(clean);
    const bool dynamic = config.mode == AugmentMode::Dynamic && !config.policy.is_identity();
    const Rng::State rng_state = Rng::derive(config.seed, "train").state();

    EpochShuffler shuffler(config.seed, n);
    std::vector<float> inputs(bs * d);
    std::vector<int> labels(bs);

    auto snapshot = [&](std::int64_t step) {
      if (std::find(config.checkpoint_steps.begin(), config.checkpoint_steps.end(), step) ==
          config.checkpoint_steps.end()) {
        return;
      }
      run.checkpoints[step] = Checkpoint{step, spec.hash(), rng_state, params, velocity};
    };

    for (std::int64_t step = from; step < config.steps; ++step) {
      snapshot(step);
      const bool augment_off = config.switch_off_step && step >= *config.switch_off_step;
      const LabeledDataset &source =
          (materialized && !augment_off) ? *materialized : clean;

      std::uint32_t applied = 0;
      for (std::size_t j = 0; j < bs; ++j) {
        const std::size_t idx =
            shuffler.at(static_cast<std::uint64_t>(step) * bs + j);
        labels[j] = source.labels[idx];
        const std::span<float> dst(inputs.data() + j * d, d);
        if (dynamic && !augment_off) {
          Rng rng = Rng::derive(config.seed, "augment",
                                {static_cast<std::uint64_t>(step), idx});
          PolicyTrace trace;
          const Image aug =
              apply_policy_dynamic(config.policy, source.images[idx], rng, ctx, &trace);
          applied += static_cast<std::uint32_t>(trace.applied);
          write_model_input(aug, source.stats, source.values_normalized, dst);
        } else {
          write_model_input(source.images[idx], source.stats, source.values_normalized, dst);
        }
      }
      run.augmentations_per_step[static_cast<std::size_t>(step)] = applied;

      const bool l2_off = config.l2_off_step && step >= *config.l2_off_step;
      const double l2 = l2_off ? 0.0 : config.l2_coeff;
      const BatchEval ev = evaluate(spec, params, Batch{inputs, labels}, l2, true);
      if (!std::isfinite(ev.loss)) {
        throw DivergenceError(step, "training diverged: non-finite loss at step " +
                                        std::to_string(step));
      }

      const double lr = lr_at(config, step);
      for (std::size_t i = 0; i < params.values.size(); ++i) {
        const double v = config.momentum * static_cast<double>(velocity[i]) - lr * ev.grad[i];
        velocity[i] = static_cast<float>(v);
        params.values[i] = static_cast<float>(static_cast<double>(params.values[i]) +
                                              static_cast<double>(velocity[i]));
      }

      const bool last = step + 1 == config.steps;
      if (step % config.log_every == 0 || last) {
        LogEntry e;
        e.step = step;
        e.lr = lr;
        e.train_loss = ev.data_loss;
        e.train_acc = ev.accuracy;
        if (step % config.val_every == 0 || last) {
          e.val_acc = accuracy(spec, params, val);
        }
        run.log.push_back(e);
      }
    }
    snapshot(config.steps);
  }
};

void finalize(TrainRun &run, const Params &params, const std::vector<float> &velocity,
              const ModelSpec &spec, const LabeledDataset &val) {
  run.final_params = params;
  run.final_velocity = velocity;
  run.steps_to_threshold = first_step_reaching(run.log, run.config.train_acc_threshold);
  run.final_train_loss = run.log.empty()
                             ? 0.0
                             : trailing_train_loss(run.log, run.config.final_loss_window);
  if (!run.log.empty() && run.log.back().val_acc) {
    run.final_val_acc = *run.log.back().val_acc;
  } else {
    run.final_val_acc = val.empty() ? 0.0 : accuracy(spec, params, val);
  }
}

} // namespace

std::size_t example_at(std::uint64_t seed, std::size_t dataset_size,
                       std::uint64_t position) {
  return epoch_permutation(seed, dataset_size, position / dataset_size)[position % dataset_size];
}

double trailing_train_loss(const std::vector<LogEntry> &log, int window) {
  if (log.empty()) throw ValidationError("trailing_train_loss: empty log");
  const std::size_t w = std::min(log.size(), static_cast<std::size_t>(std::max(window, 1)));
  double s = 0.0;
  for (std::size_t i = log.size() - w; i < log.size(); ++i) s += log[i].train_loss;
  return s / static_cast<double>(w);
}

std::optional<std::int64_t> first_step_reaching(const std::vector<LogEntry> &log,
                                                double threshold) {
  for (const auto &e : log)
    if (e.train_acc >= threshold) return e.step;
  return std::nullopt;
}

TrainRun train(const ModelSpec &spec, const LabeledDataset &train_set,
               const LabeledDataset &val_set, const TrainConfig &config) {
  spec.validate();
  config.validate(train_set.size());
  const Prepared data = prepare(spec, train_set, val_set);
  if (!config.policy.is_identity()) config.policy.validate_for(data.train.shape());

  TrainRun run;
  run.config = config;
  run.spec = spec;
  run.augmentations_per_step.assign(static_cast<std::size_t>(config.steps), 0);

  Params params = init(spec, config.seed);
  std::vector<float> velocity(params.size(), 0.0f);

  std::optional<LabeledDataset> materialized;
  if (config.mode == AugmentMode::Static && !config.policy.is_identity()) {
    const std::uint64_t static_seed = Rng::derive(config.seed, "static").next_u64();
    materialized = materialize_static(config.policy, data.train, static_seed);
  }

  Loop loop{spec, data.train, materialized ? &*materialized : nullptr, data.val, config, run};
  loop.execute(params, velocity, 0);
  finalize(run, params, velocity, spec, data.val);
  return run;
}

TrainRun resume_without_augmentation(const LabeledDataset &train_set,
                                     const LabeledDataset &val_set,
                                     const TrainRun &run, std::int64_t from_step) {
  if (from_step == run.config.steps) return run;
  const auto it = run.checkpoints.find(from_step);
  if (it == run.checkpoints.end()) {
    throw std::out_of_range("resume: run has no checkpoint at step " +
                            std::to_string(from_step));
  }
  const Checkpoint &ckpt = it->second;
  if (ckpt.spec_hash != run.spec.hash()) {
    throw ValidationError("resume: checkpoint was written for a different model");
  }

  const Prepared data = prepare(run.spec, train_set, val_set);
  TrainRun out;
  out.config = run.config;
  if (!out.config.switch_off_step || *out.config.switch_off_step > from_step) {
    out.config.switch_off_step = from_step;
  }
  out.spec = run.spec;
  for (const auto &e : run.log)
    if (e.step < from_step) out.log.push_back(e);
  for (const auto &[step, c] : run.checkpoints)
    if (step <= from_step) out.checkpoints.emplace(step, c);
  out.augmentations_per_step.assign(run.augmentations_per_step.begin(),
                                    run.augmentations_per_step.begin() + from_step);
  out.augmentations_per_step.resize(static_cast<std::size_t>(out.config.steps), 0);

  Params params = ckpt.params;
  std::vector<float> velocity = ckpt.velocity;
  // Augmentation is off for every remaining step, so the static set is not
  // needed.
  Loop loop{run.spec, data.train, nullptr, data.val, out.config, out};
  loop.execute(params, velocity, from_step);
  finalize(out, params, velocity, run.spec, data.val);
  return out;
}

void write_log_csv(const std::vector<LogEntry> &log, const std::filesystem::path &path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "step,lr,train_loss,train_acc,val_acc\n";
  for (const auto &e : log) {
    out << e.step << ',' << format_double(e.lr) << ',' << format_double(e.train_loss) << ','
        << format_double(e.train_acc) << ',' << (e.val_acc ? format_double(*e.val_acc) : "")
        << '\n';
  }
}

std::vector<LogEntry> read_log_csv(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (trim(line) != "step,lr,train_loss,train_acc,val_acc") {
    throw FormatError(path.string() + ":1: unexpected log header");
  }
  std::vector<LogEntry> log;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split(trim(line), ',');
    const auto fail = [&] {
      return FormatError(path.string() + ":" + std::to_string(lineno) + ": malformed log row");
    };
    if (cells.size() != 5) throw fail();
    LogEntry e;
    const auto step = parse_int(cells[0]);
    const auto lr = parse_double(cells[1]);
    const auto loss = parse_double(cells[2]);
    const auto acc = parse_double(cells[3]);
    if (!step || !lr || !loss || !acc) throw fail();
    e.step = *step;
    e.lr = *lr;
    e.train_loss = *loss;
    e.train_acc = *acc;
    if (!trim(cells[4]).empty()) {
      const auto v = parse_double(cells[4]);
      if (!v) throw fail();
      e.val_acc = *v;
    }
    log.push_back(e);
  }
  return log;
}

} // namespace augmetrics
