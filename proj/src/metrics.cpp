#include "augmetrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "augmetrics/errors.hpp"
#include "augmetrics/textio.hpp"

namespace augmetrics {

AffinityResult affinity_detail(const ModelSpec &spec, const Params &params,
                               const LabeledDataset &val, const Policy &policy,
                               std::uint64_t seed) {
  if (val.empty()) throw ValidationError("affinity: validation set is empty");
  AffinityResult r;
  const DatasetEval clean = evaluate_dataset(spec, params, val);
  r.clean_acc = clean.accuracy;
  if (policy.is_identity()) {
    r.augmented_acc = clean.accuracy;
    r.per_example.assign(val.size(), 0);
    return r;
  }
  const DatasetEval aug = evaluate_dataset(spec, params, augment_validation(policy, val, seed));
  r.augmented_acc = aug.accuracy;
  r.value = aug.accuracy - clean.accuracy;
  r.per_example.resize(val.size());
  for (std::size_t i = 0; i < val.size(); ++i) {
    r.per_example[i] = int(aug.correct[i]) - int(clean.correct[i]);
  }
  return r;
}

double affinity(const ModelSpec &spec, const Params &params, const LabeledDataset &val,
                const Policy &policy, std::uint64_t seed) {
  return affinity_detail(spec, params, val, policy, seed).value;
}

double log_likelihood_shift(const ModelSpec &spec, const Params &params,
                            const LabeledDataset &val, const Policy &policy,
                            std::uint64_t seed) {
  if (policy.is_identity()) return 0.0;
  const double clean = mean_log_likelihood(spec, params, val);
  const double aug = mean_log_likelihood(spec, params, augment_validation(policy, val, seed));
  return aug - clean;
}

RunSummary summarize(const TrainRun &run, double test_acc) {
  RunSummary s;
  s.seed = run.config.seed;
  s.final_train_loss = run.final_train_loss;
  s.final_val_acc = run.final_val_acc;
  s.test_acc = test_acc;
  s.steps_to_threshold = run.steps_to_threshold;
  return s;
}

RunSummary diverged_summary(std::uint64_t seed, std::int64_t step) {
  RunSummary s;
  s.seed = seed;
  s.diverged = true;
  s.diverged_at = step;
  return s;
}

std::optional<double> diversity_loss(std::span<const RunSummary> runs) {
  if (runs.empty()) throw ValidationError("diversity_loss: no runs");
  double sum = 0.0;
  for (const auto &r : runs) {
    if (r.diverged) return std::nullopt;
    sum += r.final_train_loss;
  }
  return sum / static_cast<double>(runs.size());
}

std::optional<double> diversity_loss(std::span<const TrainRun> runs) {
  std::vector<RunSummary> s;
  s.reserve(runs.size());
  for (const auto &r : runs) s.push_back(summarize(r, 0.0));
  return diversity_loss(std::span<const RunSummary>(s));
}

bool entropy_defined(const Policy &policy) {
  for (const auto &t : policy.ordered()) {
    if (t.probability > 0.0 && !is_discrete(t.kind)) return false;
  }
  return true;
}

double diversity_entropy(const Policy &policy, const ImageShape &shape) {
  double h = 0.0;
  for (const auto &t : policy.ordered()) {
    if (t.probability == 0.0) continue;
    if (!is_discrete(t.kind)) {
      throw NotDiscreteError("diversity_entropy: " + t.label() +
                             " has continuous randomness");
    }
    h += enumerate_outcomes(t, shape).entropy();
  }
  return h;
}

std::optional<std::int64_t> steps_to_threshold(const TrainRun &run) {
  return first_step_reaching(run.log, run.config.train_acc_threshold);
}

std::optional<std::int64_t> mean_steps_to_threshold(std::span<const RunSummary> runs) {
  if (runs.empty()) return std::nullopt;
  double sum = 0.0;
  for (const auto &r : runs) {
    if (r.diverged || !r.steps_to_threshold) return std::nullopt;
    sum += static_cast<double>(*r.steps_to_threshold);
  }
  return static_cast<std::int64_t>(std::llround(sum / static_cast<double>(runs.size())));
}

namespace {

double sample_variance(std::span<const double> v, double mean) {
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(v.size() - 1);
}

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

} // namespace

PairedStats mean_sem(std::span<const double> values) {
  if (values.size() < 2) throw ValidationError("mean_sem: need at least 2 values");
  PairedStats s;
  s.mean_diff = mean_of(values);
  s.sem = std::sqrt(sample_variance(values, s.mean_diff) / static_cast<double>(values.size()));
  return s;
}

PairedStats paired_sem(std::span<const std::pair<double, double>> pairs) {
  if (pairs.size() < 2) throw ValidationError("paired_sem: need at least 2 pairs");
  std::vector<double> d;
  d.reserve(pairs.size());
  for (const auto &[a, b] : pairs) d.push_back(a - b);
  return mean_sem(d);
}

double unpaired_sem(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) {
    throw ValidationError("unpaired_sem: need at least 2 values per sample");
  }
  return std::sqrt(sample_variance(a, mean_of(a)) / static_cast<double>(a.size()) +
                   sample_variance(b, mean_of(b)) / static_cast<double>(b.size()));
}

SwitchOffResult switch_off_lift(std::span<const RunSummary> base,
                                const std::map<std::int64_t, std::vector<RunSummary>> &switched) {
  if (switched.empty()) throw ValidationError("switch_off_lift: no switch-off candidates");
  std::map<std::uint64_t, const RunSummary *> by_seed;
  for (const auto &b : base) {
    if (!b.diverged) by_seed[b.seed] = &b;
  }

  SwitchOffResult out;
  for (const auto &[step, runs] : switched) {
    SwitchPoint pt;
    pt.step = step;
    std::vector<std::pair<double, double>> pairs;
    double val_sum = 0.0;
    double test_sum = 0.0;
    for (const auto &r : runs) {
      if (r.diverged) continue;
      const auto it = by_seed.find(r.seed);
      if (it == by_seed.end()) continue;
      pairs.emplace_back(r.test_acc, it->second->test_acc);
      val_sum += r.final_val_acc;
      test_sum += r.test_acc;
    }
    if (pairs.empty()) continue;
    pt.pairs = static_cast<int>(pairs.size());
    pt.mean_val_acc = val_sum / static_cast<double>(pairs.size());
    pt.mean_test_acc = test_sum / static_cast<double>(pairs.size());
    if (pairs.size() >= 2) {
      const PairedStats ps = paired_sem(pairs);
      pt.lift = ps.mean_diff;
      pt.lift_sem = ps.sem;
    } else {
      pt.lift = pairs[0].first - pairs[0].second;
    }
    out.curve.push_back(pt);
  }
  if (out.curve.empty()) throw ValidationError("switch_off_lift: no seed-paired switched runs");

  const SwitchPoint *best = &out.curve.front();
  for (const auto &pt : out.curve) {
    if (pt.mean_val_acc > best->mean_val_acc) best = &pt;
  }
  out.best_step = best->step;
  out.lift = best->lift;
  out.lift_sem = best->lift_sem;
  return out;
}

double kl_gaussian(const Eigen::VectorXd &mean0, const Eigen::MatrixXd &cov0,
                   const Eigen::VectorXd &mean1, const Eigen::MatrixXd &cov1) {
  const auto d = mean0.size();
  if (mean1.size() != d || cov0.rows() != d || cov0.cols() != d || cov1.rows() != d ||
      cov1.cols() != d) {
    throw ValidationError("kl_gaussian: dimension mismatch");
  }
  const Eigen::LLT<Eigen::MatrixXd> l0(cov0);
  const Eigen::LLT<Eigen::MatrixXd> l1(cov1);
  if (l0.info() != Eigen::Success || l1.info() != Eigen::Success) {
    throw NumericalError("kl_gaussian: covariance is not positive definite");
  }
  const Eigen::MatrixXd L0 = l0.matrixL();
  const Eigen::MatrixXd L1 = l1.matrixL();
  double logdet0 = 0.0;
  double logdet1 = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) {
    if (!(L0(i, i) > 0.0) || !(L1(i, i) > 0.0)) {
      throw NumericalError("kl_gaussian: covariance is singular");
    }
    logdet0 += 2.0 * std::log(L0(i, i));
    logdet1 += 2.0 * std::log(L1(i, i));
  }
  const double trace = l1.solve(cov0).trace();
  const Eigen::VectorXd diff = mean1 - mean0;
  const double mahal = diff.dot(l1.solve(diff));
  const double kl = 0.5 * (trace + mahal - static_cast<double>(d) + logdet1 - logdet0);
  if (!std::isfinite(kl)) throw NumericalError("kl_gaussian: non-finite result");
  // Cancellation can leave a tiny negative value for identical inputs.
  return std::max(kl, 0.0);
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

} // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw ValidationError("spearman: need two equal-length samples of size >= 2");
  }
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double mx = mean_of(rx);
  const double my = mean_of(ry);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw NumericalError("spearman: a sample is constant");
  }
  return sxy / std::sqrt(sxx * syy);
}

namespace {

std::string cell(const std::optional<double> &v) { return v ? format_double(*v) : ""; }
std::string cell(const std::optional<std::int64_t> &v) {
  return v ? std::to_string(*v) : "";
}

} // namespace

std::string format_results_csv(std::span<const MetricsRecord> records) {
  std::ostringstream out;
  out << kResultsHeader << '\n';
  for (const auto &r : records) {
    out << csv_field(r.policy_label) << ',' << cell(r.affinity) << ',' << cell(r.affinity_sem)
        << ',' << cell(r.diversity_loss) << ',' << cell(r.diversity_entropy) << ','
        << cell(r.steps_to_threshold) << ',' << cell(r.test_acc) << ','
        << cell(r.test_acc_sem) << ',' << cell(r.switch_off_lift) << ','
        << cell(r.best_switch_step) << ',' << r.num_seeds << '\n';
  }
  return out.str();
}

void write_results_csv(std::span<const MetricsRecord> records,
                       const std::filesystem::path &path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << format_results_csv(records);
  if (!out) throw FormatError("write failed: " + path.string());
}

std::vector<MetricsRecord> parse_results_csv(std::string_view text, const std::string &source) {
  std::vector<MetricsRecord> rows;
  std::size_t lineno = 0;
  std::size_t pos = 0;
  bool header_seen = false;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view raw = text.substr(pos, end - pos);
    pos = end + 1;
    ++lineno;
    const std::string_view line =
        (!raw.empty() && raw.back() == '\r') ? raw.substr(0, raw.size() - 1) : raw;
    const auto fail = [&](const std::string &why) {
      return FormatError(source + ":" + std::to_string(lineno) + ": " + why);
    };
    if (!header_seen) {
      if (line != kResultsHeader) throw fail("unexpected header");
      header_seen = true;
      continue;
    }
    if (trim(line).empty()) continue;
    const auto cells = split_csv_record(line);
    if (!cells) throw fail("unbalanced quotes");
    if (cells->size() != 11) {
      throw fail("expected 11 columns, found " + std::to_string(cells->size()));
    }
    const auto &c = *cells;
    auto num = [&](std::size_t i, const char *name) -> std::optional<double> {
      if (trim(c[i]).empty()) return std::nullopt;
      const auto v = parse_double(c[i]);
      if (!v) throw fail(std::string("bad number in column ") + name);
      return v;
    };
    auto count = [&](std::size_t i, const char *name) -> std::optional<std::int64_t> {
      if (trim(c[i]).empty()) return std::nullopt;
      const auto v = parse_int(c[i]);
      if (!v) throw fail(std::string("bad integer in column ") + name);
      return static_cast<std::int64_t>(*v);
    };
    MetricsRecord r;
    r.policy_label = c[0];
    if (r.policy_label.empty()) throw fail("empty policy_label");
    r.affinity = num(1, "affinity");
    r.affinity_sem = num(2, "affinity_sem");
    r.diversity_loss = num(3, "diversity_loss");
    r.diversity_entropy = num(4, "diversity_entropy");
    r.steps_to_threshold = count(5, "steps_to_threshold");
    r.test_acc = num(6, "test_acc");
    r.test_acc_sem = num(7, "test_acc_sem");
    r.switch_off_lift = num(8, "switch_off_lift");
    r.best_switch_step = count(9, "best_switch_step");
    const auto seeds = count(10, "num_seeds");
    if (!seeds) throw fail("num_seeds is required");
    r.num_seeds = static_cast<int>(*seeds);
    rows.push_back(std::move(r));
  }
  if (!header_seen) throw FormatError(source + ":1: missing header");
  return rows;
}

std::vector<MetricsRecord> read_results_csv(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_results_csv(ss.str(), path.string());
}

} // namespace augmetrics
