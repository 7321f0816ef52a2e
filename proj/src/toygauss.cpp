#include "augmetrics/toygauss.hpp"

#include <cmath>
#include <fstream>

#include "augmetrics/errors.hpp"
#include "augmetrics/metrics.hpp"
#include "augmetrics/parallel.hpp"
#include "augmetrics/textio.hpp"

namespace augmetrics {

double GridAxis::value(int i) const {
  if (resolution == 1) return 0.5 * (min + max);
  return min + (max - min) * static_cast<double>(i) / static_cast<double>(resolution - 1);
}

void GridAxis::validate() const {
  if (resolution < 1) throw ValidationError("toygauss.resolution must be >= 1");
  if (!(min <= max)) throw ValidationError("toygauss.delta_range must satisfy min <= max");
}

TrainConfig ToyConfig::default_train() {
  TrainConfig t;
  t.steps = 1500;
  t.batch_size = 64;
  t.base_lr = 0.1;
  t.l2_coeff = 0.0;
  t.log_every = 50;
  t.val_every = 500;
  return t;
}

void ToyConfig::validate() const {
  mixture.validate();
  if (mixture.dim != 2 || mixture.means.size() != 2) {
    throw ValidationError("toygauss: mixture must be two-class and two-dimensional");
  }
  axis.validate();
  if (val_samples_per_cell < 2 || val_samples_per_cell % 2 != 0) {
    throw ValidationError("toygauss.val_samples_per_cell must be even and >= 2");
  }
  if (!train.policy.is_identity()) {
    throw ValidationError("toygauss: the toy model trains without augmentation");
  }
}

double shifted_mixture_kl(const GaussianMixtureSpec &spec, const Eigen::VectorXd &delta) {
  double sum = 0.0;
  for (std::size_t k = 0; k < spec.means.size(); ++k) {
    sum += kl_gaussian(spec.means[k] + delta, spec.covariances[k], spec.means[k],
                       spec.covariances[k]);
  }
  return sum / static_cast<double>(spec.means.size());
}

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

struct Paired {
  double affinity = 0.0;
  double sem = 0.0;
};

VectorDataset shifted(const VectorDataset &ds, const Eigen::Vector2d &delta) {
  VectorDataset out = ds;
  for (auto &p : out.points) {
    p[0] += delta[0];
    p[1] += delta[1];
  }
  return out;
}

} // namespace

double boundary_accuracy(const GaussianMixtureSpec &spec, const Eigen::Vector2d &normal,
                         double offset, const Eigen::Vector2d &delta) {
  double acc = 0.0;
  for (std::size_t k = 0; k < 2; ++k) {
    const Eigen::Vector2d mu = spec.means[k] + delta;
    const double sd = std::sqrt(normal.dot(spec.covariances[k] * normal));
    const double z = (normal.dot(mu) + offset) / sd;
    acc += k == 1 ? normal_cdf(z) : normal_cdf(-z);
  }
  return 0.5 * acc;
}

ShiftGrid run_toy_experiment(const ToyConfig &config) {
  config.validate();
  const ModelSpec spec = ModelSpec::linear(ImageShape{1, 2, 1}, 2);

  const LabeledDataset train_set =
      as_labeled(make_gaussian_mixture(config.mixture, Rng::derive(config.seed, "toy_train").next_u64()));
  GaussianMixtureSpec val_spec = config.mixture;
  val_spec.samples_per_class = 500;
  const LabeledDataset val_set =
      as_labeled(make_gaussian_mixture(val_spec, Rng::derive(config.seed, "toy_val").next_u64()));
  TrainConfig tc = config.train;
  tc.seed = config.seed;
  const TrainRun run = train(spec, train_set, val_set, tc);

  ShiftGrid g;
  g.axis = config.axis;
  g.spec = spec;
  g.params = run.final_params;
  const auto w = g.params.view("linear.w"); // [class][feature]
  const auto b = g.params.view("linear.b");
  const Eigen::Vector2d raw(double(w[2]) - double(w[0]), double(w[3]) - double(w[1]));
  const double norm = raw.norm();
  if (!(norm > 0.0)) throw NumericalError("toygauss: trained model has no decision boundary");
  g.normal = raw / norm;
  g.offset = (double(b[1]) - double(b[0])) / norm;

  GaussianMixtureSpec cell_spec = config.mixture;
  cell_spec.samples_per_class = config.val_samples_per_cell / 2;
  const double clean_oracle =
      boundary_accuracy(config.mixture, g.normal, g.offset, Eigen::Vector2d::Zero());

  auto measure = [&](const Eigen::Vector2d &delta, std::uint64_t cell_seed) {
    const VectorDataset points = make_gaussian_mixture(cell_spec, cell_seed);
    const DatasetEval clean = evaluate_dataset(spec, g.params, as_labeled(points));
    const DatasetEval moved = evaluate_dataset(spec, g.params, as_labeled(shifted(points, delta)));
    std::vector<double> d(points.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
      d[i] = double(moved.correct[i]) - double(clean.correct[i]);
    }
    const PairedStats s = mean_sem(d);
    return Paired{s.mean_diff, s.sem};
  };

  const int n = config.axis.resolution;
  g.affinity.resize(n, n);
  g.affinity_sem.resize(n, n);
  g.oracle.resize(n, n);
  g.kl.resize(n, n);

  const Eigen::Vector2d along(-g.normal[1], g.normal[0]);
  g.parallel.direction = along;
  g.perpendicular.direction = g.normal;
  for (ShiftProfile *p : {&g.parallel, &g.perpendicular}) {
    for (int k = 0; k < n; ++k) p->t.push_back(config.axis.value(k));
    p->affinity.assign(n, 0.0);
    p->sem.assign(n, 0.0);
    p->oracle.assign(n, 0.0);
  }

  const std::size_t cells = static_cast<std::size_t>(n) * n;
  parallel_for(cells + 2 * static_cast<std::size_t>(n), config.jobs, [&](std::size_t task) {
    if (task < cells) {
      const int i = static_cast<int>(task / n);
      const int j = static_cast<int>(task % n);
      const Eigen::Vector2d delta(config.axis.value(j), config.axis.value(i));
      const Paired r = measure(delta, Rng::derive(config.seed, "toy_cell",
                                                  {std::uint64_t(i), std::uint64_t(j)})
                                          .next_u64());
      g.affinity(i, j) = r.affinity;
      g.affinity_sem(i, j) = r.sem;
      g.oracle(i, j) =
          boundary_accuracy(config.mixture, g.normal, g.offset, delta) - clean_oracle;
      g.kl(i, j) = shifted_mixture_kl(config.mixture, delta);
      return;
    }
    const std::size_t rest = task - cells;
    const std::size_t which = rest / n;
    const int k = static_cast<int>(rest % n);
    ShiftProfile &p = which == 0 ? g.parallel : g.perpendicular;
    const Eigen::Vector2d delta = p.t[k] * p.direction;
    const Paired r = measure(delta, Rng::derive(config.seed, "toy_profile",
                                                {std::uint64_t(which), std::uint64_t(k)})
                                        .next_u64());
    p.affinity[k] = r.affinity;
    p.sem[k] = r.sem;
    p.oracle[k] = boundary_accuracy(config.mixture, g.normal, g.offset, delta) - clean_oracle;
  });
  return g;
}

void write_grid_tsv(const GridAxis &axis, const Eigen::MatrixXd &values,
                    const std::filesystem::path &path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "d2\\d1";
  for (int j = 0; j < axis.resolution; ++j) out << '\t' << format_double(axis.value(j));
  out << '\n';
  for (int i = 0; i < axis.resolution; ++i) {
    out << format_double(axis.value(i));
    for (int j = 0; j < axis.resolution; ++j) out << '\t' << format_double(values(i, j));
    out << '\n';
  }
}

void write_profiles_tsv(const ShiftGrid &grid, const std::filesystem::path &path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "direction\tt\taffinity\tsem\toracle\n";
  for (const auto &[name, p] : {std::pair<const char *, const ShiftProfile *>{"parallel", &grid.parallel},
                                {"perpendicular", &grid.perpendicular}}) {
    for (std::size_t k = 0; k < p->t.size(); ++k) {
      out << name << '\t' << format_double(p->t[k]) << '\t' << format_double(p->affinity[k])
          << '\t' << format_double(p->sem[k]) << '\t' << format_double(p->oracle[k]) << '\n';
    }
  }
}

} // namespace augmetrics
