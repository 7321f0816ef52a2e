#include <cmath>
#include <fstream>

#include "augmetrics/errors.hpp"
#include "augmetrics/harness.hpp"

namespace augmetrics {

using nlohmann::json;

std::string_view to_string(Task task) noexcept {
  switch (task) {
  case Task::Affinity: return "affinity";
  case Task::Diversity: return "diversity";
  case Task::Entropy: return "entropy";
  case Task::SwitchOff: return "switchoff";
  case Task::StaticCompare: return "static_compare";
  case Task::ToyGauss: return "toygauss";
  }
  return "unknown";
}

Task task_from_string(std::string_view name) {
  for (Task t : {Task::Affinity, Task::Diversity, Task::Entropy, Task::SwitchOff,
                 Task::StaticCompare, Task::ToyGauss}) {
    if (to_string(t) == name) return t;
  }
  throw ValidationError("tasks: unknown task '" + std::string(name) + "'");
}

ModelSpec ModelConfig::spec_for(ImageShape shape, int num_classes) const {
  ModelSpec s;
  switch (architecture) {
  case Architecture::Linear: s = ModelSpec::linear(shape, num_classes); break;
  case Architecture::MLP: s = ModelSpec::mlp(shape, num_classes, hidden_width); break;
  case Architecture::TinyCNN: s = ModelSpec::tiny_cnn(shape, num_classes, conv_channels); break;
  }
  s.init_scale = init_scale;
  return s;
}

std::vector<std::int64_t> SwitchOffConfig::candidates(std::int64_t total_steps) const {
  if (!steps.empty()) return steps;
  std::vector<std::int64_t> out;
  for (int k = 0; k < count; ++k) {
    const double frac = count == 1 ? from : from + (to - from) * k / double(count - 1);
    const auto s = static_cast<std::int64_t>(std::llround(frac * double(total_steps)));
    if (out.empty() || out.back() != s) out.push_back(s);
  }
  return out;
}

namespace {

[[noreturn]] void bad(const std::string &field, const std::string &why) {
  throw ValidationError(field + ": " + why);
}

std::string join(const std::string &prefix, std::string_view key) {
  return prefix.empty() ? std::string(key) : prefix + "." + std::string(key);
}

void expect_object(const json &j, const std::string &field) {
  if (!j.is_object()) bad(field, "expected an object");
}

void reject_unknown(const json &j, const std::string &prefix,
                    std::initializer_list<std::string_view> allowed) {
  for (const auto &[key, value] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || a == key;
    if (!ok) bad(join(prefix, key), "unknown key");
  }
}

double number(const json &j, const std::string &prefix, std::string_view key, double def) {
  const auto it = j.find(std::string(key));
  if (it == j.end()) return def;
  if (!it->is_number()) bad(join(prefix, key), "expected a number");
  const double v = it->get<double>();
  if (!std::isfinite(v)) bad(join(prefix, key), "must be finite");
  return v;
}

std::int64_t integer(const json &j, const std::string &prefix, std::string_view key,
                     std::int64_t def) {
  const auto it = j.find(std::string(key));
  if (it == j.end()) return def;
  if (!it->is_number_integer()) bad(join(prefix, key), "expected an integer");
  return it->get<std::int64_t>();
}

std::uint64_t seed_value(const json &v, const std::string &field) {
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() &&
                                 v.get<std::int64_t>() < 0)) {
    bad(field, "expected a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

std::string text(const json &j, const std::string &prefix, std::string_view key,
                 const std::string &def) {
  const auto it = j.find(std::string(key));
  if (it == j.end()) return def;
  if (!it->is_string()) bad(join(prefix, key), "expected a string");
  return it->get<std::string>();
}

DatasetConfig dataset_from_json(const json &j) {
  const std::string p = "dataset";
  expect_object(j, p);
  reject_unknown(j, p, {"source", "path", "num_classes", "side", "train_size", "val_size",
                        "test_size", "seed"});
  DatasetConfig d;
  d.source = text(j, p, "source", d.source);
  d.path = text(j, p, "path", "");
  d.num_classes = static_cast<int>(integer(j, p, "num_classes", d.num_classes));
  d.side = static_cast<int>(integer(j, p, "side", d.side));
  auto size = [&](std::string_view key, std::size_t def) {
    const auto v = integer(j, p, key, static_cast<std::int64_t>(def));
    if (v < 0) bad(join(p, key), "must be >= 0");
    return static_cast<std::size_t>(v);
  };
  d.train_size = size("train_size", d.train_size);
  d.val_size = size("val_size", d.val_size);
  d.test_size = size("test_size", d.test_size);
  if (j.contains("seed")) d.seed = seed_value(j["seed"], "dataset.seed");
  return d;
}

ModelConfig model_from_json(const json &j) {
  const std::string p = "model";
  expect_object(j, p);
  reject_unknown(j, p, {"architecture", "hidden_width", "conv_channels", "init_scale"});
  ModelConfig m;
  try {
    m.architecture = architecture_from_string(text(j, p, "architecture", "tinycnn"));
  } catch (const ValidationError &e) {
    bad("model.architecture", e.what());
  }
  m.hidden_width = static_cast<int>(integer(j, p, "hidden_width", m.hidden_width));
  m.conv_channels = static_cast<int>(integer(j, p, "conv_channels", m.conv_channels));
  m.init_scale = number(j, p, "init_scale", m.init_scale);
  return m;
}

LrSchedule schedule_from_json(const json &j) {
  const std::string field = "train.lr_schedule";
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "cosine") return LrSchedule::cosine();
    if (s == "constant") return LrSchedule::constant();
    bad(field, "expected cosine, constant or a step_decay object");
  }
  expect_object(j, field);
  reject_unknown(j, field, {"kind", "decay_step", "factor"});
  if (text(j, field, "kind", "") != "step_decay") bad(field + ".kind", "expected step_decay");
  return LrSchedule::step_decay(integer(j, field, "decay_step", 0),
                                number(j, field, "factor", 10.0));
}

TrainConfig train_from_json(const json &j) {
  const std::string p = "train";
  expect_object(j, p);
  reject_unknown(j, p, {"steps", "batch_size", "base_lr", "lr_schedule", "momentum", "l2_coeff",
                        "l2_off_step", "log_every", "val_every", "train_acc_threshold",
                        "final_loss_window"});
  TrainConfig t;
  t.steps = integer(j, p, "steps", t.steps);
  t.batch_size = static_cast<int>(integer(j, p, "batch_size", t.batch_size));
  t.base_lr = number(j, p, "base_lr", t.base_lr);
  if (j.contains("lr_schedule")) t.lr_schedule = schedule_from_json(j["lr_schedule"]);
  t.momentum = number(j, p, "momentum", t.momentum);
  t.l2_coeff = number(j, p, "l2_coeff", t.l2_coeff);
  if (j.contains("l2_off_step") && !j["l2_off_step"].is_null()) {
    t.l2_off_step = integer(j, p, "l2_off_step", 0);
  }
  t.log_every = integer(j, p, "log_every", t.log_every);
  t.val_every = integer(j, p, "val_every", t.val_every);
  t.train_acc_threshold = number(j, p, "train_acc_threshold", t.train_acc_threshold);
  t.final_loss_window = static_cast<int>(integer(j, p, "final_loss_window", t.final_loss_window));
  return t;
}

SwitchOffConfig switchoff_from_json(const json &j) {
  const std::string p = "switchoff";
  expect_object(j, p);
  reject_unknown(j, p, {"steps", "count", "from", "to"});
  SwitchOffConfig s;
  if (j.contains("steps")) {
    if (!j["steps"].is_array()) bad("switchoff.steps", "expected an array of integers");
    for (const auto &v : j["steps"]) {
      if (!v.is_number_integer()) bad("switchoff.steps", "expected an array of integers");
      s.steps.push_back(v.get<std::int64_t>());
    }
  }
  s.count = static_cast<int>(integer(j, p, "count", s.count));
  s.from = number(j, p, "from", s.from);
  s.to = number(j, p, "to", s.to);
  return s;
}

ToyConfig toy_from_json(const json &j) {
  const std::string p = "toygauss";
  expect_object(j, p);
  reject_unknown(j, p, {"delta_min", "delta_max", "resolution", "val_samples_per_cell",
                        "samples_per_class", "steps", "seed"});
  ToyConfig t;
  t.axis.min = number(j, p, "delta_min", t.axis.min);
  t.axis.max = number(j, p, "delta_max", t.axis.max);
  t.axis.resolution = static_cast<int>(integer(j, p, "resolution", t.axis.resolution));
  t.val_samples_per_cell =
      static_cast<int>(integer(j, p, "val_samples_per_cell", t.val_samples_per_cell));
  t.mixture.samples_per_class =
      static_cast<int>(integer(j, p, "samples_per_class", t.mixture.samples_per_class));
  t.train.steps = integer(j, p, "steps", t.train.steps);
  if (j.contains("seed")) t.seed = seed_value(j["seed"], "toygauss.seed");
  return t;
}

json schedule_to_json(const LrSchedule &s) {
  switch (s.kind) {
  case LrSchedule::Kind::Cosine: return "cosine";
  case LrSchedule::Kind::Constant: return "constant";
  case LrSchedule::Kind::StepDecay:
    return {{"kind", "step_decay"}, {"decay_step", s.decay_step}, {"factor", s.factor}};
  }
  return "cosine";
}

} // namespace

ExperimentConfig ExperimentConfig::from_json(const json &j) {
  expect_object(j, "config");
  reject_unknown(j, "", {"dataset", "model", "train", "policies", "seeds", "tasks", "switchoff",
                         "toygauss", "outputs"});
  ExperimentConfig c;
  if (j.contains("dataset")) c.dataset = dataset_from_json(j["dataset"]);
  if (j.contains("model")) c.model = model_from_json(j["model"]);
  if (j.contains("train")) c.train = train_from_json(j["train"]);
  if (j.contains("switchoff")) c.switchoff = switchoff_from_json(j["switchoff"]);
  if (j.contains("toygauss")) c.toy = toy_from_json(j["toygauss"]);
  if (j.contains("outputs")) {
    if (!j["outputs"].is_string()) bad("outputs", "expected a directory path");
    c.outputs = j["outputs"].get<std::string>();
  }
  if (j.contains("tasks")) {
    if (!j["tasks"].is_array()) bad("tasks", "expected an array of task names");
    c.tasks.clear();
    for (const auto &t : j["tasks"]) {
      if (!t.is_string()) bad("tasks", "expected an array of task names");
      c.tasks.insert(task_from_string(t.get<std::string>()));
    }
  }
  if (j.contains("seeds")) {
    if (!j["seeds"].is_array()) bad("seeds", "expected an array of integers");
    for (std::size_t i = 0; i < j["seeds"].size(); ++i) {
      c.seeds.push_back(seed_value(j["seeds"][i], "seeds[" + std::to_string(i) + "]"));
    }
  } else {
    for (std::uint64_t s = 0; s < 10; ++s) c.seeds.push_back(s);
  }
  if (j.contains("policies")) {
    if (!j["policies"].is_array()) bad("policies", "expected an array");
    for (std::size_t i = 0; i < j["policies"].size(); ++i) {
      try {
        c.policies.push_back(policy_from_json(j["policies"][i]));
      } catch (const std::exception &e) {
        bad("policies[" + std::to_string(i) + "]", e.what());
      }
    }
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config: cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error &e) {
    throw ValidationError("config " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

json ExperimentConfig::to_json() const {
  json policies_json = json::array();
  for (const auto &p : policies) policies_json.push_back(p.label());
  json tasks_json = json::array();
  for (Task t : tasks) tasks_json.push_back(std::string(to_string(t)));
  json l2_off = train.l2_off_step ? json(*train.l2_off_step) : json(nullptr);
  return {
      {"dataset",
       {{"source", dataset.source},
        {"path", dataset.path.string()},
        {"num_classes", dataset.num_classes},
        {"side", dataset.side},
        {"train_size", dataset.train_size},
        {"val_size", dataset.val_size},
        {"test_size", dataset.test_size},
        {"seed", dataset.seed}}},
      {"model",
       {{"architecture", std::string(to_string(model.architecture))},
        {"hidden_width", model.hidden_width},
        {"conv_channels", model.conv_channels},
        {"init_scale", model.init_scale}}},
      {"train",
       {{"steps", train.steps},
        {"batch_size", train.batch_size},
        {"base_lr", train.base_lr},
        {"lr_schedule", schedule_to_json(train.lr_schedule)},
        {"momentum", train.momentum},
        {"l2_coeff", train.l2_coeff},
        {"l2_off_step", l2_off},
        {"log_every", train.log_every},
        {"val_every", train.val_every},
        {"train_acc_threshold", train.train_acc_threshold},
        {"final_loss_window", train.final_loss_window}}},
      {"policies", policies_json},
      {"seeds", seeds},
      {"tasks", tasks_json},
      {"switchoff",
       {{"steps", switchoff.steps},
        {"count", switchoff.count},
        {"from", switchoff.from},
        {"to", switchoff.to}}},
      {"toygauss",
       {{"delta_min", toy.axis.min},
        {"delta_max", toy.axis.max},
        {"resolution", toy.axis.resolution},
        {"val_samples_per_cell", toy.val_samples_per_cell},
        {"samples_per_class", toy.mixture.samples_per_class},
        {"steps", toy.train.steps},
        {"seed", toy.seed}}},
      {"outputs", outputs.string()},
  };
}

void ExperimentConfig::validate() const {
  if (tasks.empty()) bad("tasks", "at least one task is required");
  const bool toy_only = tasks == std::set<Task>{Task::ToyGauss};
  if (toy_only) {
    try {
      toy.validate();
    } catch (const ValidationError &e) {
      bad("toygauss", e.what());
    }
    return;
  }
  if (seeds.empty()) bad("seeds", "at least one seed is required");
  for (std::size_t i = 0; i < seeds.size(); ++i)
    for (std::size_t k = 0; k < i; ++k)
      if (seeds[i] == seeds[k]) bad("seeds", "duplicate seed " + std::to_string(seeds[i]));
  if (policies.empty()) bad("policies", "at least one policy is required");
  for (std::size_t i = 0; i < policies.size(); ++i)
    for (std::size_t k = 0; k < i; ++k)
      if (policies[i].label() == policies[k].label()) {
        bad("policies[" + std::to_string(i) + "]", "duplicate policy " + policies[i].label());
      }

  if (dataset.source != "synthetic" && dataset.source != "cifar10") {
    bad("dataset.source", "expected synthetic or cifar10");
  }
  if (dataset.source == "synthetic") {
    if (dataset.num_classes < 2 || dataset.num_classes > 10) {
      bad("dataset.num_classes", "must be in [2, 10]");
    }
    if (dataset.side < 8) bad("dataset.side", "must be >= 8");
  } else {
    if (dataset.num_classes != 10) bad("dataset.num_classes", "cifar10 has 10 classes");
    if (dataset.path.empty()) bad("dataset.path", "required for cifar10");
  }
  if (dataset.train_size < static_cast<std::size_t>(dataset.num_classes)) {
    bad("dataset.train_size", "must be at least num_classes");
  }
  if (dataset.val_size == 0) bad("dataset.val_size", "must be > 0");
  if (dataset.test_size == 0) bad("dataset.test_size", "must be > 0");

  const ImageShape shape = dataset.source == "synthetic"
                               ? ImageShape{dataset.side, dataset.side, 3}
                               : ImageShape{32, 32, 3};
  try {
    model.spec_for(shape, dataset.num_classes).validate();
  } catch (const ValidationError &e) {
    bad("model", e.what());
  }
  try {
    train.validate(dataset.train_size);
  } catch (const ValidationError &e) {
    bad("train", e.what());
  }
  for (std::size_t i = 0; i < policies.size(); ++i) {
    try {
      policies[i].validate_for(shape);
    } catch (const ValidationError &e) {
      bad("policies[" + std::to_string(i) + "]", e.what());
    }
  }
  if (tasks.contains(Task::SwitchOff)) {
    if (switchoff.steps.empty()) {
      if (switchoff.count < 1) bad("switchoff.count", "must be >= 1");
      if (!(switchoff.from > 0.0 && switchoff.from <= switchoff.to && switchoff.to < 1.0)) {
        bad("switchoff", "need 0 < from <= to < 1");
      }
    }
    for (auto s : switchoff.candidates(train.steps)) {
      if (s <= 0 || s >= train.steps) {
        bad("switchoff.steps", "candidate " + std::to_string(s) + " outside (0, train.steps)");
      }
    }
  }
  if (tasks.contains(Task::ToyGauss)) {
    try {
      toy.validate();
    } catch (const ValidationError &e) {
      bad("toygauss", e.what());
    }
  }
}

std::uint64_t ExperimentConfig::hash() const {
  json j = to_json();
  j.erase("outputs");
  return fnv1a(j.dump());
}

} // namespace augmetrics
