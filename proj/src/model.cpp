#include "augmetrics/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "augmetrics/errors.hpp"

namespace augmetrics {

std::string_view to_string(Architecture arch) noexcept {
  switch (arch) {
  case Architecture::Linear: return "linear";
  case Architecture::MLP: return "mlp";
  case Architecture::TinyCNN: return "tinycnn";
  }
  return "unknown";
}

Architecture architecture_from_string(std::string_view name) {
  if (name == "linear") return Architecture::Linear;
  if (name == "mlp") return Architecture::MLP;
  if (name == "tinycnn") return Architecture::TinyCNN;
  throw ValidationError("unknown architecture '" + std::string(name) +
                        "' (expected linear, mlp or tinycnn)");
}

ModelSpec ModelSpec::linear(ImageShape input, int num_classes) {
  ModelSpec s;
  s.architecture = Architecture::Linear;
  s.input_shape = input;
  s.num_classes = num_classes;
  return s;
}

ModelSpec ModelSpec::mlp(ImageShape input, int num_classes, int hidden_width) {
  ModelSpec s = linear(input, num_classes);
  s.architecture = Architecture::MLP;
  s.hidden_width = hidden_width;
  return s;
}

ModelSpec ModelSpec::tiny_cnn(ImageShape input, int num_classes, int conv_channels) {
  ModelSpec s = linear(input, num_classes);
  s.architecture = Architecture::TinyCNN;
  s.conv_channels = conv_channels;
  return s;
}

void ModelSpec::validate() const {
  if (num_classes < 2) throw ValidationError("model: num_classes must be >= 2");
  if (input_shape.height < 1 || input_shape.width < 1 || input_shape.channels < 1) {
    throw ValidationError("model: input shape must be positive");
  }
  if (architecture == Architecture::MLP && hidden_width < 1) {
    throw ValidationError("model: MLP hidden_width must be >= 1");
  }
  if (architecture == Architecture::TinyCNN) {
    if (conv_channels < 1) throw ValidationError("model: conv_channels must be >= 1");
    if (input_shape.height < 2 || input_shape.width < 2) {
      throw ValidationError("model: TinyCNN needs inputs of at least 2x2");
    }
  }
  if (!std::isfinite(init_scale) || init_scale < 0.0) {
    throw ValidationError("model: init_scale must be finite and >= 0");
  }
}

std::string ModelSpec::describe() const {
  std::string s(to_string(architecture));
  s += ";in=" + std::to_string(input_shape.height) + "x" +
       std::to_string(input_shape.width) + "x" + std::to_string(input_shape.channels);
  s += ";k=" + std::to_string(num_classes);
  if (architecture == Architecture::MLP) s += ";h=" + std::to_string(hidden_width);
  if (architecture == Architecture::TinyCNN) s += ";c=" + std::to_string(conv_channels);
  return s;
}

std::uint64_t ModelSpec::hash() const { return fnv1a(describe()); }

// ---------------------------------------------------------------------------
// Params

const LayerSlice &Params::slice(std::string_view name) const {
  for (const auto &s : layout)
    if (s.name == name) return s;
  throw ValidationError("params: no layer named '" + std::string(name) + "'");
}

std::span<float> Params::view(std::string_view name) {
  const LayerSlice &s = slice(name);
  return std::span<float>(values).subspan(s.offset, s.size);
}

std::span<const float> Params::view(std::string_view name) const {
  const LayerSlice &s = slice(name);
  return std::span<const float>(values).subspan(s.offset, s.size);
}

bool Params::all_finite() const noexcept {
  return std::all_of(values.begin(), values.end(),
                     [](float v) { return std::isfinite(v); });
}

namespace {

struct CnnDims {
  int h, w, cin, c, ph, pw, features;
};

CnnDims cnn_dims(const ModelSpec &spec) {
  CnnDims d{};
  d.h = spec.input_shape.height;
  d.w = spec.input_shape.width;
  d.cin = spec.input_shape.channels;
  d.c = spec.conv_channels;
  d.ph = d.h / 2;
  d.pw = d.w / 2;
  d.features = d.c * d.ph * d.pw;
  return d;
}

} // namespace

std::vector<LayerSlice> layout_for(const ModelSpec &spec) {
  spec.validate();
  std::vector<LayerSlice> layout;
  std::size_t offset = 0;
  auto add = [&](std::string name, std::size_t size, bool weight) {
    layout.push_back({std::move(name), offset, size, weight});
    offset += size;
  };
  const auto k = static_cast<std::size_t>(spec.num_classes);
  const std::size_t d = spec.input_size();
  switch (spec.architecture) {
  case Architecture::Linear:
    add("linear.w", k * d, true);
    add("linear.b", k, false);
    break;
  case Architecture::MLP: {
    const auto h = static_cast<std::size_t>(spec.hidden_width);
    add("hidden.w", h * d, true);
    add("hidden.b", h, false);
    add("out.w", k * h, true);
    add("out.b", k, false);
    break;
  }
  case Architecture::TinyCNN: {
    const CnnDims cd = cnn_dims(spec);
    add("conv.w", static_cast<std::size_t>(cd.c) * cd.cin * 9, true);
    add("conv.b", static_cast<std::size_t>(cd.c), false);
    add("head.w", k * static_cast<std::size_t>(cd.features), true);
    add("head.b", k, false);
    break;
  }
  }
  return layout;
}

Params init(const ModelSpec &spec, std::uint64_t seed) {
  Params p;
  p.layout = layout_for(spec);
  p.values.assign(p.layout.back().offset + p.layout.back().size, 0.0f);
  Rng rng = Rng::derive(seed, "init");
  for (const auto &s : p.layout) {
    if (!s.is_weight) continue;
    std::size_t fan_in = 0;
    if (s.name == "linear.w" || s.name == "hidden.w") fan_in = spec.input_size();
    else if (s.name == "out.w") fan_in = static_cast<std::size_t>(spec.hidden_width);
    else if (s.name == "conv.w") fan_in = static_cast<std::size_t>(spec.input_shape.channels) * 9;
    else if (s.name == "head.w") fan_in = static_cast<std::size_t>(cnn_dims(spec).features);
    const double scale = spec.init_scale / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < s.size; ++i) {
      p.values[s.offset + i] = static_cast<float>(scale * rng.normal());
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// Forward / backward

double log_sum_exp(std::span<const double> logits) noexcept {
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double z : logits) s += std::exp(z - m);
  return m + std::log(s);
}

namespace {

/// tanh through a single exp; about twice as fast as std::tanh and accurate to
/// a few ulps in absolute terms.
inline double fast_tanh(double x) {
  const double t = std::exp(-2.0 * std::abs(x));
  return std::copysign((1.0 - t) / (1.0 + t), x);
}

int argmax_lowest(std::span<const double> row) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(row.size()); ++i)
    if (row[i] > row[best]) best = i;
  return best;
}

/// Dense layer out = W x + b with W stored row-major [out][in].
void dense_forward(const double *w, const double *b, const double *x,
                   std::size_t in, std::size_t out, double *y) {
  for (std::size_t o = 0; o < out; ++o) {
    const double *row = w + o * in;
    double s = b[o];
    for (std::size_t i = 0; i < in; ++i) s += row[i] * x[i];
    y[o] = s;
  }
}

/// Accumulates dW += dy x^T, db += dy, and (optionally) dx = W^T dy.
void dense_backward(const double *w, const double *x, const double *dy,
                    std::size_t in, std::size_t out, double *dw, double *db,
                    double *dx) {
  if (dx) std::fill(dx, dx + in, 0.0);
  for (std::size_t o = 0; o < out; ++o) {
    const double g = dy[o];
    db[o] += g;
    double *grow = dw + o * in;
    const double *row = w + o * in;
    for (std::size_t i = 0; i < in; ++i) grow[i] += g * x[i];
    if (dx)
      for (std::size_t i = 0; i < in; ++i) dx[i] += g * row[i];
  }
}

class Network {
public:
  Network(const ModelSpec &spec, const Params &params)
      : spec_(spec), w_(params.values.begin(), params.values.end()) {
    for (const auto &s : params.layout) offsets_.push_back(s.offset);
    const auto expected = layout_for(spec);
    if (params.layout != expected) {
      throw ValidationError("params layout does not match model " + spec.describe());
    }
    if (spec.architecture == Architecture::TinyCNN) {
      cd_ = cnn_dims(spec);
      const std::size_t hp = cd_.h + 2, wp = cd_.w + 2;
      padded_.assign(static_cast<std::size_t>(cd_.cin) * hp * wp, 0.0);
      act_.resize(static_cast<std::size_t>(cd_.c) * cd_.h * wp);
      pooled_.resize(static_cast<std::size_t>(cd_.features));
      dpooled_.resize(pooled_.size());
      dz_.resize(act_.size());
    } else if (spec.architecture == Architecture::MLP) {
      hidden_.resize(static_cast<std::size_t>(spec.hidden_width));
      dhidden_.resize(hidden_.size());
    }
    input_.resize(spec.input_size());
  }

  /// Computes logits for one example; keeps activations for backward().
  void forward(std::span<const float> x, double *logits) {
    std::copy(x.begin(), x.end(), input_.begin());
    const auto k = static_cast<std::size_t>(spec_.num_classes);
    switch (spec_.architecture) {
    case Architecture::Linear:
      dense_forward(&w_[offsets_[0]], &w_[offsets_[1]], input_.data(), input_.size(), k, logits);
      break;
    case Architecture::MLP: {
      const auto h = hidden_.size();
      dense_forward(&w_[offsets_[0]], &w_[offsets_[1]], input_.data(), input_.size(), h, hidden_.data());
      for (double &v : hidden_) v = fast_tanh(v);
      dense_forward(&w_[offsets_[2]], &w_[offsets_[3]], hidden_.data(), h, k, logits);
      break;
    }
    case Architecture::TinyCNN:
      cnn_forward(logits);
      break;
    }
  }

  /// Accumulates the gradient for the example last passed to forward().
  void backward(const double *dlogits, double *grad) {
    const auto k = static_cast<std::size_t>(spec_.num_classes);
    switch (spec_.architecture) {
    case Architecture::Linear:
      dense_backward(&w_[offsets_[0]], input_.data(), dlogits, input_.size(), k,
                     grad + offsets_[0], grad + offsets_[1], nullptr);
      break;
    case Architecture::MLP: {
      const auto h = hidden_.size();
      dense_backward(&w_[offsets_[2]], hidden_.data(), dlogits, h, k,
                     grad + offsets_[2], grad + offsets_[3], dhidden_.data());
      for (std::size_t i = 0; i < h; ++i) dhidden_[i] *= 1.0 - hidden_[i] * hidden_[i];
      dense_backward(&w_[offsets_[0]], input_.data(), dhidden_.data(), input_.size(), h,
                     grad + offsets_[0], grad + offsets_[1], nullptr);
      break;
    }
    case Architecture::TinyCNN:
      cnn_backward(dlogits, grad);
      break;
    }
  }

  const std::vector<double> &weights() const { return w_; }

private:
  // Conv maps are stored over the padded row pitch (wp): position y * wp + x
  // for x < w is valid and the two trailing columns of each row are scratch.
  // This keeps every tap a single long contiguous loop.
  void cnn_forward(double *logits) {
    const int h = cd_.h, w = cd_.w, cin = cd_.cin, c = cd_.c;
    const int hp = h + 2, wp = w + 2;
    for (int ci = 0; ci < cin; ++ci)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          padded_[(static_cast<std::size_t>(ci) * hp + y + 1) * wp + x + 1] =
              input_[(static_cast<std::size_t>(y) * w + x) * cin + ci];

    const double *cw = &w_[offsets_[0]];
    const double *cb = &w_[offsets_[1]];
    const std::size_t plane = static_cast<std::size_t>(h) * wp;
    const std::size_t span = static_cast<std::size_t>(h - 1) * wp + w;
    for (int co = 0; co < c; ++co) {
      double *z = &act_[co * plane];
      std::fill(z, z + plane, cb[co]);
      for (int ci = 0; ci < cin; ++ci) {
        const double *k = &cw[(co * cin + ci) * 9];
        const double *s0 = &padded_[static_cast<std::size_t>(ci) * hp * wp];
        const double *s1 = s0 + wp;
        const double *s2 = s1 + wp;
        for (std::size_t i = 0; i < span; ++i) {
          z[i] += (k[0] * s0[i] + k[1] * s0[i + 1] + k[2] * s0[i + 2]) +
                  (k[3] * s1[i] + k[4] * s1[i + 1] + k[5] * s1[i + 2]) +
                  (k[6] * s2[i] + k[7] * s2[i + 1] + k[8] * s2[i + 2]);
        }
      }
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) z[y * wp + x] = fast_tanh(z[y * wp + x]);
    }
    for (int co = 0; co < c; ++co)
      for (int py = 0; py < cd_.ph; ++py)
        for (int px = 0; px < cd_.pw; ++px) {
          const double *a = &act_[co * plane + static_cast<std::size_t>(2 * py) * wp + 2 * px];
          pooled_[(static_cast<std::size_t>(co) * cd_.ph + py) * cd_.pw + px] =
              0.25 * (a[0] + a[1] + a[wp] + a[wp + 1]);
        }
    dense_forward(&w_[offsets_[2]], &w_[offsets_[3]], pooled_.data(), pooled_.size(),
                  static_cast<std::size_t>(spec_.num_classes), logits);
  }

  void cnn_backward(const double *dlogits, double *grad) {
    const int h = cd_.h, w = cd_.w, cin = cd_.cin, c = cd_.c;
    const int hp = h + 2, wp = w + 2;
    dense_backward(&w_[offsets_[2]], pooled_.data(), dlogits, pooled_.size(),
                   static_cast<std::size_t>(spec_.num_classes), grad + offsets_[2],
                   grad + offsets_[3], dpooled_.data());
    const std::size_t plane = static_cast<std::size_t>(h) * wp;
    const std::size_t span = static_cast<std::size_t>(h - 1) * wp + w;
    std::fill(dz_.begin(), dz_.end(), 0.0);
    for (int co = 0; co < c; ++co)
      for (int py = 0; py < cd_.ph; ++py)
        for (int px = 0; px < cd_.pw; ++px) {
          const double g = 0.25 * dpooled_[(static_cast<std::size_t>(co) * cd_.ph + py) * cd_.pw + px];
          const std::size_t at = co * plane + static_cast<std::size_t>(2 * py) * wp + 2 * px;
          for (std::size_t off : {std::size_t{0}, std::size_t{1}, std::size_t(wp), std::size_t(wp) + 1})
            dz_[at + off] = g * (1.0 - act_[at + off] * act_[at + off]);
        }

    double *gw = grad + offsets_[0];
    double *gb = grad + offsets_[1];
    for (int co = 0; co < c; ++co) {
      const double *dz = &dz_[co * plane];
      double s = 0.0;
      for (std::size_t i = 0; i < plane; ++i) s += dz[i];
      gb[co] += s;
      for (int ci = 0; ci < cin; ++ci)
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx) {
            const double *src = &padded_[(static_cast<std::size_t>(ci) * hp + ky) * wp + kx];
            // Four fixed lanes: vectorizable, and the summation order does not
            // depend on the compiler.
            double lane[4] = {0.0, 0.0, 0.0, 0.0};
            std::size_t i = 0;
            for (; i + 4 <= span; i += 4)
              for (int j = 0; j < 4; ++j) lane[j] += dz[i + j] * src[i + j];
            for (; i < span; ++i) lane[0] += dz[i] * src[i];
            gw[((co * cin + ci) * 3 + ky) * 3 + kx] += (lane[0] + lane[1]) + (lane[2] + lane[3]);
          }
    }
  }

  const ModelSpec &spec_;
  std::vector<double> w_;
  std::vector<std::size_t> offsets_;
  CnnDims cd_{};
  std::vector<double> input_, hidden_, dhidden_, padded_, act_, pooled_, dpooled_, dz_;
};

} // namespace

BatchEval evaluate(const ModelSpec &spec, const Params &params,
                   const Batch &batch, double l2_coeff, bool want_grad) {
  const std::size_t n = batch.size();
  const std::size_t d = spec.input_size();
  const auto k = static_cast<std::size_t>(spec.num_classes);
  if (batch.inputs.size() != n * d) {
    throw ValidationError("evaluate: batch has " + std::to_string(batch.inputs.size()) +
                          " input values, expected " + std::to_string(n * d));
  }
  if (n == 0) throw ValidationError("evaluate: empty batch");

  Network net(spec, params);
  BatchEval ev;
  ev.logits.resize(n * k);
  if (want_grad) ev.grad.assign(params.size(), 0.0);

  std::vector<double> dlogits(k);
  double total = 0.0;
  std::size_t correct = 0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = batch.inputs.subspan(i * d, d);
    if (!std::all_of(x.begin(), x.end(), [](float v) { return std::isfinite(v); })) {
      throw NumericalError("evaluate: non-finite input in batch example " + std::to_string(i));
    }
    const int y = batch.labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw ValidationError("evaluate: label " + std::to_string(y) + " out of range");
    }
    double *logits = &ev.logits[i * k];
    net.forward(x, logits);
    const std::span<const double> row(logits, k);
    const double lse = log_sum_exp(row);
    total += lse - logits[y];
    if (argmax_lowest(row) == y) ++correct;
    if (want_grad) {
      for (std::size_t c = 0; c < k; ++c) {
        dlogits[c] = std::exp(logits[c] - lse) * inv_n;
      }
      dlogits[static_cast<std::size_t>(y)] -= inv_n;
      net.backward(dlogits.data(), ev.grad.data());
    }
  }

  double reg = 0.0;
  for (const auto &s : params.layout) {
    if (!s.is_weight) continue;
    for (std::size_t j = s.offset; j < s.offset + s.size; ++j) {
      const double wv = net.weights()[j];
      reg += wv * wv;
      if (want_grad) ev.grad[j] += l2_coeff * wv;
    }
  }
  ev.data_loss = total * inv_n;
  ev.loss = ev.data_loss + 0.5 * l2_coeff * reg;
  ev.accuracy = static_cast<double>(correct) * inv_n;
  return ev;
}

DatasetEval evaluate_dataset(const ModelSpec &spec, const Params &params,
                             const LabeledDataset &ds) {
  DatasetEval out;
  const std::size_t n = ds.size();
  if (n == 0) return out;
  const std::size_t d = spec.input_size();
  const auto k = static_cast<std::size_t>(spec.num_classes);
  Network net(spec, params);
  std::vector<float> x(d);
  std::vector<double> logits(k);
  out.predictions.resize(n);
  out.correct.resize(n);
  out.log_sum_exp.resize(n);
  std::size_t hits = 0;
  double lse_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (ds.images[i].values.size() != d) {
      throw ValidationError("evaluate_dataset: image " + std::to_string(i) +
                            " does not match the model input shape");
    }
    write_model_input(ds.images[i], ds.stats, ds.values_normalized, x);
    net.forward(x, logits.data());
    out.predictions[i] = argmax_lowest(logits);
    out.correct[i] = out.predictions[i] == ds.labels[i];
    out.log_sum_exp[i] = log_sum_exp(logits);
    hits += out.correct[i] ? 1 : 0;
    lse_sum += out.log_sum_exp[i];
  }
  out.accuracy = static_cast<double>(hits) / static_cast<double>(n);
  out.mean_log_sum_exp = lse_sum / static_cast<double>(n);
  return out;
}

double accuracy(const ModelSpec &spec, const Params &params, const LabeledDataset &ds) {
  return evaluate_dataset(spec, params, ds).accuracy;
}

double mean_log_likelihood(const ModelSpec &spec, const Params &params,
                           const LabeledDataset &ds) {
  return evaluate_dataset(spec, params, ds).mean_log_sum_exp;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'A', 'U', 'G', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

class Writer {
public:
  explicit Writer(std::ostream &out) : out_(out) {}
  void u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(std::string_view s) { out_.write(s.data(), static_cast<std::streamsize>(s.size())); }

private:
  std::ostream &out_;
};

class Reader {
public:
  Reader(std::istream &in, std::string source) : in_(in), source_(std::move(source)) {}
  std::uint8_t u8() {
    const int c = in_.get();
    if (c == std::char_traits<char>::eof()) {
      throw FormatError(source_ + ": unexpected end of checkpoint");
    }
    return static_cast<std::uint8_t>(c);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string bytes(std::size_t n) {
    std::string s(n, '\0');
    if (!in_.read(s.data(), static_cast<std::streamsize>(n))) {
      throw FormatError(source_ + ": unexpected end of checkpoint");
    }
    return s;
  }
  std::size_t count(std::uint64_t limit) {
    const std::uint64_t n = u64();
    if (n > limit) throw FormatError(source_ + ": implausible element count");
    return static_cast<std::size_t>(n);
  }

private:
  std::istream &in_;
  std::string source_;
};

constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;

} // namespace

void write_checkpoint(const std::filesystem::path &path, const Checkpoint &ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write checkpoint " + path.string());
  Writer w(out);
  w.bytes(std::string_view(kMagic, sizeof(kMagic)));
  w.u32(kVersion);
  w.u64(ckpt.spec_hash);
  w.u64(static_cast<std::uint64_t>(ckpt.step));
  for (std::uint64_t s : ckpt.rng_state) w.u64(s);
  w.u32(static_cast<std::uint32_t>(ckpt.params.layout.size()));
  for (const auto &s : ckpt.params.layout) {
    w.u32(static_cast<std::uint32_t>(s.name.size()));
    w.bytes(s.name);
    w.u64(s.offset);
    w.u64(s.size);
    w.u8(s.is_weight ? 1 : 0);
  }
  w.u64(ckpt.params.values.size());
  for (float v : ckpt.params.values) w.f32(v);
  w.u64(ckpt.velocity.size());
  for (float v : ckpt.velocity) w.f32(v);
  if (!out) throw FormatError("failed writing checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  Reader r(in, path.string());
  if (r.bytes(sizeof(kMagic)) != std::string_view(kMagic, sizeof(kMagic))) {
    throw FormatError(path.string() + ": not a checkpoint (bad magic)");
  }
  if (const auto v = r.u32(); v != kVersion) {
    throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(v));
  }
  Checkpoint ckpt;
  ckpt.spec_hash = r.u64();
  ckpt.step = static_cast<std::int64_t>(r.u64());
  for (auto &s : ckpt.rng_state) s = r.u64();
  const std::uint32_t layers = r.u32();
  for (std::uint32_t i = 0; i < layers; ++i) {
    LayerSlice s;
    s.name = r.bytes(r.u32());
    s.offset = r.u64();
    s.size = r.u64();
    s.is_weight = r.u8() != 0;
    ckpt.params.layout.push_back(std::move(s));
  }
  ckpt.params.values.resize(r.count(kMaxElements));
  for (float &v : ckpt.params.values) v = r.f32();
  ckpt.velocity.resize(r.count(kMaxElements));
  for (float &v : ckpt.velocity) v = r.f32();
  for (const auto &s : ckpt.params.layout) {
    if (s.offset + s.size > ckpt.params.values.size()) {
      throw FormatError(path.string() + ": layer '" + s.name + "' exceeds parameter array");
    }
  }
  return ckpt;
}

} // namespace augmetrics
