#include "augmetrics/transforms.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>

#include "augmetrics/errors.hpp"
#include "augmetrics/textio.hpp"

namespace augmetrics {

namespace {

struct KindName {
  TransformKind kind;
  std::string_view name;
};

constexpr std::array<KindName, 15> kKindNames{{
    {TransformKind::Identity, "Identity"},
    {TransformKind::FlipLR, "FlipLR"},
    {TransformKind::FlipUD, "FlipUD"},
    {TransformKind::Crop, "Crop"},
    {TransformKind::Cutout, "Cutout"},
    {TransformKind::RotateFixed, "RotateFixed"},
    {TransformKind::RotateVariable, "RotateVariable"},
    {TransformKind::RotateSquare, "RotateSquare"},
    {TransformKind::ShearFixed, "ShearFixed"},
    {TransformKind::ShearVariable, "ShearVariable"},
    {TransformKind::PatchGaussianFixed, "PatchGaussianFixed"},
    {TransformKind::PatchGaussianVariable, "PatchGaussianVariable"},
    {TransformKind::FullGaussian, "FullGaussian"},
    {TransformKind::RandomErasing, "RandomErasing"},
    {TransformKind::SolarizeAdd, "SolarizeAdd"},
}};

bool uses_pixel_size(TransformKind kind) {
  switch (kind) {
  case TransformKind::Crop:
  case TransformKind::Cutout:
  case TransformKind::PatchGaussianFixed:
  case TransformKind::PatchGaussianVariable:
  case TransformKind::RandomErasing:
    return true;
  default:
    return false;
  }
}

std::string percent(double p) { return format_double(p * 100.0) + "%"; }

/// Normalizes an angle to (-180, 180].
double wrap_degrees(double deg) {
  double a = std::fmod(deg, 360.0);
  if (a <= -180.0) a += 360.0;
  if (a > 180.0) a -= 360.0;
  return a;
}

float sample_bilinear(const Image &img, double y, double x, int ch) {
  const int y0 = static_cast<int>(std::floor(y));
  const int x0 = static_cast<int>(std::floor(x));
  const double fy = y - y0;
  const double fx = x - x0;
  auto px = [&](int r, int c) -> double {
    if (r < 0 || c < 0 || r >= img.height() || c >= img.width()) return 0.0;
    return img.at(r, c, ch);
  };
  const double top = px(y0, x0) * (1.0 - fx) + px(y0, x0 + 1) * fx;
  const double bot = px(y0 + 1, x0) * (1.0 - fx) + px(y0 + 1, x0 + 1) * fx;
  return static_cast<float>(top * (1.0 - fy) + bot * fy);
}

void fill_square(Image &img, int row0, int col0, int size, auto &&value_for) {
  const int r_begin = std::max(row0, 0);
  const int c_begin = std::max(col0, 0);
  const int r_end = std::min(row0 + size, img.height());
  const int c_end = std::min(col0 + size, img.width());
  for (int r = r_begin; r < r_end; ++r) {
    for (int c = c_begin; c < c_end; ++c) {
      for (int ch = 0; ch < img.channels(); ++ch) {
        img.at(r, c, ch) = value_for(img.at(r, c, ch), ch);
      }
    }
  }
}

int signed_direction(Rng &rng) { return rng.bernoulli(0.5) ? 1 : -1; }

} // namespace

std::string_view to_string(TransformKind kind) noexcept {
  for (const auto &kn : kKindNames) {
    if (kn.kind == kind) return kn.name;
  }
  return "Unknown";
}

TransformKind transform_kind_from_string(std::string_view name) {
  for (const auto &kn : kKindNames) {
    if (kn.name == name) return kn.kind;
  }
  throw ValidationError("unknown transform kind '" + std::string(name) + "'");
}

bool is_discrete(TransformKind kind) noexcept {
  switch (kind) {
  case TransformKind::Identity:
  case TransformKind::FlipLR:
  case TransformKind::FlipUD:
  case TransformKind::Crop:
  case TransformKind::Cutout:
  case TransformKind::RotateFixed:
  case TransformKind::RotateSquare:
  case TransformKind::ShearFixed:
    return true;
  default:
    return false;
  }
}

// ---------------------------------------------------------------------------
// TransformSpec

void TransformSpec::validate() const {
  const std::string name(to_string(kind));
  if (!(probability >= 0.0 && probability <= 1.0)) {
    throw ValidationError(name + ": probability " + format_double(probability) +
                          " outside [0, 1]");
  }
  if (!(magnitude >= 0.0) || !std::isfinite(magnitude)) {
    throw ValidationError(name + ": magnitude must be finite and >= 0");
  }
  if (!(secondary >= 0.0) || !std::isfinite(secondary)) {
    throw ValidationError(name + ": secondary magnitude must be finite and >= 0");
  }
  if (uses_pixel_size(kind) && magnitude != std::floor(magnitude)) {
    throw ValidationError(name + ": pixel size must be an integer");
  }
}

void TransformSpec::validate_for(const ImageShape &shape) const {
  validate();
  const int side = std::min(shape.height, shape.width);
  if (kind == TransformKind::Cutout && magnitude > side) {
    throw ValidationError("Cutout: size " + format_double(magnitude) +
                          " exceeds image side " + std::to_string(side));
  }
  if (kind == TransformKind::RotateSquare && shape.height != shape.width) {
    throw ValidationError("Rotate(square) requires square images");
  }
}

std::string TransformSpec::label() const {
  const std::string p = percent(probability);
  const std::string m = format_double(magnitude);
  switch (kind) {
  case TransformKind::Identity:
    return "Identity";
  case TransformKind::FlipLR:
    return "FlipLR(" + p + ")";
  case TransformKind::FlipUD:
    return "FlipUD(" + p + ")";
  case TransformKind::Crop:
    return "Crop(" + m + "," + p + ")";
  case TransformKind::Cutout:
    return "Cutout(" + m + "," + p + ")";
  case TransformKind::RotateFixed:
    return "Rotate(fixed," + m + "deg," + p + ")";
  case TransformKind::RotateVariable:
    return "Rotate(variable," + m + "deg," + p + ")";
  case TransformKind::RotateSquare:
    return "Rotate(square," + p + ")";
  case TransformKind::ShearFixed:
    return "Shear(fixed," + m + "," + p + ")";
  case TransformKind::ShearVariable:
    return "Shear(variable," + m + "," + p + ")";
  case TransformKind::PatchGaussianFixed:
    return "PatchGaussian(fixed," + m + "," + format_double(secondary) + "," + p + ")";
  case TransformKind::PatchGaussianVariable:
    return "PatchGaussian(variable," + m + "," + format_double(secondary) + "," + p + ")";
  case TransformKind::FullGaussian:
    return "FullGaussian(" + m + "," + p + ")";
  case TransformKind::RandomErasing:
    return "RandomErasing(" + m + "," + p + ")";
  case TransformKind::SolarizeAdd:
    return "SolarizeAdd(" + m + "," + format_double(secondary) + "," + p + ")";
  }
  return "Unknown";
}

TransformSpec parse_transform_label(std::string_view label) {
  const std::string_view text = trim(label);
  const auto bad = [&](const std::string &why) {
    return ValidationError("cannot parse transform label '" + std::string(text) +
                           "': " + why);
  };
  if (text == "Identity" || text == "Identity()") {
    return TransformSpec::identity();
  }
  const std::size_t open = text.find('(');
  if (open == std::string_view::npos || text.back() != ')') {
    throw bad("expected Name(args)");
  }
  const std::string name(text.substr(0, open));
  std::vector<std::string> args =
      split(text.substr(open + 1, text.size() - open - 2), ',');
  for (auto &a : args) a = std::string(trim(a));

  const auto number = [&](std::string s, std::string_view suffix = {}) {
    if (!suffix.empty() && s.size() >= suffix.size() &&
        s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0) {
      s.resize(s.size() - suffix.size());
    }
    const auto v = parse_double(s);
    if (!v) throw bad("'" + s + "' is not a number");
    return *v;
  };
  const auto prob = [&](const std::string &s) {
    if (s.empty() || s.back() != '%') throw bad("probability must end in %");
    return number(s, "%") / 100.0;
  };
  const auto expect = [&](std::size_t n) {
    if (args.size() != n) {
      throw bad("expected " + std::to_string(n) + " arguments");
    }
  };

  TransformSpec spec;
  if (name == "FlipLR" || name == "FlipUD") {
    expect(1);
    spec.kind = name == "FlipLR" ? TransformKind::FlipLR : TransformKind::FlipUD;
    spec.probability = prob(args[0]);
  } else if (name == "Crop" || name == "Cutout" || name == "RandomErasing" ||
             name == "FullGaussian") {
    expect(2);
    spec.kind = transform_kind_from_string(name);
    spec.magnitude = number(args[0]);
    spec.probability = prob(args[1]);
  } else if (name == "Rotate") {
    if (args.empty()) throw bad("missing rotate mode");
    if (args[0] == "square") {
      expect(2);
      spec.kind = TransformKind::RotateSquare;
      spec.probability = prob(args[1]);
    } else {
      expect(3);
      if (args[0] == "fixed") spec.kind = TransformKind::RotateFixed;
      else if (args[0] == "variable") spec.kind = TransformKind::RotateVariable;
      else throw bad("rotate mode must be fixed, variable or square");
      spec.magnitude = number(args[1], "deg");
      spec.probability = prob(args[2]);
    }
  } else if (name == "Shear") {
    expect(3);
    if (args[0] == "fixed") spec.kind = TransformKind::ShearFixed;
    else if (args[0] == "variable") spec.kind = TransformKind::ShearVariable;
    else throw bad("shear mode must be fixed or variable");
    spec.magnitude = number(args[1]);
    spec.probability = prob(args[2]);
  } else if (name == "PatchGaussian") {
    expect(4);
    if (args[0] == "fixed") spec.kind = TransformKind::PatchGaussianFixed;
    else if (args[0] == "variable") spec.kind = TransformKind::PatchGaussianVariable;
    else throw bad("patch mode must be fixed or variable");
    spec.magnitude = number(args[1]);
    spec.secondary = number(args[2]);
    spec.probability = prob(args[3]);
  } else if (name == "SolarizeAdd") {
    expect(3);
    spec.kind = TransformKind::SolarizeAdd;
    spec.magnitude = number(args[0]);
    spec.secondary = number(args[1]);
    spec.probability = prob(args[2]);
  } else {
    throw bad("unknown transform '" + name + "'");
  }
  spec.validate();
  return spec;
}

// ---------------------------------------------------------------------------
// Policy

Policy Policy::from_ops(const std::vector<TransformSpec> &ops) {
  Policy policy;
  const auto place = [](std::optional<TransformSpec> &slot,
                        const TransformSpec &op) {
    if (slot) {
      throw ValidationError("policy: more than one " +
                            std::string(to_string(op.kind)) + " transform");
    }
    slot = op;
  };
  for (const auto &op : ops) {
    switch (op.kind) {
    case TransformKind::Identity:
      break;
    case TransformKind::Crop:
      place(policy.crop, op);
      break;
    case TransformKind::FlipLR:
      place(policy.flip_lr, op);
      break;
    case TransformKind::Cutout:
      place(policy.cutout, op);
      break;
    default:
      policy.pre_ops.push_back(op);
    }
  }
  return policy;
}

std::vector<TransformSpec> Policy::ordered() const {
  std::vector<TransformSpec> out = pre_ops;
  if (crop) out.push_back(*crop);
  if (flip_lr) out.push_back(*flip_lr);
  if (cutout) out.push_back(*cutout);
  return out;
}

void Policy::validate() const {
  for (const auto &op : ordered()) op.validate();
  if (crop && crop->kind != TransformKind::Crop) {
    throw ValidationError("policy: crop slot holds " + std::string(to_string(crop->kind)));
  }
  if (flip_lr && flip_lr->kind != TransformKind::FlipLR) {
    throw ValidationError("policy: flip slot holds " + std::string(to_string(flip_lr->kind)));
  }
  if (cutout && cutout->kind != TransformKind::Cutout) {
    throw ValidationError("policy: cutout slot holds " + std::string(to_string(cutout->kind)));
  }
}

void Policy::validate_for(const ImageShape &shape) const {
  validate();
  for (const auto &op : ordered()) op.validate_for(shape);
}

std::string Policy::label() const {
  std::string out;
  for (const auto &op : ordered()) {
    if (op.kind == TransformKind::Identity) continue;
    if (!out.empty()) out += "+";
    out += op.label();
  }
  return out.empty() ? "Identity" : out;
}

bool Policy::is_identity() const {
  const auto ops = ordered();
  return std::all_of(ops.begin(), ops.end(), [](const TransformSpec &op) {
    return op.kind == TransformKind::Identity || op.probability == 0.0;
  });
}

Policy parse_policy_label(std::string_view label) {
  std::vector<TransformSpec> ops;
  // '+' never appears inside a single label.
  for (const auto &part : split(trim(label), '+')) {
    ops.push_back(parse_transform_label(part));
  }
  Policy p = Policy::from_ops(ops);
  p.validate();
  return p;
}

nlohmann::json to_json(const TransformSpec &spec) {
  return {{"kind", std::string(to_string(spec.kind))},
          {"magnitude", spec.magnitude},
          {"secondary", spec.secondary},
          {"probability", spec.probability}};
}

TransformSpec transform_from_json(const nlohmann::json &j) {
  if (j.is_string()) {
    return parse_transform_label(j.get<std::string>());
  }
  if (!j.is_object() || !j.contains("kind")) {
    throw ValidationError("transform: expected an object with a 'kind' field");
  }
  TransformSpec spec;
  spec.kind = transform_kind_from_string(j.at("kind").get<std::string>());
  spec.magnitude = j.value("magnitude", 0.0);
  spec.secondary = j.value("secondary", 0.0);
  spec.probability = j.value("probability", 1.0);
  spec.validate();
  return spec;
}

nlohmann::json to_json(const Policy &policy) {
  nlohmann::json ops = nlohmann::json::array();
  for (const auto &op : policy.ordered()) ops.push_back(to_json(op));
  return {{"transforms", ops}};
}

Policy policy_from_json(const nlohmann::json &j) {
  if (j.is_string()) {
    return parse_policy_label(j.get<std::string>());
  }
  const nlohmann::json &list = j.is_array() ? j : j.at("transforms");
  std::vector<TransformSpec> ops;
  for (const auto &item : list) ops.push_back(transform_from_json(item));
  Policy p = Policy::from_ops(ops);
  p.validate();
  return p;
}

// ---------------------------------------------------------------------------
// Geometry

Image flip_left_right(const Image &img) {
  Image out(img.shape);
  for (int r = 0; r < img.height(); ++r)
    for (int c = 0; c < img.width(); ++c)
      for (int ch = 0; ch < img.channels(); ++ch)
        out.at(r, c, ch) = img.at(r, img.width() - 1 - c, ch);
  return out;
}

Image flip_up_down(const Image &img) {
  Image out(img.shape);
  for (int r = 0; r < img.height(); ++r)
    for (int c = 0; c < img.width(); ++c)
      for (int ch = 0; ch < img.channels(); ++ch)
        out.at(r, c, ch) = img.at(img.height() - 1 - r, c, ch);
  return out;
}

Image rotate_image(const Image &img, double degrees) {
  const double a = wrap_degrees(degrees);
  const int h = img.height();
  const int w = img.width();
  Image out(img.shape);

  // Quarter turns of square images are exact permutations.
  const double quarter = a / 90.0;
  if (h == w && quarter == std::round(quarter)) {
    const int k = (static_cast<int>(std::round(quarter)) + 4) % 4;
    const int n = h;
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) {
        int sr = r, sc = c;
        switch (k) {
        case 1: sr = c; sc = n - 1 - r; break;
        case 2: sr = n - 1 - r; sc = n - 1 - c; break;
        case 3: sr = n - 1 - c; sc = r; break;
        default: break;
        }
        for (int ch = 0; ch < img.channels(); ++ch)
          out.at(r, c, ch) = img.at(sr, sc, ch);
      }
    return out;
  }

  const double rad = a * std::numbers::pi / 180.0;
  const double cs = std::cos(rad);
  const double sn = std::sin(rad);
  const double cy = (h - 1) / 2.0;
  const double cx = (w - 1) / 2.0;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double dx = c - cx;
      const double dy = r - cy;
      const double sx = cx + dx * cs - dy * sn;
      const double sy = cy + dx * sn + dy * cs;
      for (int ch = 0; ch < img.channels(); ++ch)
        out.at(r, c, ch) = sample_bilinear(img, sy, sx, ch);
    }
  }
  return out;
}

Image shear_image(const Image &img, double coefficient) {
  if (coefficient == 0.0) return img;
  Image out(img.shape);
  const double cy = (img.height() - 1) / 2.0;
  for (int r = 0; r < img.height(); ++r)
    for (int c = 0; c < img.width(); ++c) {
      const double sx = c + coefficient * (r - cy);
      for (int ch = 0; ch < img.channels(); ++ch)
        out.at(r, c, ch) = sample_bilinear(img, r, sx, ch);
    }
  return out;
}

// ---------------------------------------------------------------------------
// Draw and apply

AugmentContext AugmentContext::for_dataset(const LabeledDataset &ds) {
  AugmentContext ctx;
  if (ds.stats.fitted()) {
    ctx.fill = ds.stats.mean;
  } else if (!ds.empty()) {
    ctx.fill = fit_normalization(ds).mean;
  }
  return ctx;
}

TransformDraw draw_parameters(const TransformSpec &spec, const ImageShape &shape,
                              Rng &rng) {
  TransformDraw d;
  d.kind = spec.kind;
  d.applied = rng.uniform() < spec.probability;
  if (!d.applied || spec.kind == TransformKind::Identity) {
    return d;
  }
  const int h = shape.height;
  const int w = shape.width;
  switch (spec.kind) {
  case TransformKind::FlipLR:
  case TransformKind::FlipUD:
    d.flip = true;
    break;
  case TransformKind::Crop: {
    const int pad = static_cast<int>(spec.magnitude);
    const auto span = static_cast<std::uint64_t>(2 * pad + 1);
    d.offset_row = static_cast<int>(rng.uniform_int(span)) - pad;
    d.offset_col = static_cast<int>(rng.uniform_int(span)) - pad;
    break;
  }
  case TransformKind::Cutout:
  case TransformKind::RandomErasing:
    d.size = static_cast<int>(spec.magnitude);
    d.offset_row = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(h)));
    d.offset_col = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(w)));
    break;
  case TransformKind::RotateFixed:
    d.amount = signed_direction(rng) * spec.magnitude;
    break;
  case TransformKind::RotateVariable: {
    const double mag = rng.uniform(0.0, spec.magnitude);
    d.amount = signed_direction(rng) * mag;
    break;
  }
  case TransformKind::RotateSquare:
    d.amount = 90.0 * static_cast<double>(rng.uniform_int(4));
    break;
  case TransformKind::ShearFixed:
    d.amount = signed_direction(rng) * spec.magnitude;
    break;
  case TransformKind::ShearVariable: {
    const double mag = rng.uniform(0.0, spec.magnitude);
    d.amount = signed_direction(rng) * mag;
    break;
  }
  case TransformKind::PatchGaussianFixed: {
    d.size = std::min({static_cast<int>(spec.magnitude), h, w});
    d.offset_row = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(h - d.size + 1)));
    d.offset_col = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(w - d.size + 1)));
    d.amount = rng.uniform(0.0, spec.secondary);
    break;
  }
  case TransformKind::PatchGaussianVariable: {
    const int max_size = static_cast<int>(spec.magnitude);
    d.size = max_size > 0 ? 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(max_size))) : 0;
    d.offset_row = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(h)));
    d.offset_col = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(w)));
    d.amount = rng.uniform(0.0, spec.secondary);
    break;
  }
  case TransformKind::FullGaussian:
    d.amount = spec.magnitude;
    break;
  case TransformKind::SolarizeAdd:
  case TransformKind::Identity:
    break;
  }
  return d;
}

Image apply_draw(const TransformSpec &spec, const TransformDraw &draw,
                 const Image &img, const AugmentContext &ctx, Rng &rng) {
  if (!draw.applied) return img;
  switch (spec.kind) {
  case TransformKind::Identity:
    return img;
  case TransformKind::FlipLR:
    return flip_left_right(img);
  case TransformKind::FlipUD:
    return flip_up_down(img);
  case TransformKind::Crop: {
    if (draw.offset_row == 0 && draw.offset_col == 0) return img;
    Image out(img.shape);
    for (int r = 0; r < img.height(); ++r) {
      const int sr = r + draw.offset_row;
      if (sr < 0 || sr >= img.height()) continue;
      for (int c = 0; c < img.width(); ++c) {
        const int sc = c + draw.offset_col;
        if (sc < 0 || sc >= img.width()) continue;
        for (int ch = 0; ch < img.channels(); ++ch)
          out.at(r, c, ch) = img.at(sr, sc, ch);
      }
    }
    return out;
  }
  case TransformKind::Cutout: {
    Image out = img;
    fill_square(out, draw.offset_row - draw.size / 2, draw.offset_col - draw.size / 2,
                draw.size, [&](float, int ch) {
                  const auto c = static_cast<std::size_t>(ch);
                  return static_cast<float>(c < ctx.fill.size() ? ctx.fill[c] : 0.5);
                });
    return out;
  }
  case TransformKind::RandomErasing: {
    Image out = img;
    fill_square(out, draw.offset_row - draw.size / 2, draw.offset_col - draw.size / 2,
                draw.size, [&](float, int) { return static_cast<float>(rng.uniform()); });
    return out;
  }
  case TransformKind::RotateFixed:
  case TransformKind::RotateVariable:
  case TransformKind::RotateSquare:
    return rotate_image(img, draw.amount);
  case TransformKind::ShearFixed:
  case TransformKind::ShearVariable:
    return shear_image(img, draw.amount);
  case TransformKind::PatchGaussianFixed: {
    Image out = img;
    const double sigma = draw.amount;
    fill_square(out, draw.offset_row, draw.offset_col, draw.size, [&](float v, int) {
      return static_cast<float>(std::clamp(v + sigma * rng.normal(), 0.0, 1.0));
    });
    return out;
  }
  case TransformKind::PatchGaussianVariable: {
    Image out = img;
    const double sigma = draw.amount;
    fill_square(out, draw.offset_row - draw.size / 2, draw.offset_col - draw.size / 2,
                draw.size, [&](float v, int) {
                  return static_cast<float>(std::clamp(v + sigma * rng.normal(), 0.0, 1.0));
                });
    return out;
  }
  case TransformKind::FullGaussian: {
    Image out = img;
    for (float &v : out.values)
      v = static_cast<float>(std::clamp(v + draw.amount * rng.normal(), 0.0, 1.0));
    return out;
  }
  case TransformKind::SolarizeAdd: {
    Image out = img;
    for (float &v : out.values)
      if (v < spec.magnitude)
        v = static_cast<float>(std::min(v + spec.secondary, 1.0));
    return out;
  }
  }
  return img;
}

std::string outcome_of(const TransformDraw &draw) {
  if (!draw.applied) return "identity";
  switch (draw.kind) {
  case TransformKind::Identity:
    return "identity";
  case TransformKind::FlipLR:
    return "flip_lr";
  case TransformKind::FlipUD:
    return "flip_ud";
  case TransformKind::Crop:
    if (draw.offset_row == 0 && draw.offset_col == 0) return "identity";
    return "crop(" + std::to_string(draw.offset_row) + "," + std::to_string(draw.offset_col) + ")";
  case TransformKind::Cutout:
    if (draw.size == 0) return "identity";
    return "cutout(" + std::to_string(draw.offset_row) + "," + std::to_string(draw.offset_col) + ")";
  case TransformKind::RotateFixed:
  case TransformKind::RotateSquare: {
    const double a = wrap_degrees(draw.amount);
    if (a == 0.0) return "identity";
    return "rotate(" + format_double(a) + ")";
  }
  case TransformKind::ShearFixed:
    if (draw.amount == 0.0) return "identity";
    return "shear(" + format_double(draw.amount) + ")";
  default:
    throw NotDiscreteError(std::string(to_string(draw.kind)) +
                           " has continuous randomness; no discrete outcome");
  }
}

Image apply(const TransformSpec &spec, const Image &img, Rng &rng,
            const AugmentContext &ctx) {
  const TransformDraw draw = draw_parameters(spec, img.shape, rng);
  return apply_draw(spec, draw, img, ctx, rng);
}

Image apply_policy_dynamic(const Policy &policy, const Image &img, Rng &rng,
                           const AugmentContext &ctx, PolicyTrace *trace) {
  Image current = img;
  std::uint64_t slot = 0;
  for (const TransformSpec &op : policy.ordered()) {
    Rng slot_rng = rng.split(slot++);
    const TransformDraw draw = draw_parameters(op, current.shape, slot_rng);
    if (trace) {
      trace->visited.push_back(op.kind);
      if (draw.applied && op.kind != TransformKind::Identity) ++trace->applied;
    }
    if (draw.applied) {
      current = apply_draw(op, draw, current, ctx, slot_rng);
    }
  }
  // Advance the caller's stream so consecutive calls draw fresh randomness.
  rng.next_u64();
  return current;
}

LabeledDataset materialize_static(const Policy &policy, const LabeledDataset &ds,
                                  std::uint64_t seed) {
  if (policy.is_identity()) return ds;
  if (ds.values_normalized) {
    throw ValidationError("augmentation operates on scaled values; dataset is "
                          "already normalized");
  }
  if (!ds.empty()) policy.validate_for(ds.shape());
  const AugmentContext ctx = AugmentContext::for_dataset(ds);
  LabeledDataset out = ds;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    Rng rng = Rng::derive(seed, "static_augment", {i});
    out.images[i] = apply_policy_dynamic(policy, ds.images[i], rng, ctx);
  }
  return out;
}

LabeledDataset augment_validation(const Policy &policy,
                                  const LabeledDataset &val, std::uint64_t seed) {
  return materialize_static(policy, val, seed);
}

// ---------------------------------------------------------------------------
// Outcome enumeration

double OutcomeDistribution::probability_of(std::string_view descriptor) const {
  for (const auto &o : outcomes)
    if (o.descriptor == descriptor) return o.probability;
  return 0.0;
}

double OutcomeDistribution::entropy() const {
  double h = 0.0;
  for (const auto &o : outcomes) {
    if (o.probability > 0.0) h -= o.probability * std::log(o.probability);
  }
  // A near-certain outcome can round to a tiny negative value.
  return std::max(h, 0.0);
}

OutcomeDistribution enumerate_outcomes(const TransformSpec &spec,
                                       const ImageShape &shape) {
  spec.validate();
  if (!is_discrete(spec.kind)) {
    throw NotDiscreteError(std::string(to_string(spec.kind)) +
                           " has continuous randomness; use loss-based Diversity");
  }
  const double p = spec.probability;

  // Enumerate every internal draw as a TransformDraw, then merge by
  // descriptor so that identity-equivalent and parameter-equal draws
  // collapse onto one arm.
  std::vector<std::pair<TransformDraw, double>> arms;
  TransformDraw skip;
  skip.kind = spec.kind;
  arms.emplace_back(skip, 1.0 - p);

  TransformDraw base;
  base.kind = spec.kind;
  base.applied = true;
  switch (spec.kind) {
  case TransformKind::Identity:
    arms.emplace_back(base, p);
    break;
  case TransformKind::FlipLR:
  case TransformKind::FlipUD:
    base.flip = true;
    arms.emplace_back(base, p);
    break;
  case TransformKind::Crop: {
    const int pad = static_cast<int>(spec.magnitude);
    const double each = p / ((2.0 * pad + 1) * (2.0 * pad + 1));
    for (int dy = -pad; dy <= pad; ++dy)
      for (int dx = -pad; dx <= pad; ++dx) {
        TransformDraw d = base;
        d.offset_row = dy;
        d.offset_col = dx;
        arms.emplace_back(d, each);
      }
    break;
  }
  case TransformKind::Cutout: {
    const double each = p / (static_cast<double>(shape.height) * shape.width);
    for (int r = 0; r < shape.height; ++r)
      for (int c = 0; c < shape.width; ++c) {
        TransformDraw d = base;
        d.size = static_cast<int>(spec.magnitude);
        d.offset_row = r;
        d.offset_col = c;
        arms.emplace_back(d, each);
      }
    break;
  }
  case TransformKind::RotateFixed:
  case TransformKind::ShearFixed:
    for (int sign : {1, -1}) {
      TransformDraw d = base;
      d.amount = sign * spec.magnitude;
      arms.emplace_back(d, p / 2.0);
    }
    break;
  case TransformKind::RotateSquare:
    for (int k = 0; k < 4; ++k) {
      TransformDraw d = base;
      d.amount = 90.0 * k;
      arms.emplace_back(d, p / 4.0);
    }
    break;
  default:
    break;
  }

  std::map<std::string, double> merged;
  std::vector<std::string> order;
  for (const auto &[draw, prob] : arms) {
    if (prob <= 0.0) continue;
    const std::string key = outcome_of(draw);
    auto [it, inserted] = merged.emplace(key, 0.0);
    if (inserted) order.push_back(key);
    it->second += prob;
  }
  OutcomeDistribution dist;
  dist.is_discrete = true;
  for (const auto &key : order) dist.outcomes.push_back({key, merged[key]});
  return dist;
}

} // namespace augmetrics
