#include "lutkit/soft_pq.hpp"

#include <charconv>
#include <sstream>

namespace lutkit {

LutLayer LutLayer::from_weight(MatrixF32 weight, CodebooksF32 books, const PqConfig& cfg) {
  cfg.validate(weight.rows());
  if (books.v != cfg.v || books.k != cfg.k || books.input_width() != weight.rows()) {
    throw ShapeError("LutLayer: codebooks do not match the weight matrix");
  }
  LutLayer layer;
  layer.cfg = cfg;
  layer.books = std::move(books);
  layer.weight = std::move(weight);
  layer.rebuild_tables();
  return layer;
}

void LutLayer::rebuild_tables() {
  if (!has_weight()) throw ConfigError("LutLayer: cannot rebuild tables without the dense weight");
  table = build_table(weight, books);
  quantized = quantize_table(table);
  qat_table_ = dequantize(*quantized);
}

void LutLayer::set_tables(LookupTableF32 real, std::optional<LookupTableI8> q) {
  table = std::move(real);
  quantized = std::move(q);
  if (quantized) qat_table_ = dequantize(*quantized);
}

SteForward ste_forward(const MatrixF32& a, const LutLayer& layer) {
  check_codebooks(a, layer.books, "ste_forward");
  SteForward f;
  f.cache.hard = encode_hard(a, layer.books);
  f.output = lut_matmul_ref(f.cache.hard, layer.forward_table());
  f.cache.input = a;
  f.cache.t = std::exp(static_cast<double>(layer.temp.theta));
  f.cache.distances = pairwise_distances<double>(a.cast<double>(), layer.books.cast<double>());
  f.cache.soft = softmax_encoding<double>(f.cache.distances, layer.books.k, f.cache.t);
  f.cache.num_codebooks = layer.books.num_codebooks;
  f.cache.k = layer.books.k;
  f.cache.v = layer.books.v;
  f.cache.m = layer.table.m;
  return f;
}

SteGradients ste_backward(const MatrixF32& grad_out, const SteCache& cache, const LutLayer& layer) {
  const Index n = cache.input.rows(), cc = cache.num_codebooks, k = cache.k, v = cache.v, m = cache.m;
  if (cc != layer.books.num_codebooks || k != layer.books.k || v != layer.books.v || m != layer.table.m) {
    throw ShapeError("ste_backward: cache does not belong to this layer");
  }
  if (grad_out.rows() != n || grad_out.cols() != m) throw ShapeError("ste_backward: grad_out shape mismatch");
  if (!layer.has_weight()) throw ConfigError("ste_backward: layer has no dense weight to differentiate");

  const MatrixF64 g = grad_out.cast<double>();
  const MatrixF64 a = cache.input.cast<double>();
  const MatrixF64 w = layer.weight.cast<double>();
  const Codebooks<double> p = layer.books.cast<double>();
  const LookupTable<double> table = build_table(w, p);
  const double t = cache.t;

  MatrixF64 dp = MatrixF64::Zero(cc * k, v);
  MatrixF64 dw(cc * v, m);
  MatrixF64 da(n, cc * v);
  double dtheta = 0.0;

  for (Index c = 0; c < cc; ++c) {
    const auto s = cache.soft.middleCols(c * k, k);
    const auto d = cache.distances.middleCols(c * k, k);
    const auto tc = table.entries.middleRows(c * k, k);
    const auto pc = p.centroids.middleRows(c * k, k);

    const MatrixF64 dtable = s.transpose() * g;     // K x M
    const MatrixF64 dsoft = g * tc.transpose();     // N x K

    // Softmax Jacobian, then chain through logits z = -d / t.
    const Eigen::VectorXd inner = (s.array() * dsoft.array()).rowwise().sum();
    const MatrixF64 dz = (s.array() * (dsoft.colwise() - inner).array()).matrix();
    const MatrixF64 dd = -dz / t;
    dtheta += (dz.array() * d.array()).sum() / t;

    // d/da ||a - p||^2 = 2(a - p); d/dp = -2(a - p).
    const auto ac = a.middleCols(c * v, v);
    const Eigen::VectorXd dd_rows = dd.rowwise().sum();
    da.middleCols(c * v, v) = 2.0 * ((ac.array().colwise() * dd_rows.array()).matrix() - dd * pc);
    const Eigen::RowVectorXd dd_cols = dd.colwise().sum();
    dp.middleRows(c * k, k) = -2.0 * (dd.transpose() * ac - (pc.array().colwise() * dd_cols.transpose().array()).matrix());

    // Table path: T_c = P_c * W_c.
    const auto wc = w.middleRows(c * v, v);
    dp.middleRows(c * k, k) += dtable * wc.transpose();
    dw.middleRows(c * v, v) = pc.transpose() * dtable;
  }

  SteGradients grads;
  grads.centroids = dp.cast<float>();
  grads.weight = dw.cast<float>();
  grads.input = da.cast<float>();
  grads.theta = static_cast<float>(dtheta);
  return grads;
}

TemperatureSchedule TemperatureSchedule::fixed(float t) {
  if (!(t > 0.0f) || !std::isfinite(t)) throw ConfigError("fixed temperature must be > 0");
  return TemperatureSchedule(Mode::Fixed, t, t);
}

TemperatureSchedule TemperatureSchedule::annealed(float t0, float t1) {
  if (!(t0 > 0.0f) || !(t1 > 0.0f) || !std::isfinite(t0) || !std::isfinite(t1)) {
    throw ConfigError("annealed temperatures must be > 0");
  }
  return TemperatureSchedule(Mode::Annealed, t0, t1);
}

namespace {

float parse_float(const std::string& s, const std::string& whole) {
  try {
    std::size_t used = 0;
    const float v = std::stof(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::logic_error&) {
    throw ConfigError("bad temperature mode '" + whole + "'");
  }
}

}  // namespace

TemperatureSchedule TemperatureSchedule::parse(const std::string& text) {
  if (text == "learned") return learned();
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string part; std::getline(ss, part, ':');) parts.push_back(part);
  if (parts.size() == 2 && parts[0] == "fixed") return fixed(parse_float(parts[1], text));
  if (parts.size() == 3 && (parts[0] == "anneal" || parts[0] == "annealed")) {
    return annealed(parse_float(parts[1], text), parse_float(parts[2], text));
  }
  throw ConfigError("temperature mode must be learned, fixed:<t> or anneal:<t0>:<t1>; got '" + text + "'");
}

std::string TemperatureSchedule::to_string() const {
  std::ostringstream os;
  switch (mode_) {
    case Mode::Learned: return "learned";
    case Mode::Fixed: os << "fixed:" << t0_; break;
    case Mode::Annealed: os << "anneal:" << t0_ << ":" << t1_; break;
  }
  return os.str();
}

std::optional<float> TemperatureSchedule::value_at(int epoch, int total) const {
  switch (mode_) {
    case Mode::Learned: return std::nullopt;
    case Mode::Fixed: return t0_;
    case Mode::Annealed: {
      if (total <= 0) return t0_;
      const double frac = static_cast<double>(epoch) / static_cast<double>(total);
      return static_cast<float>(static_cast<double>(t0_) * std::pow(static_cast<double>(t1_) / t0_, frac));
    }
  }
  return std::nullopt;
}

}  // namespace lutkit
