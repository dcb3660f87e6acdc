#include "lutkit/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lutkit {

void ReplacementPolicy::validate() const {
  if (k < 1 || k > 256) throw ConfigError("K must be in [1, 256]");
  if (dense_v < 1 || conv_v < 0) throw ConfigError("sub-vector length must be positive");
  if (replace_last_n < 0) throw ConfigError("replace_last_n must be >= 0");
  if (init_samples < 1 || max_kmeans_rows < 1) throw ConfigError("init sample counts must be positive");
  if (kmeans_iters < 1) throw ConfigError("k-means needs at least one iteration");
  if (!(temperature > 0.0f) || !std::isfinite(temperature)) throw ConfigError("temperature must be positive");
}

std::vector<std::size_t> select_replaced(const ModelSpec& model, const ReplacementPolicy& policy) {
  policy.validate();
  std::vector<std::size_t> linear = model.linear_layers();
  if (!policy.replace_first && !linear.empty()) linear.erase(linear.begin());
  const auto n = static_cast<std::size_t>(policy.replace_last_n);
  if (n > linear.size()) {
    throw ConfigError("replace_last_n=" + std::to_string(n) + " but only " + std::to_string(linear.size()) +
                      " layers are replaceable" + (policy.replace_first ? "" : " (the first is kept dense)"));
  }
  return {linear.end() - static_cast<std::ptrdiff_t>(n), linear.end()};
}

namespace {

MatrixF32 sample_rows(const MatrixF32& x, Index count, Rng& rng) {
  if (x.rows() <= count) return x;
  std::vector<Index> idx(static_cast<std::size_t>(x.rows()));
  std::iota(idx.begin(), idx.end(), Index{0});
  rng.shuffle(std::span<Index>(idx));
  MatrixF32 out(count, x.cols());
  for (Index i = 0; i < count; ++i) out.row(i) = x.row(idx[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace

void init_from_float(ModelSpec& model, const MatrixF32& data, const ReplacementPolicy& policy, Rng& rng) {
  const auto chosen = select_replaced(model, policy);
  if (chosen.empty()) return;
  for (auto i : chosen) {
    if (model.layers[i].lut) throw ConfigError("layer " + std::to_string(i) + " is already replaced");
  }
  const MatrixF32 samples = sample_rows(data, policy.init_samples, rng);
  InferenceOptions dense;
  dense.use_lut = false;
  const auto inputs = linear_inputs(model, samples, dense);

  for (auto i : chosen) {
    Layer& layer = model.layers[i];
    PqConfig cfg{layer.kind == LayerKind::Conv
                     ? (policy.conv_v ? policy.conv_v : layer.conv.window.kernel_h * layer.conv.window.kernel_w)
                     : policy.dense_v,
                 policy.k};
    cfg.validate(layer.weight.rows());
    const MatrixF32 rows = sample_rows(inputs[i], policy.max_kmeans_rows, rng);
    if (rows.rows() < policy.k) {
      throw ConfigError("layer " + std::to_string(i) + ": " + std::to_string(rows.rows()) +
                        " init samples cannot seed K=" + std::to_string(policy.k) + " centroids");
    }
    CodebooksF32 books = fit_codebooks(rows, cfg, policy.kmeans_iters, rng);
    LutLayer lut = LutLayer::from_weight(std::move(layer.weight), std::move(books), cfg);
    layer.weight = MatrixF32();
    lut.qat = policy.qat;
    lut.temp = Temperature::from_value(policy.temperature);
    layer.lut = std::move(lut);
  }
}

void build_model_hash_trees(ModelSpec& model, const MatrixF32& data, const HashTreeOptions& opts, Rng& rng) {
  InferenceOptions ref;
  ref.fast = false;
  const auto inputs = linear_inputs(model, data, ref);
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    Layer& l = model.layers[i];
    if (!l.replaced()) continue;
    l.lut->hash_trees = build_hash_trees(inputs[i], l.lut->books, opts, rng);
  }
}

void TrainConfig::validate() const {
  for (float lr : {lr_weight, lr_centroid, lr_temperature}) {
    if (!(lr >= 0.0f) || !std::isfinite(lr)) throw ConfigError("learning rates must be finite and >= 0");
  }
  if (!(momentum >= 0.0f && momentum < 1.0f)) throw ConfigError("momentum must be in [0, 1)");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch size must be positive");
}

namespace {

struct Velocity {
  MatrixF32 weight, centroids;
  RowVector<float> bias;
};

template <typename P, typename G>
void sgd_momentum(P& param, P& vel, const G& grad, float lr, float mu) {
  if (vel.size() != param.size()) vel = P::Zero(param.rows(), param.cols());
  vel = mu * vel + grad;
  param -= lr * vel;
}

struct BatchState {
  std::vector<MatrixF32> rows;
  std::vector<SteCache> caches;
  std::vector<MatrixF32> outs;
};

MatrixF32 train_forward(const ModelSpec& model, const MatrixF32& x, BatchState& st) {
  const std::size_t n = model.layers.size();
  st.rows.assign(n, MatrixF32());
  st.caches.assign(n, SteCache());
  st.outs.assign(n, MatrixF32());
  const MatrixF32* h = &x;
  for (std::size_t i = 0; i < n; ++i) {
    const Layer& l = model.layers[i];
    if (l.kind == LayerKind::Relu) {
      st.outs[i] = h->cwiseMax(0.0f);
    } else if (l.replaced()) {
      SteForward f = ste_forward(to_rows(l, *h), *l.lut);
      f.output.rowwise() += l.bias;
      st.outs[i] = from_rows(l, f.output, h->rows());
      st.caches[i] = std::move(f.cache);
    } else {
      st.rows[i] = to_rows(l, *h);
      MatrixF32 y = st.rows[i] * l.weight;
      y.rowwise() += l.bias;
      st.outs[i] = from_rows(l, y, h->rows());
    }
    h = &st.outs[i];
  }
  return *h;
}

double mse_against(const ModelSpec& model, const ModelSpec& reference, const MatrixF32& x) {
  return mse(forward(model, x), forward(reference, x));
}

}  // namespace

std::vector<EpochMetrics> train(ModelSpec& model, const Dataset& data, const TrainConfig& cfg,
                                const ModelSpec* float_reference,
                                const std::function<void(const EpochMetrics&)>& on_epoch) {
  cfg.validate();
  data.validate();
  model.validate();
  if (data.features.cols() != model.input_features) throw ShapeError("dataset width does not match the model");

  Rng rng(cfg.seed);
  std::vector<Velocity> vel(model.layers.size());
  std::vector<Index> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), Index{0});

  MatrixF32 probe;
  if (float_reference) {
    probe = data.features.topRows(std::min(cfg.metrics_samples, data.size()));
  }

  std::vector<EpochMetrics> history;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (auto t = cfg.temperature.value_at(epoch, cfg.epochs)) {
      for (Layer& l : model.layers) {
        if (l.lut) l.lut->temp = Temperature::from_value(*t);
      }
    }
    rng.shuffle(std::span<Index>(order));

    double loss_sum = 0.0, hits = 0.0;
    Index batches = 0;
    for (Index start = 0; start < data.size(); start += cfg.batch_size) {
      const Index b = std::min(cfg.batch_size, data.size() - start);
      MatrixF32 x(b, data.features.cols());
      std::vector<std::int32_t> y(static_cast<std::size_t>(b));
      for (Index i = 0; i < b; ++i) {
        const Index src = order[static_cast<std::size_t>(start + i)];
        x.row(i) = data.features.row(src);
        y[static_cast<std::size_t>(i)] = data.labels[static_cast<std::size_t>(src)];
      }

      BatchState st;
      const MatrixF32 logits = train_forward(model, x, st);
      MatrixF32 g;
      const double loss = softmax_cross_entropy(logits, y, &g);
      if (!std::isfinite(loss)) {
        throw DivergenceError("loss became non-finite at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batches));
      }
      loss_sum += loss;
      hits += accuracy(logits, y) * static_cast<double>(b);
      ++batches;

      for (std::size_t ii = model.layers.size(); ii-- > 0;) {
        Layer& l = model.layers[ii];
        if (l.kind == LayerKind::Relu) {
          g = g.cwiseProduct((st.outs[ii].array() > 0.0f).cast<float>().matrix());
          continue;
        }
        const MatrixF32 rows_g = grad_to_rows(l, g);
        const RowVector<float> db = rows_g.colwise().sum();
        MatrixF32 d_rows;
        if (l.replaced()) {
          SteGradients sg = ste_backward(rows_g, st.caches[ii], *l.lut);
          d_rows = std::move(sg.input);
          sgd_momentum(l.lut->weight, vel[ii].weight, sg.weight, cfg.lr_weight, cfg.momentum);
          sgd_momentum(l.lut->books.centroids, vel[ii].centroids, sg.centroids, cfg.lr_centroid, cfg.momentum);
          if (cfg.temperature.learns()) l.lut->temp.theta -= cfg.lr_temperature * sg.theta;
        } else {
          if (ii > 0) d_rows = rows_g * l.weight.transpose();
          const MatrixF32 dw = st.rows[ii].transpose() * rows_g;
          sgd_momentum(l.weight, vel[ii].weight, dw, cfg.lr_weight, cfg.momentum);
        }
        sgd_momentum(l.bias, vel[ii].bias, db, cfg.lr_weight, cfg.momentum);
        const bool finite = l.linear_weight().allFinite() && l.bias.allFinite() &&
                            (!l.replaced() || (l.lut->books.centroids.allFinite() && std::isfinite(l.lut->temp.theta)));
        if (!finite) {
          throw DivergenceError("parameters of layer " + std::to_string(ii) + " became non-finite at epoch " +
                                std::to_string(epoch) + ", batch " + std::to_string(batches));
        }
        if (l.replaced()) l.lut->rebuild_tables();
        if (ii > 0) g = grad_from_rows(l, d_rows, b);
      }
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.loss = loss_sum / static_cast<double>(std::max<Index>(batches, 1));
    m.accuracy = hits / static_cast<double>(data.size());
    if (float_reference) m.mse_vs_float = mse_against(model, *float_reference, probe);
    for (const Layer& l : model.layers) {
      if (l.replaced()) m.temperatures.push_back(l.lut->temp.value());
    }
    history.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  return history;
}

}  // namespace lutkit
