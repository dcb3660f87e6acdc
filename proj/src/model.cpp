#include "lutkit/model.hpp"

#include <algorithm>
#include <cmath>

namespace lutkit {

Index Layer::rows_in() const {
  if (lut) return lut->input_width();
  return weight.rows();
}

Index Layer::rows_out() const {
  if (lut) return lut->output_width();
  return weight.cols();
}

std::vector<std::size_t> ModelSpec::linear_layers() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].is_linear()) out.push_back(i);
  }
  return out;
}

std::size_t ModelSpec::replaced_count() const {
  return static_cast<std::size_t>(std::count_if(layers.begin(), layers.end(), [](const Layer& l) { return l.replaced(); }));
}

void ModelSpec::validate() const {
  if (layers.empty()) throw ConfigError("model has no layers");
  Index width = input_features;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Layer& l = layers[i];
    const std::string where = "layer " + std::to_string(i);
    if (l.kind == LayerKind::Relu) continue;
    if (l.bias.size() != l.rows_out()) throw ShapeError(where + ": bias width mismatch");
    if (l.kind == LayerKind::Dense) {
      if (l.rows_in() != width) throw ShapeError(where + ": expects " + std::to_string(l.rows_in()) + " inputs, gets " +
                                                 std::to_string(width));
      width = l.rows_out();
    } else {
      l.conv.window.validate(l.conv.in_h, l.conv.in_w);
      if (l.conv.in_channels * l.conv.in_h * l.conv.in_w != width) throw ShapeError(where + ": conv input shape mismatch");
      if (l.rows_in() != l.conv.patch() || l.rows_out() != l.conv.out_channels) {
        throw ShapeError(where + ": conv weight shape mismatch");
      }
      width = l.conv.out_channels * l.conv.positions();
    }
  }
  if (width != num_classes) throw ShapeError("model output width does not match the class count");
}

namespace {

void he_init(MatrixF32& w, Rng& rng) {
  const double sd = std::sqrt(2.0 / static_cast<double>(w.rows()));
  for (Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<float>(sd * rng.normal());
}

Layer dense_layer(Index in, Index out, Rng& rng) {
  Layer l;
  l.kind = LayerKind::Dense;
  l.weight.resize(in, out);
  he_init(l.weight, rng);
  l.bias = RowVector<float>::Zero(out);
  return l;
}

Layer relu_layer() { return Layer{}; }

Layer conv_layer(const ConvShape& shape, Rng& rng) {
  Layer l;
  l.kind = LayerKind::Conv;
  l.conv = shape;
  l.weight.resize(shape.patch(), shape.out_channels);
  he_init(l.weight, rng);
  l.bias = RowVector<float>::Zero(shape.out_channels);
  return l;
}

}  // namespace

ModelSpec make_mlp(Index inputs, const std::vector<Index>& hidden, Index classes, Rng& rng) {
  if (inputs < 1 || classes < 2) throw ConfigError("make_mlp: need inputs >= 1 and classes >= 2");
  ModelSpec m;
  m.input_features = inputs;
  m.num_classes = classes;
  Index width = inputs;
  for (Index h : hidden) {
    if (h < 1) throw ConfigError("make_mlp: hidden width must be positive");
    m.layers.push_back(dense_layer(width, h, rng));
    m.layers.push_back(relu_layer());
    width = h;
  }
  m.layers.push_back(dense_layer(width, classes, rng));
  return m;
}

ModelSpec make_tiny_cnn(Index channels, Index height, Index width, Index classes, Rng& rng) {
  if (channels < 1 || height < 3 || width < 3 || classes < 2) throw ConfigError("make_tiny_cnn: bad input shape");
  ModelSpec m;
  m.input_features = channels * height * width;
  m.num_classes = classes;
  m.channels = channels;
  m.height = height;
  m.width = width;

  ConvShape c1{channels, height, width, 8, ConvWindow{3, 3, 1, 1}};
  ConvShape c2{8, c1.out_h(), c1.out_w(), 16, ConvWindow{3, 3, 2, 1}};
  m.layers.push_back(conv_layer(c1, rng));
  m.layers.push_back(relu_layer());
  m.layers.push_back(conv_layer(c2, rng));
  m.layers.push_back(relu_layer());
  m.layers.push_back(dense_layer(c2.out_channels * c2.positions(), classes, rng));
  return m;
}

MatrixF32 to_rows(const Layer& layer, const MatrixF32& x) {
  if (layer.kind != LayerKind::Conv) return x;
  const ConvShape& s = layer.conv;
  return im2col(x, s.in_channels, s.in_h, s.in_w, s.window);
}

MatrixF32 from_rows(const Layer& layer, const MatrixF32& y, Index batch) {
  if (layer.kind != LayerKind::Conv) return y;
  const Index p = layer.conv.positions(), co = layer.conv.out_channels;
  MatrixF32 out(batch, co * p);
  for (Index n = 0; n < batch; ++n) {
    for (Index q = 0; q < p; ++q) {
      for (Index c = 0; c < co; ++c) out(n, c * p + q) = y(n * p + q, c);
    }
  }
  return out;
}

MatrixF32 grad_to_rows(const Layer& layer, const MatrixF32& g) {
  if (layer.kind != LayerKind::Conv) return g;
  const Index p = layer.conv.positions(), co = layer.conv.out_channels;
  MatrixF32 rows(g.rows() * p, co);
  for (Index n = 0; n < g.rows(); ++n) {
    for (Index q = 0; q < p; ++q) {
      for (Index c = 0; c < co; ++c) rows(n * p + q, c) = g(n, c * p + q);
    }
  }
  return rows;
}

MatrixF32 grad_from_rows(const Layer& layer, const MatrixF32& d_rows, Index batch) {
  if (layer.kind != LayerKind::Conv) return d_rows;
  const ConvShape& s = layer.conv;
  return col2im(d_rows, batch, s.in_channels, s.in_h, s.in_w, s.window);
}

MatrixF32 linear_apply(const Layer& layer, const MatrixF32& rows, const InferenceOptions& opts) {
  MatrixF32 y;
  if (opts.use_lut && layer.replaced()) {
    const LutLayer& lut = *layer.lut;
    if (opts.fast) {
      const InferPath path = opts.path.value_or(lut.qat && lut.quantized ? InferPath::Integer : InferPath::Float);
      y = lut_layer_infer(rows, lut, opts.plan, path, opts.encoder);
    } else {
      const Encoding enc = opts.encoder == EncoderKind::Hash
                               ? encode_hash(rows, lut.hash_trees, lut.books.v)
                               : encode_hard(rows, lut.books);
      y = lut_matmul_ref(enc, lut.forward_table());
    }
  } else {
    const MatrixF32& w = layer.linear_weight();
    if (w.size() == 0) throw ConfigError("layer has no dense weight to run");
    if (rows.cols() != w.rows()) throw ShapeError("linear input width mismatch");
    y.noalias() = rows * w;
  }
  y.rowwise() += layer.bias;
  return y;
}

namespace {

MatrixF32 layer_forward(const Layer& layer, const MatrixF32& x, const InferenceOptions& opts) {
  if (layer.kind == LayerKind::Relu) return x.cwiseMax(0.0f);
  return from_rows(layer, linear_apply(layer, to_rows(layer, x), opts), x.rows());
}

void check_input(const ModelSpec& model, const MatrixF32& x) {
  if (x.cols() != model.input_features) {
    throw ShapeError("model expects " + std::to_string(model.input_features) + " features, input has " +
                     std::to_string(x.cols()));
  }
}

}  // namespace

MatrixF32 forward(const ModelSpec& model, const MatrixF32& x, const InferenceOptions& opts) {
  check_input(model, x);
  MatrixF32 h = x;
  for (const Layer& l : model.layers) h = layer_forward(l, h, opts);
  return h;
}

std::vector<MatrixF32> forward_trace(const ModelSpec& model, const MatrixF32& x, const InferenceOptions& opts) {
  check_input(model, x);
  std::vector<MatrixF32> trace;
  trace.reserve(model.layers.size());
  const MatrixF32* h = &x;
  for (const Layer& l : model.layers) {
    trace.push_back(layer_forward(l, *h, opts));
    h = &trace.back();
  }
  return trace;
}

std::vector<MatrixF32> linear_inputs(const ModelSpec& model, const MatrixF32& x, const InferenceOptions& opts) {
  check_input(model, x);
  std::vector<MatrixF32> inputs(model.layers.size());
  MatrixF32 h = x;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const Layer& l = model.layers[i];
    if (l.kind == LayerKind::Relu) {
      h = h.cwiseMax(0.0f);
      continue;
    }
    inputs[i] = to_rows(l, h);
    h = from_rows(l, linear_apply(l, inputs[i], opts), h.rows());
  }
  return inputs;
}

std::vector<std::int32_t> predict(const MatrixF32& logits) {
  std::vector<std::int32_t> out(static_cast<std::size_t>(logits.rows()));
  for (Index n = 0; n < logits.rows(); ++n) {
    Index arg = 0;
    logits.row(n).maxCoeff(&arg);
    out[static_cast<std::size_t>(n)] = static_cast<std::int32_t>(arg);
  }
  return out;
}

double accuracy(const MatrixF32& logits, const std::vector<std::int32_t>& labels) {
  if (static_cast<std::size_t>(logits.rows()) != labels.size()) throw ShapeError("accuracy: label count mismatch");
  if (labels.empty()) return 0.0;
  const auto pred = predict(logits);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += pred[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

double softmax_cross_entropy(const MatrixF32& logits, const std::vector<std::int32_t>& labels, MatrixF32* grad) {
  if (static_cast<std::size_t>(logits.rows()) != labels.size()) throw ShapeError("loss: label count mismatch");
  const Index n = logits.rows(), k = logits.cols();
  if (grad) grad->resize(n, k);
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    const std::int32_t y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k) throw DataError("loss: label out of range");
    const double top = logits.row(i).maxCoeff();
    double z = 0.0;
    for (Index j = 0; j < k; ++j) z += std::exp(static_cast<double>(logits(i, j)) - top);
    const double log_z = std::log(z) + top;
    total += log_z - logits(i, y);
    if (grad) {
      for (Index j = 0; j < k; ++j) {
        const double p = std::exp(static_cast<double>(logits(i, j)) - log_z);
        (*grad)(i, j) = static_cast<float>((p - (j == y ? 1.0 : 0.0)) / static_cast<double>(n));
      }
    }
  }
  return n ? total / static_cast<double>(n) : 0.0;
}

}  // namespace lutkit
