#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "lutkit/kernels.hpp"
#include "lutkit/rng.hpp"
#include "lutkit/soft_pq.hpp"

namespace lutkit {

enum class LayerKind : std::uint8_t { Dense, Conv, Relu };

/// Geometry of a 2-D convolution over flattened NCHW rows.
struct ConvShape {
  Index in_channels = 0, in_h = 0, in_w = 0, out_channels = 0;
  ConvWindow window;

  Index out_h() const { return window.out_h(in_h); }
  Index out_w() const { return window.out_w(in_w); }
  Index positions() const { return out_h() * out_w(); }
  Index patch() const { return in_channels * window.kernel_h * window.kernel_w; }
};

/// Dense and conv layers are both a linear map on rows: the batch itself for
/// dense, im2col patches for conv. Replacing one moves its weight into `lut`.
struct Layer {
  LayerKind kind = LayerKind::Relu;
  MatrixF32 weight;  // D x M
  RowVector<float> bias;
  ConvShape conv;
  std::optional<LutLayer> lut;

  bool is_linear() const { return kind != LayerKind::Relu; }
  bool replaced() const { return lut.has_value() && lut->replace_active; }
  const MatrixF32& linear_weight() const { return lut ? lut->weight : weight; }
  MatrixF32& linear_weight() { return lut ? lut->weight : weight; }
  Index rows_in() const;   // D
  Index rows_out() const;  // M
};

struct ModelSpec {
  std::vector<Layer> layers;
  Index input_features = 0;
  Index num_classes = 0;
  Index channels = 0, height = 0, width = 0;  // zero for vector inputs

  std::vector<std::size_t> linear_layers() const;
  std::size_t replaced_count() const;
  void validate() const;
};

/// He-normal weights, zero bias. Hidden widths may be empty (softmax regression).
ModelSpec make_mlp(Index inputs, const std::vector<Index>& hidden, Index classes, Rng& rng);

/// conv3x3(C->8) relu conv3x3/2(8->16) relu dense(->classes).
ModelSpec make_tiny_cnn(Index channels, Index height, Index width, Index classes, Rng& rng);

struct InferenceOptions {
  bool use_lut = true;  // false runs every linear layer on its dense weight
  bool fast = true;     // kernels vs the reference encode + lookup
  EncoderKind encoder = EncoderKind::Distance;
  std::optional<InferPath> path;  // default: Integer under QAT, else Float
  KernelPlan plan;
};

/// Layer input as the rows its linear map consumes.
MatrixF32 to_rows(const Layer& layer, const MatrixF32& x);
/// Inverse reshaping of the linear output back to per-sample rows.
MatrixF32 from_rows(const Layer& layer, const MatrixF32& y, Index batch);
/// Gradient reshaping: per-sample output gradient to row gradient.
MatrixF32 grad_to_rows(const Layer& layer, const MatrixF32& g);
/// Row gradient of the linear input back to a per-sample input gradient.
MatrixF32 grad_from_rows(const Layer& layer, const MatrixF32& d_rows, Index batch);

/// Linear map on rows plus bias, honoring replacement and the options.
MatrixF32 linear_apply(const Layer& layer, const MatrixF32& rows, const InferenceOptions& opts);

MatrixF32 forward(const ModelSpec& model, const MatrixF32& x, const InferenceOptions& opts = {});

/// Output of every layer, in order.
std::vector<MatrixF32> forward_trace(const ModelSpec& model, const MatrixF32& x, const InferenceOptions& opts = {});

/// Rows consumed by each linear layer's map (index-aligned with `layers`;
/// empty for ReLU), computed with the given options.
std::vector<MatrixF32> linear_inputs(const ModelSpec& model, const MatrixF32& x, const InferenceOptions& opts);

std::vector<std::int32_t> predict(const MatrixF32& logits);
double accuracy(const MatrixF32& logits, const std::vector<std::int32_t>& labels);

/// Mean softmax cross-entropy; `grad` (when non-null) receives d loss / d logits.
double softmax_cross_entropy(const MatrixF32& logits, const std::vector<std::int32_t>& labels, MatrixF32* grad);

}  // namespace lutkit
