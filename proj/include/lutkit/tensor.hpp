#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lutkit/errors.hpp"

namespace lutkit {

using Index = Eigen::Index;

/// Row-major dense matrix; rows are the vectors being quantized.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using MatrixF32 = Matrix<float>;
using MatrixF64 = Matrix<double>;
using MatrixI32 = Matrix<std::int32_t>;

/// NCHW float tensor, densely packed.
struct Tensor4F32 {
  Index n = 0, channels = 0, height = 0, width = 0;
  std::vector<float> data;

  Tensor4F32() = default;
  Tensor4F32(Index n_, Index c_, Index h_, Index w_)
      : n(n_), channels(c_), height(h_), width(w_), data(static_cast<std::size_t>(n_ * c_ * h_ * w_), 0.0f) {}

  float& at(Index i, Index c, Index y, Index x) {
    return data[static_cast<std::size_t>(((i * channels + c) * height + y) * width + x)];
  }
  float at(Index i, Index c, Index y, Index x) const {
    return data[static_cast<std::size_t>(((i * channels + c) * height + y) * width + x)];
  }
  Index size() const { return n * channels * height * width; }
};

/// Geometry of a square-stride convolution window.
struct ConvWindow {
  Index kernel_h = 1, kernel_w = 1, stride = 1, pad = 0;

  Index out_h(Index in_h) const { return (in_h + 2 * pad - kernel_h) / stride + 1; }
  Index out_w(Index in_w) const { return (in_w + 2 * pad - kernel_w) / stride + 1; }
  void validate(Index in_h, Index in_w) const;
};

/// Unrolls receptive-field patches into rows. Output has n*H_out*W_out rows
/// (ordered image, then output row, then output column) and
/// channels*kernel_h*kernel_w columns ordered channel-major, then kernel row,
/// then kernel column. Padding contributes zeros.
MatrixF32 im2col(const Tensor4F32& input, Index kernel_h, Index kernel_w, Index stride, Index pad);

/// Same lowering for activations stored as one flattened NCHW image per row.
MatrixF32 im2col(const MatrixF32& images, Index channels, Index height, Index width, const ConvWindow& window);

/// Adjoint of im2col: scatters patch gradients back onto flattened NCHW rows.
MatrixF32 col2im(const MatrixF32& cols, Index batch, Index channels, Index height, Index width,
                 const ConvWindow& window);

/// Exact product with a fixed summation order: every output entry
/// accumulates a(i,k)*b(k,j) for k ascending, in Scalar precision.
template <typename Scalar>
Matrix<Scalar> matmul_ref(const Matrix<Scalar>& a, const Matrix<Scalar>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul_ref: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " times " +
                     std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  const Index n = a.rows(), d = a.cols(), m = b.cols();
  Matrix<Scalar> out = Matrix<Scalar>::Zero(n, m);
  for (Index i = 0; i < n; ++i) {
    Scalar* __restrict o = out.data() + i * m;
    const Scalar* ai = a.data() + i * d;
    for (Index k = 0; k < d; ++k) {
      const Scalar s = ai[k];
      const Scalar* __restrict bk = b.data() + k * m;
      for (Index j = 0; j < m; ++j) o[j] += s * bk[j];
    }
  }
  return out;
}

/// Column-block view of a matrix: block c covers columns [c*v, (c+1)*v).
/// No data is copied; the parent matrix must outlive the view.
template <typename Scalar>
class SubvectorView {
 public:
  SubvectorView(const Matrix<Scalar>& a, Index v) : a_(&a), v_(v) {
    if (v <= 0 || a.cols() % v != 0) {
      throw ConfigError("split_subvectors: " + std::to_string(a.cols()) + " columns not divisible by v=" +
                        std::to_string(v));
    }
  }

  Index count() const { return a_->cols() / v_; }
  Index length() const { return v_; }
  auto block(Index c) const { return a_->middleCols(c * v_, v_); }

 private:
  const Matrix<Scalar>* a_;
  Index v_;
};

template <typename Scalar>
SubvectorView<Scalar> split_subvectors(const Matrix<Scalar>& a, Index v) {
  return SubvectorView<Scalar>(a, v);
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

}  // namespace lutkit
