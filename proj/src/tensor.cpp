#include "lutkit/tensor.hpp"

#include <cmath>
#include <numbers>

#include "lutkit/rng.hpp"

namespace lutkit {

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double phi = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(phi);
  has_spare_ = true;
  return r * std::cos(phi);
}

void ConvWindow::validate(Index in_h, Index in_w) const {
  if (stride < 1) throw ConfigError("convolution stride must be >= 1");
  if (kernel_h < 1 || kernel_w < 1 || pad < 0) throw ConfigError("invalid convolution window");
  if (kernel_h > in_h + 2 * pad || kernel_w > in_w + 2 * pad) {
    throw ShapeError("kernel " + std::to_string(kernel_h) + "x" + std::to_string(kernel_w) +
                     " larger than padded input " + std::to_string(in_h + 2 * pad) + "x" +
                     std::to_string(in_w + 2 * pad));
  }
}

namespace {

// Shared lowering over a raw NCHW buffer.
MatrixF32 lower(const float* data, Index batch, Index channels, Index height, Index width, const ConvWindow& w) {
  w.validate(height, width);
  const Index oh = w.out_h(height), ow = w.out_w(width);
  const Index patch = channels * w.kernel_h * w.kernel_w;
  MatrixF32 cols(batch * oh * ow, patch);
  for (Index n = 0; n < batch; ++n) {
    const float* img = data + n * channels * height * width;
    for (Index y = 0; y < oh; ++y) {
      for (Index x = 0; x < ow; ++x) {
        float* row = cols.data() + ((n * oh + y) * ow + x) * patch;
        Index col = 0;
        for (Index c = 0; c < channels; ++c) {
          for (Index ky = 0; ky < w.kernel_h; ++ky) {
            const Index iy = y * w.stride + ky - w.pad;
            for (Index kx = 0; kx < w.kernel_w; ++kx, ++col) {
              const Index ix = x * w.stride + kx - w.pad;
              const bool inside = iy >= 0 && iy < height && ix >= 0 && ix < width;
              row[col] = inside ? img[(c * height + iy) * width + ix] : 0.0f;
            }
          }
        }
      }
    }
  }
  return cols;
}

}  // namespace

MatrixF32 im2col(const Tensor4F32& input, Index kernel_h, Index kernel_w, Index stride, Index pad) {
  if (static_cast<Index>(input.data.size()) != input.size()) throw ShapeError("im2col: tensor data size mismatch");
  return lower(input.data.data(), input.n, input.channels, input.height, input.width,
               ConvWindow{kernel_h, kernel_w, stride, pad});
}

MatrixF32 im2col(const MatrixF32& images, Index channels, Index height, Index width, const ConvWindow& window) {
  if (images.cols() != channels * height * width) throw ShapeError("im2col: row length does not match CHW");
  return lower(images.data(), images.rows(), channels, height, width, window);
}

MatrixF32 col2im(const MatrixF32& cols, Index batch, Index channels, Index height, Index width,
                 const ConvWindow& w) {
  w.validate(height, width);
  const Index oh = w.out_h(height), ow = w.out_w(width);
  const Index patch = channels * w.kernel_h * w.kernel_w;
  if (cols.rows() != batch * oh * ow || cols.cols() != patch) throw ShapeError("col2im: shape mismatch");
  MatrixF32 images = MatrixF32::Zero(batch, channels * height * width);
  for (Index n = 0; n < batch; ++n) {
    float* img = images.data() + n * channels * height * width;
    for (Index y = 0; y < oh; ++y) {
      for (Index x = 0; x < ow; ++x) {
        const float* row = cols.data() + ((n * oh + y) * ow + x) * patch;
        Index col = 0;
        for (Index c = 0; c < channels; ++c) {
          for (Index ky = 0; ky < w.kernel_h; ++ky) {
            const Index iy = y * w.stride + ky - w.pad;
            for (Index kx = 0; kx < w.kernel_w; ++kx, ++col) {
              const Index ix = x * w.stride + kx - w.pad;
              if (iy >= 0 && iy < height && ix >= 0 && ix < width) img[(c * height + iy) * width + ix] += row[col];
            }
          }
        }
      }
    }
  }
  return images;
}

}  // namespace lutkit
