#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "lutkit/hash_tree.hpp"
#include "lutkit/lut_quant.hpp"
#include "lutkit/pq.hpp"

namespace lutkit {

/// Softmax temperature stored as its logarithm so that t = exp(theta) is
/// always positive.
struct Temperature {
  float theta = 0.0f;

  float value() const { return std::exp(theta); }
  static Temperature from_value(float t) {
    if (!(t > 0.0f) || !std::isfinite(t)) throw ConfigError("temperature must be positive and finite");
    return Temperature{std::log(t)};
  }
};

/// N x (C*K) literal squared distances; column c*K + k is the distance of
/// sub-vector c to centroid k of codebook c.
template <typename Scalar>
Matrix<Scalar> pairwise_distances(const Matrix<Scalar>& a, const Codebooks<Scalar>& books) {
  check_codebooks(a, books, "pairwise_distances");
  const Index ck = books.num_codebooks * books.k;
  Matrix<Scalar> d(a.rows(), ck);
  for (Index n = 0; n < a.rows(); ++n) {
    const Scalar* row = a.data() + n * a.cols();
    for (Index c = 0; c < books.num_codebooks; ++c) {
      for (Index k = 0; k < books.k; ++k) {
        d(n, c * books.k + k) = squared_distance(row + c * books.v, books.centroid(c, k), books.v);
      }
    }
  }
  return d;
}

/// Row-wise softmax(-d / t) over each group of K columns, with the group
/// maximum subtracted before exponentiation.
template <typename Scalar>
Matrix<Scalar> softmax_encoding(const Matrix<Scalar>& distances, Index k, Scalar t) {
  if (!(t > Scalar(0)) || !std::isfinite(static_cast<double>(t))) throw ConfigError("encode_soft: temperature must be > 0");
  if (!distances.allFinite()) throw DataError("encode_soft: non-finite distances");
  if (k <= 0 || distances.cols() % k != 0) throw ShapeError("encode_soft: distance width not a multiple of K");
  Matrix<Scalar> soft(distances.rows(), distances.cols());
  for (Index n = 0; n < distances.rows(); ++n) {
    for (Index c0 = 0; c0 < distances.cols(); c0 += k) {
      Scalar top = -std::numeric_limits<Scalar>::infinity();
      for (Index j = 0; j < k; ++j) top = std::max(top, -distances(n, c0 + j) / t);
      Scalar z = 0;
      for (Index j = 0; j < k; ++j) {
        const Scalar e = std::exp(-distances(n, c0 + j) / t - top);
        soft(n, c0 + j) = e;
        z += e;
      }
      for (Index j = 0; j < k; ++j) soft(n, c0 + j) /= z;
    }
  }
  return soft;
}

/// Probability encoding: every K-wide group of a row sums to one.
template <typename Scalar>
Matrix<Scalar> encode_soft(const Matrix<Scalar>& a, const Codebooks<Scalar>& books, Scalar t) {
  return softmax_encoding(pairwise_distances(a, books), books.k, t);
}

/// out[n][m] = sum_c sum_k soft[n][c*K + k] * T[c][k][m].
template <typename Scalar>
Matrix<Scalar> soft_aggregate(const Matrix<Scalar>& soft, const LookupTable<Scalar>& table) {
  if (soft.cols() != table.num_codebooks * table.k) throw ShapeError("soft_aggregate: encoding width mismatch");
  Matrix<Scalar> out = Matrix<Scalar>::Zero(soft.rows(), table.m);
  for (Index c = 0; c < table.num_codebooks; ++c) {
    out.noalias() += soft.middleCols(c * table.k, table.k) * table.entries.middleRows(c * table.k, table.k);
  }
  return out;
}

/// One product-quantized linear map: codebooks, the dense weight they were
/// built against, and the derived lookup tables.
struct LutLayer {
  PqConfig cfg;
  CodebooksF32 books;
  MatrixF32 weight;                      // D x M; empty when loaded for inference only
  LookupTableF32 table;                  // build_table(weight, books)
  std::optional<LookupTableI8> quantized;
  Temperature temp;
  bool qat = false;                      // forward through the INT8 table
  bool replace_active = true;            // false falls back to the dense weight
  std::vector<HashTree> hash_trees;      // optional, one per codebook

  static LutLayer from_weight(MatrixF32 weight, CodebooksF32 books, const PqConfig& cfg);

  Index input_width() const { return books.input_width(); }
  Index output_width() const { return table.m; }
  bool has_weight() const { return weight.size() > 0; }

  /// Recomputes the float table from (weight, books) and its INT8 twin.
  void rebuild_tables();

  /// Table read by the forward pass: the dequantized twin under QAT.
  const LookupTableF32& forward_table() const { return qat ? qat_table_ : table; }

  /// Used by the model container, which stores tables without weights.
  void set_tables(LookupTableF32 real, std::optional<LookupTableI8> q);

 private:
  LookupTableF32 qat_table_;
};

/// Everything the backward pass needs from a forward call.
struct SteCache {
  MatrixF32 input;
  MatrixF64 distances;  // N x (C*K)
  MatrixF64 soft;       // N x (C*K)
  Encoding hard;
  double t = 1.0;
  Index num_codebooks = 0, k = 0, v = 0, m = 0;
};

struct SteForward {
  MatrixF32 output;
  SteCache cache;
};

/// Forward value is the hard path: lut_matmul_ref(encode_hard(a), table).
SteForward ste_forward(const MatrixF32& a, const LutLayer& layer);

struct SteGradients {
  MatrixF32 centroids;  // (C*K) x V
  MatrixF32 weight;     // D x M
  MatrixF32 input;      // N x D
  float theta = 0.0f;
};

/// Gradients of sum(grad_out .* soft_aggregate(encode_soft(a, P, t),
/// build_table(W, P))): the straight-through surrogate. Centroids receive
/// both the distance path and the table path. Accumulates in double.
SteGradients ste_backward(const MatrixF32& grad_out, const SteCache& cache, const LutLayer& layer);

/// How a layer's temperature evolves during training.
class TemperatureSchedule {
 public:
  enum class Mode { Learned, Fixed, Annealed };

  static TemperatureSchedule learned() { return TemperatureSchedule(Mode::Learned, 1.0f, 1.0f); }
  static TemperatureSchedule fixed(float t);
  static TemperatureSchedule annealed(float t0, float t1);

  /// "learned", "fixed:<t>" or "anneal:<t0>:<t1>".
  static TemperatureSchedule parse(const std::string& text);
  std::string to_string() const;

  Mode mode() const { return mode_; }
  bool learns() const { return mode_ == Mode::Learned; }

  /// Temperature imposed at the start of `epoch` (0-based) of `total`.
  /// Annealing is geometric: t0 * (t1/t0)^(epoch/total). Learned mode
  /// returns nullopt and leaves theta to the optimizer.
  std::optional<float> value_at(int epoch, int total) const;

 private:
  TemperatureSchedule(Mode m, float t0, float t1) : mode_(m), t0_(t0), t1_(t1) {}
  Mode mode_;
  float t0_, t1_;
};

}  // namespace lutkit
