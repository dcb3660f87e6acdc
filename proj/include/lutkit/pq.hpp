#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "lutkit/rng.hpp"
#include "lutkit/tensor.hpp"

namespace lutkit {

/// Sub-vector length V and centroids per codebook K. A D-wide input is split
/// into C = D / V codebooks.
struct PqConfig {
  Index v = 2;
  Index k = 16;

  Index codebooks(Index d) const { return d / v; }

  void validate(Index d) const {
    if (v < 1) throw ConfigError("sub-vector length must be >= 1");
    if (k < 1 || k > 256) throw ConfigError("centroid count must be in [1, 256], got " + std::to_string(k));
    if (d % v != 0) {
      throw ConfigError("input width " + std::to_string(d) + " is not divisible by sub-vector length " +
                        std::to_string(v));
    }
  }
};

/// C codebooks of K centroids of length V, stored as a (C*K) x V matrix so
/// that row c*K + k is centroid k of codebook c.
template <typename Scalar>
struct Codebooks {
  Index num_codebooks = 0;
  Index k = 0;
  Index v = 0;
  Matrix<Scalar> centroids;

  Codebooks() = default;
  Codebooks(Index c, Index k_, Index v_) : num_codebooks(c), k(k_), v(v_), centroids(Matrix<Scalar>::Zero(c * k_, v_)) {}

  auto book(Index c) { return centroids.middleRows(c * k, k); }
  auto book(Index c) const { return centroids.middleRows(c * k, k); }
  const Scalar* centroid(Index c, Index j) const { return centroids.data() + (c * k + j) * v; }
  Index input_width() const { return num_codebooks * v; }

  template <typename Other>
  Codebooks<Other> cast() const {
    Codebooks<Other> out;
    out.num_codebooks = num_codebooks;
    out.k = k;
    out.v = v;
    out.centroids = centroids.template cast<Other>();
    return out;
  }
};

/// C x K x M table; row c*K + k holds centroid k of codebook c multiplied
/// into the matching V rows of the weight matrix.
template <typename Scalar>
struct LookupTable {
  Index num_codebooks = 0;
  Index k = 0;
  Index m = 0;
  Matrix<Scalar> entries;

  LookupTable() = default;
  LookupTable(Index c, Index k_, Index m_) : num_codebooks(c), k(k_), m(m_), entries(Matrix<Scalar>::Zero(c * k_, m_)) {}

  const Scalar* row(Index c, Index j) const { return entries.data() + (c * k + j) * m; }
  Scalar* row(Index c, Index j) { return entries.data() + (c * k + j) * m; }
};

using CodebooksF32 = Codebooks<float>;
using LookupTableF32 = LookupTable<float>;

/// N x C centroid indices, one byte each.
using Encoding = Matrix<std::uint8_t>;

/// Literal squared Euclidean distance, j ascending. This is the ground truth
/// every encoder is compared against.
template <typename Scalar>
inline Scalar squared_distance(const Scalar* a, const Scalar* p, Index v) {
  Scalar s = 0;
  for (Index j = 0; j < v; ++j) {
    const Scalar d = a[j] - p[j];
    s += d * d;
  }
  return s;
}

/// Nearest centroid of one sub-vector; ties go to the lowest index.
template <typename Scalar>
inline Index nearest_centroid(const Scalar* sub, const Codebooks<Scalar>& books, Index c) {
  Index best = 0;
  Scalar best_d = std::numeric_limits<Scalar>::infinity();
  for (Index j = 0; j < books.k; ++j) {
    const Scalar d = squared_distance(sub, books.centroid(c, j), books.v);
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return best;
}

struct KMeansResult {
  MatrixF32 centroids;             // k x V
  std::vector<double> objective;   // after seeding, then after every Lloyd iteration
  int iterations = 0;
  bool converged = false;          // assignment fixpoint reached
};

/// Lloyd's algorithm with k-means++ seeding. Empty clusters are re-seeded to
/// the sample farthest from its current centroid.
KMeansResult kmeans_fit(const MatrixF32& samples, Index k, int max_iters, Rng& rng);

/// Sum over samples of the squared distance to the nearest centroid.
double kmeans_objective(const MatrixF32& samples, const MatrixF32& centroids);

/// One k-means per codebook over the column blocks of `a`.
CodebooksF32 fit_codebooks(const MatrixF32& a, const PqConfig& cfg, int max_iters, Rng& rng);

template <typename Scalar>
void check_codebooks(const Matrix<Scalar>& a, const Codebooks<Scalar>& books, const char* who) {
  if (a.cols() != books.input_width()) {
    throw ShapeError(std::string(who) + ": input has " + std::to_string(a.cols()) + " columns, codebooks expect " +
                     std::to_string(books.input_width()));
  }
}

template <typename Scalar>
Encoding encode_hard(const Matrix<Scalar>& a, const Codebooks<Scalar>& books) {
  check_codebooks(a, books, "encode_hard");
  Encoding enc(a.rows(), books.num_codebooks);
  for (Index n = 0; n < a.rows(); ++n) {
    const Scalar* row = a.data() + n * a.cols();
    for (Index c = 0; c < books.num_codebooks; ++c) {
      enc(n, c) = static_cast<std::uint8_t>(nearest_centroid(row + c * books.v, books, c));
    }
  }
  return enc;
}

/// T[c][k][m] = sum_j P[c][k][j] * B[c*V + j][m], j ascending.
template <typename Scalar>
LookupTable<Scalar> build_table(const Matrix<Scalar>& b, const Codebooks<Scalar>& books) {
  if (b.rows() != books.input_width()) {
    throw ShapeError("build_table: weight has " + std::to_string(b.rows()) + " rows, codebooks expect " +
                     std::to_string(books.input_width()));
  }
  const Index m = b.cols();
  LookupTable<Scalar> table(books.num_codebooks, books.k, m);
  for (Index c = 0; c < books.num_codebooks; ++c) {
    for (Index k = 0; k < books.k; ++k) {
      const Scalar* p = books.centroid(c, k);
      Scalar* out = table.row(c, k);
      for (Index j = 0; j < books.v; ++j) {
        const Scalar pj = p[j];
        const Scalar* w = b.data() + (c * books.v + j) * m;
        for (Index col = 0; col < m; ++col) out[col] += pj * w[col];
      }
    }
  }
  return table;
}

inline void check_encoding(const Encoding& enc, Index num_codebooks, Index k) {
  if (enc.cols() != num_codebooks) throw ShapeError("encoding width does not match codebook count");
  for (Index i = 0; i < enc.size(); ++i) {
    if (enc.data()[i] >= k) {
      throw CorruptionError("encoding index " + std::to_string(enc.data()[i]) + " out of range for K=" +
                            std::to_string(k));
    }
  }
}

/// out[n][m] = sum_c T[c][enc[n][c]][m], c ascending.
template <typename Scalar>
Matrix<Scalar> lut_matmul_ref(const Encoding& enc, const LookupTable<Scalar>& table) {
  check_encoding(enc, table.num_codebooks, table.k);
  const Index m = table.m;
  Matrix<Scalar> out = Matrix<Scalar>::Zero(enc.rows(), m);
  for (Index n = 0; n < enc.rows(); ++n) {
    Scalar* o = out.data() + n * m;
    for (Index c = 0; c < table.num_codebooks; ++c) {
      const Scalar* t = table.row(c, enc(n, c));
      for (Index col = 0; col < m; ++col) o[col] += t[col];
    }
  }
  return out;
}

/// Reference product-quantized A*B.
template <typename Scalar>
Matrix<Scalar> pq_amm(const Matrix<Scalar>& a, const Matrix<Scalar>& b, const PqConfig& cfg,
                      const Codebooks<Scalar>& books) {
  cfg.validate(a.cols());
  if (books.v != cfg.v || books.k != cfg.k) throw ConfigError("pq_amm: codebooks do not match config");
  return lut_matmul_ref(encode_hard(a, books), build_table(b, books));
}

/// Mean of squared elementwise differences, accumulated in double.
template <typename A, typename B>
double mse(const Eigen::MatrixBase<A>& approx, const Eigen::MatrixBase<B>& exact) {
  if (approx.rows() != exact.rows() || approx.cols() != exact.cols()) throw ShapeError("mse: shape mismatch");
  if (approx.size() == 0) return 0.0;
  double sum = 0.0;
  for (Index i = 0; i < approx.rows(); ++i) {
    for (Index j = 0; j < approx.cols(); ++j) {
      const double d = static_cast<double>(approx(i, j)) - static_cast<double>(exact(i, j));
      sum += d * d;
    }
  }
  return sum / static_cast<double>(approx.size());
}

}  // namespace lutkit
