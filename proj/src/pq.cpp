#include "lutkit/pq.hpp"

#include <cmath>
#include <limits>

namespace lutkit {

namespace {

double sqdist(const float* a, const float* b, Index v) {
  double s = 0.0;
  for (Index j = 0; j < v; ++j) {
    const double d = static_cast<double>(a[j]) - static_cast<double>(b[j]);
    s += d * d;
  }
  return s;
}

// Assigns every sample to its nearest centroid (lowest index on ties) and
// returns the objective. `dist` receives each sample's squared distance.
double assign(const MatrixF32& samples, const MatrixF32& centroids, std::vector<Index>& labels,
              std::vector<double>& dist) {
  const Index n = samples.rows(), v = samples.cols(), k = centroids.rows();
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    const float* x = samples.data() + i * v;
    double best = std::numeric_limits<double>::infinity();
    Index arg = 0;
    for (Index j = 0; j < k; ++j) {
      const double d = sqdist(x, centroids.data() + j * v, v);
      if (d < best) {
        best = d;
        arg = j;
      }
    }
    labels[static_cast<std::size_t>(i)] = arg;
    dist[static_cast<std::size_t>(i)] = best;
    total += best;
  }
  return total;
}

MatrixF32 seed_plus_plus(const MatrixF32& samples, Index k, Rng& rng) {
  const Index n = samples.rows(), v = samples.cols();
  MatrixF32 centroids(k, v);
  std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  Index pick = static_cast<Index>(rng.index(static_cast<std::uint64_t>(n)));
  for (Index j = 0; j < k; ++j) {
    centroids.row(j) = samples.row(pick);
    double total = 0.0;
    for (Index i = 0; i < n; ++i) {
      auto& d = d2[static_cast<std::size_t>(i)];
      d = std::min(d, sqdist(samples.data() + i * v, centroids.data() + j * v, v));
      total += d;
    }
    if (j + 1 == k) break;
    if (total <= 0.0) {
      pick = static_cast<Index>(rng.index(static_cast<std::uint64_t>(n)));
      continue;
    }
    const double r = rng.uniform() * total;
    double cum = 0.0;
    pick = -1;
    for (Index i = 0; i < n; ++i) {
      const double d = d2[static_cast<std::size_t>(i)];
      if (d <= 0.0) continue;
      cum += d;
      if (cum > r) {
        pick = i;
        break;
      }
    }
    if (pick < 0) {
      // r landed on the rounding slack at the top of the cumulative sum.
      for (Index i = n - 1; i >= 0; --i) {
        if (d2[static_cast<std::size_t>(i)] > 0.0) {
          pick = i;
          break;
        }
      }
    }
  }
  return centroids;
}

}  // namespace

double kmeans_objective(const MatrixF32& samples, const MatrixF32& centroids) {
  std::vector<Index> labels(static_cast<std::size_t>(samples.rows()));
  std::vector<double> dist(labels.size());
  return assign(samples, centroids, labels, dist);
}

KMeansResult kmeans_fit(const MatrixF32& samples, Index k, int max_iters, Rng& rng) {
  if (samples.rows() == 0) throw DataError("kmeans_fit: no samples");
  if (k < 1) throw ConfigError("kmeans_fit: k must be >= 1");
  if (!samples.allFinite()) throw DataError("kmeans_fit: samples contain NaN or infinity");
  const Index n = samples.rows(), v = samples.cols();

  KMeansResult result;
  result.centroids = seed_plus_plus(samples, k, rng);
  std::vector<Index> labels(static_cast<std::size_t>(n)), next(labels.size());
  std::vector<double> dist(labels.size());
  result.objective.push_back(assign(samples, result.centroids, labels, dist));

  std::vector<double> sums(static_cast<std::size_t>(k * v));
  std::vector<Index> counts(static_cast<std::size_t>(k));
  for (int it = 0; it < max_iters; ++it) {
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (Index i = 0; i < n; ++i) {
      const Index j = labels[static_cast<std::size_t>(i)];
      ++counts[static_cast<std::size_t>(j)];
      for (Index d = 0; d < v; ++d) sums[static_cast<std::size_t>(j * v + d)] += samples(i, d);
    }
    bool reseeded = false;
    for (Index j = 0; j < k; ++j) {
      const auto cnt = counts[static_cast<std::size_t>(j)];
      if (cnt == 0) continue;
      for (Index d = 0; d < v; ++d) {
        result.centroids(j, d) = static_cast<float>(sums[static_cast<std::size_t>(j * v + d)] / static_cast<double>(cnt));
      }
    }
    for (Index j = 0; j < k; ++j) {
      if (counts[static_cast<std::size_t>(j)] != 0) continue;
      // Distances to the updated centroids, then take the worst-served sample.
      Index far = 0;
      double far_d = -1.0;
      for (Index i = 0; i < n; ++i) {
        const double d = sqdist(samples.data() + i * v, result.centroids.data() + labels[static_cast<std::size_t>(i)] * v, v);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      if (far_d <= 0.0) continue;
      result.centroids.row(j) = samples.row(far);
      labels[static_cast<std::size_t>(far)] = j;
      reseeded = true;
    }
    result.objective.push_back(assign(samples, result.centroids, next, dist));
    result.iterations = it + 1;
    if (!reseeded && next == labels) {
      result.converged = true;
      break;
    }
    labels.swap(next);
  }
  return result;
}

CodebooksF32 fit_codebooks(const MatrixF32& a, const PqConfig& cfg, int max_iters, Rng& rng) {
  cfg.validate(a.cols());
  const auto view = split_subvectors(a, cfg.v);
  CodebooksF32 books(view.count(), cfg.k, cfg.v);
  for (Index c = 0; c < view.count(); ++c) {
    const MatrixF32 samples = view.block(c);
    books.book(c) = kmeans_fit(samples, cfg.k, max_iters, rng).centroids;
  }
  return books;
}

}  // namespace lutkit
