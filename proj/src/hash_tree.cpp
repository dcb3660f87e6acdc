#include "lutkit/hash_tree.hpp"

#include <algorithm>
#include <numeric>

namespace lutkit {

void HashTree::validate(Index v, Index k) const {
  if (levels < 0 || levels > kMaxHashLevels) throw CorruptionError("hash tree depth out of range");
  const std::size_t leaf_count = std::size_t{1} << levels;
  if (dims.size() != static_cast<std::size_t>(levels) || thresholds.size() != leaf_count - 1 ||
      leaves.size() != leaf_count) {
    throw CorruptionError("hash tree arrays do not match its depth");
  }
  for (auto d : dims) {
    if (static_cast<Index>(d) >= v) throw CorruptionError("hash tree split dimension out of range");
  }
  for (auto l : leaves) {
    if (static_cast<Index>(l) >= k) throw CorruptionError("hash tree leaf index out of range");
  }
}

namespace {

struct Split {
  double impurity = 0.0;
  float threshold = 0.0f;
};

// Weighted Gini impurity n * (1 - sum p^2) = n - sum(count^2) / n.
double gini(double n, double sum_sq) { return n > 0.0 ? n - sum_sq / n : 0.0; }

Split best_split(const std::vector<std::pair<float, std::uint8_t>>& sorted, std::vector<std::int64_t>& left,
                 std::vector<std::int64_t>& right) {
  const std::size_t n = sorted.size();
  if (n == 0) return {};
  std::fill(left.begin(), left.end(), 0);
  std::fill(right.begin(), right.end(), 0);
  for (const auto& s : sorted) ++right[s.second];
  double sum_l = 0.0, sum_r = 0.0;
  for (auto c : right) sum_r += static_cast<double>(c) * static_cast<double>(c);

  // Default: everything goes left.
  Split best{gini(static_cast<double>(n), sum_r), sorted.back().first};
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const auto y = sorted[i].second;
    sum_l += 2.0 * static_cast<double>(left[y]) + 1.0;
    sum_r -= 2.0 * static_cast<double>(right[y]) - 1.0;
    ++left[y];
    --right[y];
    const float lo = sorted[i].first, hi = sorted[i + 1].first;
    if (!(lo < hi)) continue;
    const double nl = static_cast<double>(i + 1), nr = static_cast<double>(n - i - 1);
    const double imp = gini(nl, sum_l) + gini(nr, sum_r);
    if (imp < best.impurity) {
      float t = lo + (hi - lo) * 0.5f;
      if (!(t >= lo && t < hi)) t = lo;
      best = {imp, t};
    }
  }
  return best;
}

std::uint8_t majority(const std::vector<std::uint32_t>& members, const std::vector<std::uint8_t>& labels,
                      std::vector<std::int64_t>& counts) {
  std::fill(counts.begin(), counts.end(), 0);
  for (auto i : members) ++counts[labels[i]];
  std::size_t best = 0;
  for (std::size_t j = 1; j < counts.size(); ++j) {
    if (counts[j] > counts[best]) best = j;
  }
  return static_cast<std::uint8_t>(best);
}

}  // namespace

HashTree build_hash_tree(const MatrixF32& samples_in, const MatrixF32& centroids, const HashTreeOptions& opts,
                         Rng& rng) {
  if (samples_in.rows() == 0) throw DataError("build_hash_tree: no samples");
  if (opts.levels < 0 || opts.levels > kMaxHashLevels) {
    throw ConfigError("hash tree depth must be in [0, " + std::to_string(kMaxHashLevels) + "]");
  }
  if (centroids.cols() != samples_in.cols() || centroids.rows() < 1 || centroids.rows() > 256) {
    throw ShapeError("build_hash_tree: centroid shape does not match samples");
  }

  MatrixF32 subsampled;
  const MatrixF32* samples = &samples_in;
  if (opts.max_samples > 0 && samples_in.rows() > opts.max_samples) {
    std::vector<Index> idx(static_cast<std::size_t>(samples_in.rows()));
    std::iota(idx.begin(), idx.end(), Index{0});
    rng.shuffle(std::span<Index>(idx));
    idx.resize(static_cast<std::size_t>(opts.max_samples));
    std::sort(idx.begin(), idx.end());
    subsampled.resize(opts.max_samples, samples_in.cols());
    for (Index i = 0; i < opts.max_samples; ++i) subsampled.row(i) = samples_in.row(idx[static_cast<std::size_t>(i)]);
    samples = &subsampled;
  }

  const Index n = samples->rows(), v = samples->cols(), k = centroids.rows();
  CodebooksF32 book(1, k, v);
  book.centroids = centroids;
  std::vector<std::uint8_t> labels(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    labels[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(nearest_centroid(samples->data() + i * v, book, 0));
  }

  HashTree tree;
  tree.levels = opts.levels;
  const std::size_t leaf_count = std::size_t{1} << opts.levels;
  tree.thresholds.assign(leaf_count - 1, 0.0f);
  std::vector<std::uint8_t> node_majority(2 * leaf_count - 1, 0);
  std::vector<std::int64_t> counts(static_cast<std::size_t>(k)), left(counts.size()), right(counts.size());

  std::vector<std::vector<std::uint32_t>> members(1);
  members[0].resize(static_cast<std::size_t>(n));
  std::iota(members[0].begin(), members[0].end(), 0u);
  node_majority[0] = majority(members[0], labels, counts);

  std::vector<std::pair<float, std::uint8_t>> sorted;
  for (int level = 0; level < opts.levels; ++level) {
    const std::size_t first = (std::size_t{1} << level) - 1;
    double best_total = std::numeric_limits<double>::infinity();
    Index best_dim = 0;
    std::vector<float> best_thresholds(members.size());
    std::vector<float> thresholds(members.size());
    for (Index d = 0; d < v; ++d) {
      double total = 0.0;
      for (std::size_t node = 0; node < members.size(); ++node) {
        sorted.clear();
        for (auto i : members[node]) sorted.emplace_back((*samples)(i, d), labels[i]);
        std::sort(sorted.begin(), sorted.end());
        const Split s = best_split(sorted, left, right);
        total += s.impurity;
        thresholds[node] = s.threshold;
      }
      if (total < best_total) {
        best_total = total;
        best_dim = d;
        best_thresholds = thresholds;
      }
    }
    tree.dims.push_back(static_cast<std::uint32_t>(best_dim));
    std::vector<std::vector<std::uint32_t>> next(2 * members.size());
    for (std::size_t node = 0; node < members.size(); ++node) {
      tree.thresholds[first + node] = best_thresholds[node];
      for (auto i : members[node]) {
        const bool go_left = (*samples)(i, best_dim) <= best_thresholds[node];
        next[2 * node + (go_left ? 0 : 1)].push_back(i);
      }
    }
    const std::size_t child_first = 2 * first + 1;
    for (std::size_t child = 0; child < next.size(); ++child) {
      const std::size_t heap = child_first + child;
      node_majority[heap] = next[child].empty() ? node_majority[(heap - 1) / 2] : majority(next[child], labels, counts);
    }
    members = std::move(next);
  }
  tree.leaves.assign(node_majority.end() - static_cast<std::ptrdiff_t>(leaf_count), node_majority.end());
  return tree;
}

std::vector<HashTree> build_hash_trees(const MatrixF32& a, const CodebooksF32& books, const HashTreeOptions& opts,
                                       Rng& rng) {
  check_codebooks(a, books, "build_hash_trees");
  const auto view = split_subvectors(a, books.v);
  std::vector<HashTree> trees;
  trees.reserve(static_cast<std::size_t>(books.num_codebooks));
  for (Index c = 0; c < books.num_codebooks; ++c) {
    const MatrixF32 samples = view.block(c);
    const MatrixF32 centroids = books.book(c);
    trees.push_back(build_hash_tree(samples, centroids, opts, rng));
  }
  return trees;
}

Encoding encode_hash(const MatrixF32& a, std::span<const HashTree> trees, Index v) {
  const Index c_count = static_cast<Index>(trees.size());
  if (a.cols() != c_count * v) throw ShapeError("encode_hash: input width does not match trees");
  Encoding enc(a.rows(), c_count);
  for (Index n = 0; n < a.rows(); ++n) {
    const float* row = a.data() + n * a.cols();
    for (Index c = 0; c < c_count; ++c) enc(n, c) = trees[static_cast<std::size_t>(c)].lookup(row + c * v);
  }
  return enc;
}

double hash_agreement(const MatrixF32& a, std::span<const HashTree> trees, const CodebooksF32& books) {
  const Encoding hashed = encode_hash(a, trees, books.v);
  const Encoding exact = encode_hard(a, books);
  if (exact.size() == 0) return 1.0;
  return static_cast<double>((hashed.array() == exact.array()).count()) / static_cast<double>(exact.size());
}

}  // namespace lutkit
