#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lutkit/pq.hpp"

namespace lutkit {

/// Balanced binary tree that maps a sub-vector to a centroid index with L
/// threshold comparisons. All nodes on one level split on the same
/// dimension. Nodes are stored in heap order: node i has children 2i+1
/// (taken when value <= threshold) and 2i+2.
struct HashTree {
  int levels = 0;
  std::vector<std::uint32_t> dims;      // [levels]
  std::vector<float> thresholds;        // [2^levels - 1]
  std::vector<std::uint8_t> leaves;     // [2^levels]

  std::uint8_t lookup(const float* sub) const {
    std::size_t node = 0;
    for (int l = 0; l < levels; ++l) {
      node = 2 * node + (sub[dims[static_cast<std::size_t>(l)]] <= thresholds[node] ? 1 : 2);
    }
    return leaves[node - ((std::size_t{1} << levels) - 1)];
  }

  void validate(Index v, Index k) const;
};

inline constexpr int kDefaultHashLevels = 12;
inline constexpr int kMaxHashLevels = 20;

struct HashTreeOptions {
  int levels = kDefaultHashLevels;
  Index max_samples = 0;  // subsample (with the Rng) above this count; 0 keeps all
};

/// Supervised construction: samples are labelled with their exact nearest
/// centroid, then each level greedily picks the split dimension (and per-node
/// thresholds) minimising the summed Gini impurity of those labels. Leaves
/// take the majority label (lowest index on ties); empty leaves inherit the
/// nearest non-empty ancestor's majority.
HashTree build_hash_tree(const MatrixF32& samples, const MatrixF32& centroids, const HashTreeOptions& opts, Rng& rng);

/// One tree per codebook, trained on the column blocks of `a`.
std::vector<HashTree> build_hash_trees(const MatrixF32& a, const CodebooksF32& books, const HashTreeOptions& opts,
                                       Rng& rng);

Encoding encode_hash(const MatrixF32& a, std::span<const HashTree> trees, Index v);

/// Fraction of (row, codebook) cells where the hash encoder agrees with the
/// exact nearest-centroid encoder.
double hash_agreement(const MatrixF32& a, std::span<const HashTree> trees, const CodebooksF32& books);

}  // namespace lutkit
