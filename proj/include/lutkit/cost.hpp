#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lutkit/model.hpp"

namespace lutkit {

/// Analytical cost of one N x D by D x M product, dense and product-quantized.
/// Sizes are bytes; `table_bits` is 8 or 32.
struct CostReport {
  Index n = 0, d = 0, m = 0, k = 0, v = 0;
  int table_bits = 8;
  bool replaced = true;

  std::uint64_t flops_lut = 0;    // N*D*K + N*M*D/V
  std::uint64_t flops_dense = 0;  // N*D*M
  std::uint64_t size_lut_bytes = 0;    // D*M*K/V * table_bits/8
  std::uint64_t size_dense_bytes = 0;  // 4*D*M
  std::uint64_t centroid_bytes = 0;    // 4*D*K
  std::uint64_t hash_comparisons = 0;  // N*(D/V)*L when hash trees are used

  double flops_reduction = 0;
  double size_reduction = 0;
  double size_reduction_with_centroids = 0;
  double op_intensity = 0;  // 2/(1/K + 1/V)
};

CostReport cost(Index n, Index d, Index m, Index k, Index v, int table_bits = 8, int hash_levels = 0);

/// Per linear layer for a batch of `batch` samples, plus the summed total
/// (last entry, with `replaced` set if any layer was replaced). Conv layers
/// count im2col rows as N. Layers left dense contribute equal LUT and dense
/// figures.
struct ModelCost {
  std::vector<std::size_t> layer_index;
  std::vector<CostReport> layers;
  CostReport total;
};

ModelCost model_cost(const ModelSpec& model, Index batch, int table_bits = 8);

}  // namespace lutkit
