#include <gtest/gtest.h>

#include "lutkit/cost.hpp"
#include "lutkit/train.hpp"
#include "oracles.hpp"

using namespace lutkit;

TEST(Cost, SmallExample) {
  const CostReport r = cost(100, 64, 128, 16, 8);
  EXPECT_EQ(r.flops_lut, 204800u);
  EXPECT_EQ(r.flops_dense, 819200u);
  EXPECT_DOUBLE_EQ(r.flops_reduction, 4.0);
}

TEST(Cost, LargeLinearLayer) {
  const CostReport r = cost(1, 768, 768, 16, 32);
  EXPECT_DOUBLE_EQ(r.flops_reduction, 19.2);
  EXPECT_EQ(r.size_lut_bytes, 294912u);
  EXPECT_EQ(r.size_dense_bytes, 2359296u);
  EXPECT_EQ(r.centroid_bytes, 49152u);
  EXPECT_NEAR(r.size_reduction_with_centroids, 2359296.0 / (294912.0 + 49152.0), 1e-12);
  EXPECT_NEAR(r.size_reduction_with_centroids, 6.857, 1e-3);
  EXPECT_DOUBLE_EQ(r.size_reduction, 8.0);
  EXPECT_NEAR(r.op_intensity, 64.0 / 3.0, 1e-12);

  const CostReport f32 = cost(1, 768, 768, 16, 32, 32);
  EXPECT_EQ(f32.size_lut_bytes, 4u * 294912u);
}

TEST(Cost, FormulaLimits) {
  const CostReport r = cost(5, 12, 12, 12, 1);
  EXPECT_EQ(r.flops_lut, 2u * 5 * 12 * 12);
  EXPECT_DOUBLE_EQ(cost(3, 16, 8, 16, 16).op_intensity, 16.0);
  EXPECT_DOUBLE_EQ(cost(3, 16, 8, 1, 1).op_intensity, 1.0);
  EXPECT_EQ(cost(10, 64, 32, 16, 4, 8, 12).hash_comparisons, 10u * 16 * 12);
  EXPECT_THROW(cost(1, 10, 4, 16, 3), ConfigError);
  EXPECT_THROW(cost(1, 16, 4, 16, 4, 16), ConfigError);
}

TEST(Cost, ReductionIsTheClosedForm) {
  Rng rng(51);
  for (int trial = 0; trial < 100; ++trial) {
    const Index v = 1 + static_cast<Index>(rng.index(32)), d = v * (1 + static_cast<Index>(rng.index(64)));
    const Index m = 1 + static_cast<Index>(rng.index(2048)), k = 1 + static_cast<Index>(rng.index(256));
    const Index n = 1 + static_cast<Index>(rng.index(1000));
    const CostReport r = cost(n, d, m, k, v);
    const double closed = static_cast<double>(m) / (static_cast<double>(k) + static_cast<double>(m) / v);
    ASSERT_NEAR(r.flops_reduction, closed, 1e-12 * closed);
    ASSERT_EQ(r.flops_lut, static_cast<std::uint64_t>(n * d * k + n * m * d / v));
    ASSERT_EQ(r.size_lut_bytes, static_cast<std::uint64_t>(d * m * k / v));
  }
}

TEST(Cost, MatchesTheKernelCounters) {
  Rng rng(52);
  for (int trial = 0; trial < 100; ++trial) {
    const Index v = 1 + static_cast<Index>(rng.index(8)), c = 1 + static_cast<Index>(rng.index(8));
    const Index k = 1 + static_cast<Index>(rng.index(16)), n = 1 + static_cast<Index>(rng.index(16));
    const Index m = 1 + static_cast<Index>(rng.index(16));
    CodebooksF32 b(c, k, v);
    b.centroids = oracle::random_matrix(c * k, v, rng);
    const FlopCounts counted = count_reference_pq_amm(oracle::random_matrix(n, c * v, rng),
                                                      oracle::random_matrix(c * v, m, rng), b);
    const CostReport r = cost(n, c * v, m, k, v);
    ASSERT_EQ(r.flops_lut, counted.lut());
    ASSERT_EQ(r.flops_dense, counted.dense);
  }
}

TEST(ModelCost, DenseOnlyModel) {
  Rng rng(53);
  const ModelSpec mlp = make_mlp(20, {32, 16}, 4, rng);
  const ModelCost mc = model_cost(mlp, 8);
  EXPECT_EQ(mc.layers.size(), 3u);
  EXPECT_EQ(mc.total.flops_lut, mc.total.flops_dense);
  EXPECT_EQ(mc.total.size_lut_bytes, mc.total.size_dense_bytes);
  EXPECT_DOUBLE_EQ(mc.total.flops_reduction, 1.0);
  EXPECT_FALSE(mc.total.replaced);
}

TEST(ModelCost, TwoLayerExample) {
  Rng rng(54);
  ModelSpec mlp = make_mlp(784, {256}, 10, rng);
  ReplacementPolicy policy;
  policy.k = 16;
  policy.dense_v = 4;
  policy.replace_last_n = 1;
  policy.init_samples = 64;
  init_from_float(mlp, oracle::random_matrix(64, 784, rng), policy, rng);
  const Index batch = 3;
  const ModelCost mc = model_cost(mlp, batch);
  ASSERT_EQ(mc.layers.size(), 2u);

  const CostReport first = cost(batch, 784, 256, 16, 4), second = cost(batch, 256, 10, 16, 4);
  EXPECT_EQ(mc.layers[0].flops_lut, first.flops_dense);
  EXPECT_EQ(mc.layers[1].flops_lut, second.flops_lut);
  EXPECT_EQ(mc.total.flops_lut, first.flops_dense + second.flops_lut);
  EXPECT_EQ(mc.total.flops_dense, first.flops_dense + second.flops_dense);
  EXPECT_EQ(mc.total.size_lut_bytes, first.size_dense_bytes + second.size_lut_bytes);
  EXPECT_TRUE(mc.total.replaced);
}

TEST(ModelCost, SingleLayerEqualsCost) {
  Rng rng(55);
  ModelSpec m = make_mlp(64, {}, 32, rng);
  ReplacementPolicy policy;
  policy.replace_first = true;
  policy.dense_v = 8;
  policy.init_samples = 32;
  init_from_float(m, oracle::random_matrix(32, 64, rng), policy, rng);
  const ModelCost mc = model_cost(m, 7);
  const CostReport want = cost(7, 64, 32, 16, 8);
  EXPECT_EQ(mc.total.flops_lut, want.flops_lut);
  EXPECT_EQ(mc.total.size_lut_bytes, want.size_lut_bytes);
  EXPECT_EQ(mc.total.centroid_bytes, want.centroid_bytes);
}

TEST(ModelCost, ConvLayersCountPatchRows) {
  Rng rng(56);
  ModelSpec cnn = make_tiny_cnn(1, 8, 8, 3, rng);
  ReplacementPolicy policy;
  policy.k = 8;
  policy.init_samples = 16;
  policy.replace_last_n = 2;  // the strided conv and the classifier
  MatrixF32 x = oracle::random_matrix(16, 64, rng);
  init_from_float(cnn, x, policy, rng);
  const ModelCost mc = model_cost(cnn, 2);
  ASSERT_EQ(mc.layers.size(), 3u);
  // conv 3x3/2 on 8x8 with pad 1 -> 4x4 positions, patch 8*9=72, 16 outputs, V = 9.
  const CostReport want = cost(2 * 16, 72, 16, 8, 9);
  EXPECT_EQ(mc.layers[1].flops_lut, want.flops_lut);
  EXPECT_EQ(mc.layers[1].flops_dense, want.flops_dense);
}
