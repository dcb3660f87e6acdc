#include <gtest/gtest.h>

#include "lutkit/hash_tree.hpp"
#include "lutkit/kernels.hpp"
#include "oracles.hpp"

using namespace lutkit;

namespace {

HashTreeOptions depth(int levels) {
  HashTreeOptions o;
  o.levels = levels;
  return o;
}

}  // namespace

TEST(HashTree, OneDimensionalSplit) {
  MatrixF32 centroids(2, 1);
  centroids << 0, 10;
  MatrixF32 s(101, 1);
  for (Index i = 0; i <= 100; ++i) s(i, 0) = 0.1f * static_cast<float>(i);
  Rng rng(1);
  const HashTree t = build_hash_tree(s, centroids, depth(1), rng);
  ASSERT_EQ(t.levels, 1);
  EXPECT_EQ(t.dims[0], 0u);
  EXPECT_NEAR(t.thresholds[0], 5.0f, 0.1f);
  EXPECT_EQ(t.leaves, (std::vector<std::uint8_t>{0, 1}));
}

TEST(HashTree, ZeroLevelsIsTheMajority) {
  MatrixF32 centroids(4, 2);
  centroids << 0, 0, 10, 0, 0, 10, 10, 10;
  MatrixF32 s(10, 2);
  for (Index i = 0; i < 10; ++i) s.row(i) << (i < 6 ? 9.0f : 1.0f), 1.0f;  // six near centroid 1
  Rng rng(2);
  const HashTree t = build_hash_tree(s, centroids, depth(0), rng);
  EXPECT_EQ(t.leaves, (std::vector<std::uint8_t>{1}));
  for (Index i = 0; i < 10; ++i) EXPECT_EQ(t.lookup(s.data() + 2 * i), 1);
}

TEST(HashTree, BalancedLabelsAtDepthZero) {
  Rng rng(3);
  MatrixF32 centroids(4, 2);
  centroids << -5, -5, -5, 5, 5, -5, 5, 5;
  MatrixF32 s(400, 2);
  for (Index i = 0; i < 400; ++i) s.row(i) = centroids.row(i % 4) + oracle::random_matrix(1, 2, rng, 0.1);
  CodebooksF32 books(1, 4, 2);
  books.centroids = centroids;
  const std::vector<HashTree> trees{build_hash_tree(s, centroids, depth(0), rng)};
  EXPECT_NEAR(hash_agreement(s, trees, books), 0.25, 1e-12);
  const std::vector<HashTree> deep{build_hash_tree(s, centroids, depth(2), rng)};
  EXPECT_EQ(hash_agreement(s, deep, books), 1.0);
}

TEST(HashTree, AxisSeparableGeneralizes) {
  Rng rng(4);
  MatrixF32 centroids(2, 3);
  centroids << 0, 0, 0, 0, 8, 0;
  auto sample = [&](Index n) {
    MatrixF32 s(n, 3);
    for (Index i = 0; i < n; ++i) {
      s.row(i) = oracle::random_matrix(1, 3, rng, 0.5);
      if (i % 2) s(i, 1) += 8;
    }
    return s;
  };
  const MatrixF32 train = sample(200), held = sample(200);
  CodebooksF32 books(1, 2, 3);
  books.centroids = centroids;
  const std::vector<HashTree> trees{build_hash_tree(train, centroids, depth(1), rng)};
  EXPECT_EQ(trees[0].dims[0], 1u);
  EXPECT_EQ(hash_agreement(train, trees, books), 1.0);
  EXPECT_EQ(hash_agreement(held, trees, books), 1.0);
}

TEST(HashTree, DeepTreeMemorizesTinySets) {
  Rng rng(5);
  const MatrixF32 s = oracle::random_matrix(16, 2, rng);
  CodebooksF32 books(1, 8, 2);
  books.centroids = oracle::random_matrix(8, 2, rng);
  const std::vector<HashTree> trees{build_hash_tree(s, books.centroids, depth(12), rng)};
  EXPECT_EQ(hash_agreement(s, trees, books), 1.0);
  const Encoding ref = encode_hard(s, books), got = encode_hash(s, trees, 2);
  EXPECT_EQ(got, ref);
}

TEST(HashTree, AgreementGrowsWithDepth) {
  int non_decreasing = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    const MatrixF32 s = oracle::random_matrix(2000, 4, rng);
    CodebooksF32 books(1, 16, 4);
    books.centroids = oracle::random_matrix(16, 4, rng);
    double prev = 0;
    bool ok = true;
    for (int l : {0, 2, 4, 6, 8}) {
      const std::vector<HashTree> t{build_hash_tree(s, books.centroids, depth(l), rng)};
      const double a = hash_agreement(s, t, books);
      ok = ok && a >= prev;
      prev = a;
    }
    non_decreasing += ok;
  }
  EXPECT_GE(non_decreasing, 3);
}

TEST(HashTree, TraversalUsesLessOrEqualForLeft) {
  HashTree t;
  t.levels = 1;
  t.dims = {0};
  t.thresholds = {1.5f};
  t.leaves = {3, 7};
  const float at = 1.5f, above = std::nextafter(1.5f, 2.0f);
  EXPECT_EQ(t.lookup(&at), 3);
  EXPECT_EQ(t.lookup(&above), 7);
  EXPECT_EQ(t.lookup(&at), t.lookup(&at));
}

TEST(HashTree, Validation) {
  Rng rng(6);
  MatrixF32 c(2, 1);
  c << 0, 1;
  EXPECT_THROW(build_hash_tree(MatrixF32(0, 1), c, depth(2), rng), DataError);
  EXPECT_THROW(build_hash_tree(MatrixF32::Zero(4, 1), c, depth(kMaxHashLevels + 1), rng), ConfigError);
  HashTree t;
  t.levels = 1;
  t.dims = {5};
  t.thresholds = {0};
  t.leaves = {0, 1};
  EXPECT_THROW(t.validate(2, 2), CorruptionError);
}

TEST(HashTree, SwappingEncodersOnlyChangesIndices) {
  Rng rng(7);
  const MatrixF32 a = oracle::random_matrix(64, 8, rng);
  CodebooksF32 books = fit_codebooks(a, PqConfig{2, 16}, 10, rng);
  LutLayer layer = LutLayer::from_weight(oracle::random_matrix(8, 6, rng), books, PqConfig{2, 16});
  layer.hash_trees = build_hash_trees(a, books, depth(4), rng);
  const KernelPlan plan;
  // The hash encoder's indices run through exactly the same lookup as the distance encoder's.
  const Encoding hashed = encode_hash(a, layer.hash_trees, 2);
  EXPECT_EQ(lut_layer_infer(a, layer, plan, InferPath::Float, EncoderKind::Hash),
            lut_gather_accumulate_f32(hashed, layer.table));
  EXPECT_EQ(lut_layer_infer(a, layer, plan, InferPath::Integer, EncoderKind::Hash),
            lut_gather_accumulate(hashed, *layer.quantized, plan));
}
