#pragma once

#include <cstdint>
#include <vector>

#include "lutkit/io.hpp"
#include "lutkit/rng.hpp"
#include "lutkit/tensor.hpp"

namespace lutkit {

/// Labeled samples, one per row. Image data also records its CHW shape so
/// convolutional models can reinterpret the rows.
struct Dataset {
  MatrixF32 features;
  std::vector<std::int32_t> labels;
  Index num_classes = 0;
  Index channels = 0, height = 0, width = 0;

  Index size() const { return features.rows(); }
  bool is_image() const { return channels > 0; }
  void validate() const;
};

/// Interleaved 2-D spiral arms, one class per arm. `turns` is the number of
/// full revolutions along an arm; `noise` perturbs the angle (radians).
Dataset make_spiral(Index per_class, Index classes, double turns, double noise, Rng& rng);

/// Isotropic unit-variance Gaussian blobs whose means are drawn from
/// N(0, spread^2 I).
Dataset make_gauss(Index per_class, Index classes, Index dims, double spread, Rng& rng);

/// Same class means as make_gauss with the same `means_seed`, fresh samples.
Dataset make_gauss(Index per_class, Index classes, Index dims, double spread, std::uint64_t means_seed, Rng& rng);

Dataset subset(const Dataset& data, const std::vector<Index>& rows);
Dataset from_labeled(LabeledData data);

}  // namespace lutkit
