#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "lutkit/dataset.hpp"
#include "lutkit/model.hpp"

namespace lutkit {

/// Which linear layers become product-quantized, and how they start.
struct ReplacementPolicy {
  Index k = 16;
  Index dense_v = 2;
  Index conv_v = 0;  // 0 uses the kernel area, one channel's window per sub-vector
  int replace_last_n = 1;
  bool replace_first = false;
  Index init_samples = 1024;
  Index max_kmeans_rows = 32768;  // conv layers yield many rows per sample
  int kmeans_iters = 25;
  bool qat = false;
  float temperature = 1.0f;

  void validate() const;
};

/// Indices into model.layers, ascending. The first linear layer is skipped
/// unless replace_first is set.
std::vector<std::size_t> select_replaced(const ModelSpec& model, const ReplacementPolicy& policy);

/// Replaces the selected layers, seeding each codebook with k-means over the
/// layer inputs the float model produces on `init_samples` rows of `data`.
void init_from_float(ModelSpec& model, const MatrixF32& data, const ReplacementPolicy& policy, Rng& rng);

/// Builds per-codebook hash trees for every replaced layer from the inputs
/// the current model produces on `data`.
void build_model_hash_trees(ModelSpec& model, const MatrixF32& data, const HashTreeOptions& opts, Rng& rng);

struct TrainConfig {
  float lr_weight = 1e-2f;  // dense weights, LUT weights and biases
  float lr_centroid = 1e-2f;
  float lr_temperature = 1e-1f;
  float momentum = 0.9f;
  int epochs = 10;
  Index batch_size = 64;
  std::uint64_t seed = 42;
  TemperatureSchedule temperature = TemperatureSchedule::learned();
  Index metrics_samples = 512;

  void validate() const;
};

struct EpochMetrics {
  int epoch = 0;
  double loss = 0;      // mean over the epoch's batches
  double accuracy = 0;  // on the training batches as seen
  double mse_vs_float = -1;  // -1 without a reference model
  std::vector<float> temperatures;  // one per replaced layer
};

/// Minibatch SGD with momentum on the straight-through surrogate. Tables are
/// rebuilt after every step. Throws DivergenceError on a non-finite loss.
std::vector<EpochMetrics> train(ModelSpec& model, const Dataset& data, const TrainConfig& cfg,
                                const ModelSpec* float_reference = nullptr,
                                const std::function<void(const EpochMetrics&)>& on_epoch = {});

}  // namespace lutkit
