#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lutkit/train.hpp"

namespace lutkit {

/// Everything needed to reproduce one run, from data to evaluation.
struct ExperimentConfig {
  std::string task = "toy-spiral";  // toy-spiral | toy-gauss | idx | csv
  std::filesystem::path train_path, test_path;  // csv files, or idx image files (labels: *-labels-*)
  std::filesystem::path train_labels, test_labels;
  Index per_class = 1000;  // toy tasks; the test split gets a quarter of this
  Index classes = 3;
  Index gauss_dims = 16;
  double spiral_turns = 2.0, spiral_noise = 0.15, gauss_spread = 1.0;

  std::string model = "mlp";  // mlp | tinycnn
  std::vector<Index> hidden = {64, 64, 64};

  ReplacementPolicy policy;
  TrainConfig float_train;
  TrainConfig lut_train;
  int hash_levels = 0;  // 0 skips hash trees
  Index hash_samples = 4096;
  std::uint64_t seed = 42;

  ExperimentConfig();
  void validate() const;
};

struct TaskData {
  Dataset train, test;
};

TaskData load_task(const ExperimentConfig& cfg);

ModelSpec make_model(const ExperimentConfig& cfg, const Dataset& train, Rng& rng);

struct LayerReport {
  std::size_t layer = 0;
  double mse = 0;  // layer output vs the float twin on the same input batch
  double hash_agreement = -1;
};

struct EvalReport {
  double accuracy = 0;
  double output_mse = -1;  // logits vs the float twin
  std::vector<LayerReport> layers;  // replaced layers only
};

/// Accuracy and, with a float twin, per-layer MSE. Agreement is reported for
/// layers that carry hash trees.
EvalReport evaluate(const ModelSpec& model, const Dataset& data, const InferenceOptions& opts,
                    const ModelSpec* float_twin = nullptr);

struct ExperimentResult {
  ModelSpec float_model, lut_model;
  double float_accuracy = 0;
  EvalReport vanilla;  // right after k-means replacement, before fine-tuning
  EvalReport tuned;    // after soft-PQ training
  std::optional<EvalReport> hashed;
  std::vector<EpochMetrics> float_history, lut_history;
};

/// Float pretraining alone, seeded exactly as run_experiment does it.
ModelSpec pretrain_float(const ExperimentConfig& cfg, const TaskData& data,
                         std::vector<EpochMetrics>* history = nullptr);

/// Float pretraining, k-means replacement, soft-PQ fine-tuning, evaluation on
/// the test split. `pretrained` skips the first step.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const ModelSpec* pretrained = nullptr);

}  // namespace lutkit
