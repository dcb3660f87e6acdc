#include "lutkit/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace lutkit {

void Dataset::validate() const {
  if (features.rows() != static_cast<Index>(labels.size())) throw DataError("dataset: feature/label count mismatch");
  if (features.rows() == 0) throw DataError("dataset is empty");
  if (!features.allFinite()) throw DataError("dataset contains non-finite features");
  for (auto l : labels) {
    if (l < 0 || l >= num_classes) throw DataError("dataset label " + std::to_string(l) + " out of range");
  }
  if (is_image() && channels * height * width != features.cols()) throw DataError("dataset image shape mismatch");
}

Dataset make_spiral(Index per_class, Index classes, double turns, double noise, Rng& rng) {
  if (per_class < 1 || classes < 2) throw ConfigError("spiral needs >= 1 sample per class and >= 2 classes");
  Dataset d;
  d.num_classes = classes;
  d.features.resize(per_class * classes, 2);
  d.labels.resize(static_cast<std::size_t>(per_class * classes));
  Index row = 0;
  for (Index c = 0; c < classes; ++c) {
    for (Index i = 0; i < per_class; ++i, ++row) {
      const double r = 0.05 + 0.95 * rng.uniform();
      const double angle = 2.0 * std::numbers::pi * (static_cast<double>(c) / static_cast<double>(classes) + turns * r) +
                           noise * rng.normal();
      d.features(row, 0) = static_cast<float>(r * std::cos(angle));
      d.features(row, 1) = static_cast<float>(r * std::sin(angle));
      d.labels[static_cast<std::size_t>(row)] = static_cast<std::int32_t>(c);
    }
  }
  return d;
}

Dataset make_gauss(Index per_class, Index classes, Index dims, double spread, std::uint64_t means_seed, Rng& rng) {
  if (per_class < 1 || classes < 2 || dims < 1) throw ConfigError("gauss needs samples, >= 2 classes and dims >= 1");
  Rng mean_rng(means_seed);
  MatrixF32 means(classes, dims);
  for (Index i = 0; i < means.size(); ++i) means.data()[i] = static_cast<float>(spread * mean_rng.normal());
  Dataset d;
  d.num_classes = classes;
  d.features.resize(per_class * classes, dims);
  d.labels.resize(static_cast<std::size_t>(per_class * classes));
  Index row = 0;
  for (Index c = 0; c < classes; ++c) {
    for (Index i = 0; i < per_class; ++i, ++row) {
      for (Index j = 0; j < dims; ++j) d.features(row, j) = means(c, j) + static_cast<float>(rng.normal());
      d.labels[static_cast<std::size_t>(row)] = static_cast<std::int32_t>(c);
    }
  }
  return d;
}

Dataset make_gauss(Index per_class, Index classes, Index dims, double spread, Rng& rng) {
  return make_gauss(per_class, classes, dims, spread, rng.next_u64(), rng);
}

Dataset subset(const Dataset& data, const std::vector<Index>& rows) {
  Dataset out;
  out.num_classes = data.num_classes;
  out.channels = data.channels;
  out.height = data.height;
  out.width = data.width;
  out.features.resize(static_cast<Index>(rows.size()), data.features.cols());
  out.labels.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Index>(i)) = data.features.row(rows[i]);
    out.labels[i] = data.labels[static_cast<std::size_t>(rows[i])];
  }
  return out;
}

Dataset from_labeled(LabeledData data) {
  Dataset d;
  d.features = std::move(data.features);
  d.labels = std::move(data.labels);
  d.num_classes = d.labels.empty() ? 0 : *std::max_element(d.labels.begin(), d.labels.end()) + 1;
  return d;
}

}  // namespace lutkit
