#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "lutkit/model.hpp"

namespace lutkit {

/// Binary model file, little-endian:
///
///   'L','U','T','N', u32 version (= 1)
///   u32 input_features, u32 num_classes, u32 channels, u32 height, u32 width
///   u32 layer count, then one record per layer, each starting with a u8 tag:
///
///   1 dense     u32 D, u32 M, f32 weight[D*M], f32 bias[M]
///   2 relu
///   3 conv      geometry, f32 weight[D*M], f32 bias[M]
///   4 lut       u32 D, u32 M, u32 K, u32 V, LUT body
///   5 lut-conv  geometry, u32 K, u32 V, LUT body
///
///   geometry  u32 in_channels, in_h, in_w, out_channels, kernel_h, kernel_w, stride, pad
///   LUT body  f32 log-temperature, u8 flags (bit 0: QAT), f32 centroids[C*K*V],
///             f32 bias[M], u8 table tag (1: f32[C*K*M] | 2: i8[C*K*M] + f32 scale),
///             u8 tree count (0 or C), then per tree u32 L, u32 dims[L],
///             f32 thresholds[2^L - 1], u8 leaves[2^L]
///
/// LUT records keep no dense weight; a loaded model is for inference.
inline constexpr std::uint32_t kContainerVersion = 1;

enum class TableStorage { Auto, F32, I8 };  // Auto: I8 under QAT, else F32

void save_model(std::ostream& out, const ModelSpec& model, TableStorage storage = TableStorage::Auto);
void save_model(const std::filesystem::path& path, const ModelSpec& model, TableStorage storage = TableStorage::Auto);
ModelSpec load_model(std::istream& in);
ModelSpec load_model(const std::filesystem::path& path);

/// Bytes of everything but table payloads, centroids, biases and dense
/// weights: the file header plus per-record tags, shapes and scalars.
std::uint64_t container_header_bytes(const ModelSpec& model, TableStorage storage = TableStorage::Auto);

}  // namespace lutkit
