#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "lutkit/tensor.hpp"

namespace lutkit {

/// "TNSR" tensor file, little-endian:
///
///   offset 0   4 bytes   magic 'T','N','S','R'
///   offset 4   u32       version (= 1)
///   offset 8   u32       rank
///   offset 12  u64[rank] dims, outermost first
///   then       f32[prod(dims)] payload, row-major
///
/// A rank-0 tensor holds a single scalar.
struct TensorFile {
  std::vector<std::uint64_t> dims;
  std::vector<float> data;
};

inline constexpr std::uint32_t kTensorFileVersion = 1;

void write_tensor(std::ostream& out, const TensorFile& t);
TensorFile read_tensor(std::istream& in);
void write_tensor(const std::filesystem::path& path, const TensorFile& t);
TensorFile read_tensor(const std::filesystem::path& path);

TensorFile to_tensor_file(const MatrixF32& m);
MatrixF32 to_matrix(const TensorFile& t);
TensorFile to_tensor_file(const Tensor4F32& t);
Tensor4F32 to_tensor4(const TensorFile& t);

/// Little-endian primitive encoding shared by the binary containers.
namespace le {
void put_u8(std::ostream& out, std::uint8_t v);
void put_u32(std::ostream& out, std::uint32_t v);
void put_u64(std::ostream& out, std::uint64_t v);
void put_f32(std::ostream& out, float v);
void put_f32s(std::ostream& out, std::span<const float> v);
std::uint8_t get_u8(std::istream& in);
std::uint32_t get_u32(std::istream& in);
std::uint64_t get_u64(std::istream& in);
float get_f32(std::istream& in);
void get_f32s(std::istream& in, std::span<float> v);
void get_bytes(std::istream& in, std::span<char> v);
}  // namespace le

/// Labeled feature rows.
struct LabeledData {
  MatrixF32 features;
  std::vector<std::int32_t> labels;
};

/// CSV with a header row; every column but the last is a float feature and
/// the last column is an integer class label.
LabeledData read_csv_dataset(const std::filesystem::path& path);

/// IDX (big-endian, as used by MNIST-style archives). Images are returned one
/// per row scaled to [0, 1]; `height`/`width` receive the image size.
MatrixF32 read_idx_images(const std::filesystem::path& path, Index* height, Index* width);
std::vector<std::int32_t> read_idx_labels(const std::filesystem::path& path);
void write_idx_images(const std::filesystem::path& path, const std::vector<std::uint8_t>& pixels, std::uint32_t count,
                      std::uint32_t height, std::uint32_t width);
void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels);

}  // namespace lutkit
