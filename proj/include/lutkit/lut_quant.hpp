#pragma once

#include <cstdint>

#include "lutkit/pq.hpp"

namespace lutkit {

/// Symmetric INT8 lookup table: value = scale * entry, zero point fixed at 0.
/// Entries stay in [-127, 127]; -128 is never produced so that sums of up
/// to 258 entries fit an int16 partial.
struct LookupTableI8 {
  Index num_codebooks = 0;
  Index k = 0;
  Index m = 0;
  Matrix<std::int8_t> entries;  // (C*K) x M, same row layout as LookupTable
  float scale = 1.0f;

  const std::int8_t* row(Index c, Index j) const { return entries.data() + (c * k + j) * m; }
};

inline constexpr int kInt8TableMax = 127;

/// scale = max|entry| / 127; q = round-half-even(entry / scale) clamped to
/// [-127, 127]. An all-zero table gets scale 1.
LookupTableI8 quantize_table(const LookupTableF32& table);

LookupTableF32 dequantize(const LookupTableI8& table);

/// Tables used by a layer under quantization-aware training: the forward
/// pass reads the dequantized INT8 table, the backward pass differentiates
/// through the real-valued one.
struct QatTables {
  LookupTableF32 forward;
  const LookupTableF32* backward = nullptr;
};

QatTables qat_hook(const LookupTableF32& real_table);

}  // namespace lutkit
