#pragma once

#include <cstdint>
#include <vector>

#include "lutkit/lut_quant.hpp"
#include "lutkit/pq.hpp"
#include "lutkit/soft_pq.hpp"

namespace lutkit {

/// Largest number of codebooks whose INT8 entries (|q| <= 127) can be summed
/// in an int16 partial without overflow: 258 * 127 = 32766.
inline constexpr Index kMaxAccumulationChunk = 258;
static_assert(kMaxAccumulationChunk * kInt8TableMax <= 32767, "int16 partial could overflow");
static_assert((kMaxAccumulationChunk + 1) * kInt8TableMax > 32767, "chunk bound is not tight");

/// Tiling of the two inference kernels.
struct KernelPlan {
  Index rows_per_tile = 64;        // N_b: rows streamed past one resident codebook
  Index centroids_per_tile = 8;    // K_b: lanes of the argmin reduction
  Index accumulation_chunk = 128;  // G: codebooks summed per int16 partial
  Index lane_width = 16;           // bytes per shuffle lookup (hint)

  void validate() const;
  Index centroid_lanes(Index k) const { return std::min(centroids_per_tile, k); }
};

/// Work counters filled in by the instrumented kernels.
struct KernelCounters {
  std::uint64_t distance_madds = 0;  // multiply-adds in distance evaluation
  std::uint64_t lookup_adds = 0;     // table entries accumulated
  std::uint64_t exact_fallbacks = 0; // sub-vectors re-ranked with literal distances
};

/// Codebooks repacked for centroid-stationary search: each codebook is
/// transposed to V x K so the inner loop runs across centroids, and squared
/// norms are precomputed.
class CentroidSearch {
 public:
  explicit CentroidSearch(const CodebooksF32& books);

  /// Indices identical to encode_hard (lowest index on ties). Distances are
  /// ranked as ||p||^2 - 2 a.p; a sub-vector whose runner-up lies within the
  /// rounding bound of the winner is re-ranked with literal distances.
  Encoding encode(const MatrixF32& a, const KernelPlan& plan, KernelCounters* counters = nullptr) const;

  const CodebooksF32& books() const { return books_; }

 private:
  CodebooksF32 books_;
  Index stride_ = 0;                 // padded K
  std::vector<float> transposed_;    // [C][V][stride_]
  std::vector<float> norms_;         // [C][stride_]
  std::vector<float> norm_max_;      // per codebook: max ||p||^2
  std::vector<float> l1_max_;        // per codebook: max ||p||_1
  std::vector<float> abs_max_;       // per codebook: max |p_j|
};

Encoding centroid_search_fast(const MatrixF32& a, const CodebooksF32& books, const KernelPlan& plan,
                              KernelCounters* counters = nullptr);

/// INT8 table in the layouts the lookup kernel consumes: the natural
/// (C*K) x M rows, plus for K = 16 a [M][C][16] layout where every 16-byte
/// group is one byte-shuffle table.
class PackedTableI8 {
 public:
  explicit PackedTableI8(const LookupTableI8& table);

  Index num_codebooks() const { return c_; }
  Index k() const { return k_; }
  Index m() const { return m_; }
  float scale() const { return scale_; }
  bool has_shuffle_layout() const { return !shuffle_.empty(); }

  const std::int8_t* row(Index c, Index j) const { return rows_.data() + (c * k_ + j) * m_; }
  const std::int8_t* shuffle_table(Index m, Index c) const { return shuffle_.data() + (m * c_ + c) * 16; }

 private:
  Index c_, k_, m_;
  float scale_;
  std::vector<std::int8_t> rows_;
  std::vector<std::int8_t> shuffle_;
};

/// out[n][m] = sum_c T[c][enc[n][c]][m] computed exactly: int16 partials over
/// at most G codebooks, widened into int32.
MatrixI32 lut_accumulate_i32(const Encoding& enc, const PackedTableI8& table, const KernelPlan& plan,
                             KernelCounters* counters = nullptr);

/// scale * lut_accumulate_i32.
MatrixF32 lut_gather_accumulate(const Encoding& enc, const LookupTableI8& table, const KernelPlan& plan);
MatrixF32 lut_gather_accumulate(const Encoding& enc, const PackedTableI8& table, const KernelPlan& plan);

/// Float lookup with f32 accumulation in the same order as lut_matmul_ref.
MatrixF32 lut_gather_accumulate_f32(const Encoding& enc, const LookupTableF32& table);

enum class InferPath { Float, Integer };
enum class EncoderKind { Distance, Hash };

/// Closest-centroid search followed by table lookup. The encoder only
/// changes which indices reach the lookup stage.
MatrixF32 lut_layer_infer(const MatrixF32& a, const LutLayer& layer, const KernelPlan& plan, InferPath path,
                          EncoderKind encoder = EncoderKind::Distance);

/// Analytical multiply-add counts of one product-quantized matmul next to
/// the dense one.
struct FlopCounts {
  std::uint64_t encode = 0;            // N*D*K
  std::uint64_t lookup_aggregate = 0;  // N*M*D/V
  std::uint64_t dense = 0;             // N*D*M

  std::uint64_t lut() const { return encode + lookup_aggregate; }
  double reduction() const { return static_cast<double>(dense) / static_cast<double>(lut()); }
};

FlopCounts flop_counter(Index n, Index d, Index m, const PqConfig& cfg);

/// Runs the reference PQ matmul while counting every multiply-add it
/// performs (distance evaluation and table aggregation; table construction
/// is offline and excluded). `out`, when non-null, receives the product.
FlopCounts count_reference_pq_amm(const MatrixF32& a, const MatrixF32& b, const CodebooksF32& books,
                                  MatrixF32* out = nullptr);

/// 2 / (1/K + 1/V): FLOP per byte of the distance computation when N is large.
double operation_intensity(Index k, Index v);

}  // namespace lutkit
