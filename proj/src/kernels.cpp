#include "lutkit/kernels.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <limits>

#if defined(__AVX2__)
#include <immintrin.h>
#endif

namespace lutkit {

void KernelPlan::validate() const {
  if (rows_per_tile < 1) throw ConfigError("rows_per_tile must be >= 1");
  if (centroids_per_tile < 1) throw ConfigError("centroids_per_tile must be >= 1");
  if (accumulation_chunk < 1 || accumulation_chunk > kMaxAccumulationChunk) {
    throw ConfigError("accumulation_chunk must be in [1, " + std::to_string(kMaxAccumulationChunk) + "]");
  }
  if (lane_width < 1) throw ConfigError("lane_width must be >= 1");
}

// ---------------------------------------------------------------------------
// Closest centroid search

CentroidSearch::CentroidSearch(const CodebooksF32& books) : books_(books) {
  const Index cc = books.num_codebooks, k = books.k, v = books.v;
  stride_ = (k + 15) / 16 * 16;
  transposed_.assign(static_cast<std::size_t>(cc * v * stride_), 0.0f);
  norms_.assign(static_cast<std::size_t>(cc * stride_), std::numeric_limits<float>::infinity());
  norm_max_.assign(static_cast<std::size_t>(cc), 0.0f);
  l1_max_.assign(norm_max_.size(), 0.0f);
  abs_max_.assign(norm_max_.size(), 0.0f);
  for (Index c = 0; c < cc; ++c) {
    const auto uc = static_cast<std::size_t>(c);
    for (Index j = 0; j < k; ++j) {
      const float* p = books.centroid(c, j);
      float n2 = 0.0f, l1 = 0.0f;
      for (Index d = 0; d < v; ++d) {
        transposed_[static_cast<std::size_t>((c * v + d) * stride_ + j)] = p[d];
        n2 += p[d] * p[d];
        l1 += std::fabs(p[d]);
        abs_max_[uc] = std::max(abs_max_[uc], std::fabs(p[d]));
      }
      norms_[static_cast<std::size_t>(c * stride_ + j)] = n2;
      norm_max_[uc] = std::max(norm_max_[uc], n2);
      l1_max_[uc] = std::max(l1_max_[uc], l1);
    }
  }
}

Encoding CentroidSearch::encode(const MatrixF32& a, const KernelPlan& plan, KernelCounters* counters) const {
  plan.validate();
  check_codebooks(a, books_, "centroid_search_fast");
  const Index n_rows = a.rows(), d_cols = a.cols();
  const Index cc = books_.num_codebooks, k = books_.k, v = books_.v;
  const Index lanes = plan.centroid_lanes(k);
  Encoding enc(n_rows, cc);

  std::vector<float> dist(static_cast<std::size_t>(stride_));
  std::vector<float> lane_min(static_cast<std::size_t>(lanes));
  std::vector<Index> lane_arg(static_cast<std::size_t>(lanes));
  std::uint64_t fallbacks = 0;

  // Bound on |ranking error| of the expanded form plus the literal form.
  const float unit = static_cast<float>(v + 4) * FLT_EPSILON * 4.0f;

  for (Index c = 0; c < cc; ++c) {
    // Centroid-stationary: this codebook's V x K block stays hot while all
    // rows stream past it.
    const float* pt = transposed_.data() + c * v * stride_;
    const float* norms = norms_.data() + c * stride_;
    const auto uc = static_cast<std::size_t>(c);
    for (Index n0 = 0; n0 < n_rows; n0 += plan.rows_per_tile) {
      const Index n1 = std::min(n_rows, n0 + plan.rows_per_tile);
      for (Index n = n0; n < n1; ++n) {
        const float* x = a.data() + n * d_cols + c * v;
        float* __restrict dd = dist.data();
        float amax = 0.0f;
        for (Index j = 0; j < k; ++j) dd[j] = norms[j];
        for (Index e = 0; e < v; ++e) {
          const float s = -2.0f * x[e];
          amax = std::max(amax, std::fabs(x[e]));
          const float* __restrict row = pt + e * stride_;
          for (Index j = 0; j < k; ++j) dd[j] += s * row[j];
        }

        // Intra-codebook parallel argmin: each lane scans every lanes-th
        // centroid, then lanes merge on (distance, index).
        for (Index l = 0; l < lanes; ++l) {
          lane_min[static_cast<std::size_t>(l)] = std::numeric_limits<float>::infinity();
          lane_arg[static_cast<std::size_t>(l)] = l;
        }
        for (Index j0 = 0; j0 < k; j0 += lanes) {
          const Index width = std::min(lanes, k - j0);
          for (Index l = 0; l < width; ++l) {
            const float dj = dd[j0 + l];
            if (dj < lane_min[static_cast<std::size_t>(l)]) {
              lane_min[static_cast<std::size_t>(l)] = dj;
              lane_arg[static_cast<std::size_t>(l)] = j0 + l;
            }
          }
        }
        Index best = lane_arg[0];
        float best_d = lane_min[0];
        for (Index l = 1; l < lanes; ++l) {
          const float dl = lane_min[static_cast<std::size_t>(l)];
          const Index al = lane_arg[static_cast<std::size_t>(l)];
          if (dl < best_d || (dl == best_d && al < best)) {
            best_d = dl;
            best = al;
          }
        }

        const float span = amax + abs_max_[uc];
        const float tol = unit * (norm_max_[uc] + 2.0f * amax * l1_max_[uc] + static_cast<float>(v) * span * span);
        bool ambiguous = !std::isfinite(best_d);
        for (Index j = 0; j < k && !ambiguous; ++j) {
          if (j != best && dd[j] <= best_d + tol) ambiguous = true;
        }
        if (ambiguous) {
          best = nearest_centroid(x, books_, c);
          ++fallbacks;
        }
        enc(n, c) = static_cast<std::uint8_t>(best);
      }
      if (counters) counters->distance_madds += static_cast<std::uint64_t>((n1 - n0) * v * k);
    }
  }
  if (counters) counters->exact_fallbacks += fallbacks;
  return enc;
}

Encoding centroid_search_fast(const MatrixF32& a, const CodebooksF32& books, const KernelPlan& plan,
                              KernelCounters* counters) {
  return CentroidSearch(books).encode(a, plan, counters);
}

// ---------------------------------------------------------------------------
// Table lookup

PackedTableI8::PackedTableI8(const LookupTableI8& t)
    : c_(t.num_codebooks), k_(t.k), m_(t.m), scale_(t.scale), rows_(t.entries.data(), t.entries.data() + t.entries.size()) {
  for (auto q : rows_) {
    if (q < -kInt8TableMax) throw CorruptionError("INT8 table entry -128 is outside the symmetric range");
  }
  if (k_ == 16) {
    shuffle_.assign(static_cast<std::size_t>(m_ * c_ * 16), 0);
    for (Index c = 0; c < c_; ++c) {
      for (Index j = 0; j < 16; ++j) {
        const std::int8_t* r = row(c, j);
        for (Index m = 0; m < m_; ++m) shuffle_[static_cast<std::size_t>((m * c_ + c) * 16 + j)] = r[m];
      }
    }
  }
}

namespace {

// Portable row gather for rows [n0, n1).
void accumulate_rows(const Encoding& enc, const PackedTableI8& t, Index g, Index n0, Index n1, MatrixI32& out) {
  const Index cc = t.num_codebooks(), m = t.m();
  std::vector<std::int16_t> partial(static_cast<std::size_t>(m));
  for (Index n = n0; n < n1; ++n) {
    std::int32_t* __restrict acc = out.data() + n * m;
    for (Index c0 = 0; c0 < cc; c0 += g) {
      const Index c1 = std::min(cc, c0 + g);
      std::int16_t* __restrict p = partial.data();
      std::fill(p, p + m, std::int16_t{0});
      for (Index c = c0; c < c1; ++c) {
        const std::int8_t* __restrict r = t.row(c, enc(n, c));
        for (Index j = 0; j < m; ++j) p[j] = static_cast<std::int16_t>(p[j] + r[j]);
      }
      for (Index j = 0; j < m; ++j) acc[j] += p[j];
    }
  }
}

#if defined(__AVX2__)
// Byte-shuffle lookup for K = 16 over blocks of 32 rows. For each output
// column the 16 entries of one codebook sit in a single register; pshufb
// gathers them for 32 row indices at once. Partials widen to int16 and then
// to int32 every G codebooks.
void accumulate_shuffle16(const Encoding& enc, const PackedTableI8& t, Index g, Index n_blocks, MatrixI32& out) {
  const Index cc = t.num_codebooks(), m = t.m();
  std::vector<std::uint8_t> codes(static_cast<std::size_t>(cc * 32));
  alignas(32) std::int32_t lanes[32];
  for (Index b = 0; b < n_blocks; ++b) {
    const Index n0 = b * 32;
    for (Index c = 0; c < cc; ++c) {
      for (Index r = 0; r < 32; ++r) codes[static_cast<std::size_t>(c * 32 + r)] = enc(n0 + r, c);
    }
    for (Index col = 0; col < m; ++col) {
      __m256i acc0 = _mm256_setzero_si256(), acc1 = _mm256_setzero_si256();
      __m256i acc2 = _mm256_setzero_si256(), acc3 = _mm256_setzero_si256();
      for (Index c0 = 0; c0 < cc; c0 += g) {
        const Index c1 = std::min(cc, c0 + g);
        __m256i lo = _mm256_setzero_si256(), hi = _mm256_setzero_si256();
        for (Index c = c0; c < c1; ++c) {
          const __m128i tbl = _mm_loadu_si128(reinterpret_cast<const __m128i*>(t.shuffle_table(col, c)));
          const __m256i idx = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(codes.data() + c * 32));
          const __m256i hit = _mm256_shuffle_epi8(_mm256_broadcastsi128_si256(tbl), idx);
          lo = _mm256_add_epi16(lo, _mm256_cvtepi8_epi16(_mm256_castsi256_si128(hit)));
          hi = _mm256_add_epi16(hi, _mm256_cvtepi8_epi16(_mm256_extracti128_si256(hit, 1)));
        }
        acc0 = _mm256_add_epi32(acc0, _mm256_cvtepi16_epi32(_mm256_castsi256_si128(lo)));
        acc1 = _mm256_add_epi32(acc1, _mm256_cvtepi16_epi32(_mm256_extracti128_si256(lo, 1)));
        acc2 = _mm256_add_epi32(acc2, _mm256_cvtepi16_epi32(_mm256_castsi256_si128(hi)));
        acc3 = _mm256_add_epi32(acc3, _mm256_cvtepi16_epi32(_mm256_extracti128_si256(hi, 1)));
      }
      _mm256_store_si256(reinterpret_cast<__m256i*>(lanes), acc0);
      _mm256_store_si256(reinterpret_cast<__m256i*>(lanes + 8), acc1);
      _mm256_store_si256(reinterpret_cast<__m256i*>(lanes + 16), acc2);
      _mm256_store_si256(reinterpret_cast<__m256i*>(lanes + 24), acc3);
      for (Index r = 0; r < 32; ++r) out(n0 + r, col) = lanes[r];
    }
  }
}
#endif

}  // namespace

MatrixI32 lut_accumulate_i32(const Encoding& enc, const PackedTableI8& table, const KernelPlan& plan,
                             KernelCounters* counters) {
  plan.validate();
  check_encoding(enc, table.num_codebooks(), table.k());
  const Index n = enc.rows(), g = plan.accumulation_chunk;
  MatrixI32 out = MatrixI32::Zero(n, table.m());
  Index done = 0;
#if defined(__AVX2__)
  if (table.has_shuffle_layout()) {
    const Index blocks = n / 32;
    accumulate_shuffle16(enc, table, g, blocks, out);
    done = blocks * 32;
  }
#endif
  accumulate_rows(enc, table, g, done, n, out);
  if (counters) counters->lookup_adds += static_cast<std::uint64_t>(n * table.num_codebooks() * table.m());
  return out;
}

MatrixF32 lut_gather_accumulate(const Encoding& enc, const PackedTableI8& table, const KernelPlan& plan) {
  return lut_accumulate_i32(enc, table, plan).cast<float>() * table.scale();
}

MatrixF32 lut_gather_accumulate(const Encoding& enc, const LookupTableI8& table, const KernelPlan& plan) {
  return lut_gather_accumulate(enc, PackedTableI8(table), plan);
}

MatrixF32 lut_gather_accumulate_f32(const Encoding& enc, const LookupTableF32& table) {
  check_encoding(enc, table.num_codebooks, table.k);
  const Index m = table.m;
  MatrixF32 out = MatrixF32::Zero(enc.rows(), m);
  for (Index n = 0; n < enc.rows(); ++n) {
    float* __restrict o = out.data() + n * m;
    const std::uint8_t* codes = enc.data() + n * enc.cols();
    for (Index c = 0; c < table.num_codebooks; ++c) {
      const float* __restrict r = table.row(c, codes[c]);
      for (Index j = 0; j < m; ++j) o[j] += r[j];
    }
  }
  return out;
}

MatrixF32 lut_layer_infer(const MatrixF32& a, const LutLayer& layer, const KernelPlan& plan, InferPath path,
                          EncoderKind encoder) {
  Encoding enc;
  if (encoder == EncoderKind::Hash) {
    if (layer.hash_trees.size() != static_cast<std::size_t>(layer.books.num_codebooks)) {
      throw ConfigError("lut_layer_infer: layer has no hash trees");
    }
    check_codebooks(a, layer.books, "lut_layer_infer");
    enc = encode_hash(a, layer.hash_trees, layer.books.v);
  } else {
    enc = centroid_search_fast(a, layer.books, plan);
  }
  if (path == InferPath::Float) return lut_gather_accumulate_f32(enc, layer.forward_table());
  if (!layer.quantized) throw ConfigError("lut_layer_infer: integer path needs a quantized table");
  return lut_gather_accumulate(enc, *layer.quantized, plan);
}

// ---------------------------------------------------------------------------
// Counting

FlopCounts flop_counter(Index n, Index d, Index m, const PqConfig& cfg) {
  cfg.validate(d);
  const auto un = static_cast<std::uint64_t>(n), ud = static_cast<std::uint64_t>(d), um = static_cast<std::uint64_t>(m);
  FlopCounts f;
  f.encode = un * ud * static_cast<std::uint64_t>(cfg.k);
  f.lookup_aggregate = un * um * (ud / static_cast<std::uint64_t>(cfg.v));
  f.dense = un * ud * um;
  return f;
}

FlopCounts count_reference_pq_amm(const MatrixF32& a, const MatrixF32& b, const CodebooksF32& books, MatrixF32* out) {
  check_codebooks(a, books, "count_reference_pq_amm");
  FlopCounts f;
  Encoding enc(a.rows(), books.num_codebooks);
  for (Index n = 0; n < a.rows(); ++n) {
    for (Index c = 0; c < books.num_codebooks; ++c) {
      const float* x = a.data() + n * a.cols() + c * books.v;
      float best = std::numeric_limits<float>::infinity();
      Index arg = 0;
      for (Index k = 0; k < books.k; ++k) {
        const float* p = books.centroid(c, k);
        float s = 0.0f;
        for (Index j = 0; j < books.v; ++j) {
          const float diff = x[j] - p[j];
          s += diff * diff;
          ++f.encode;
        }
        if (s < best) {
          best = s;
          arg = k;
        }
      }
      enc(n, c) = static_cast<std::uint8_t>(arg);
    }
  }
  const LookupTableF32 table = build_table(b, books);
  MatrixF32 result = MatrixF32::Zero(a.rows(), b.cols());
  for (Index n = 0; n < a.rows(); ++n) {
    for (Index c = 0; c < books.num_codebooks; ++c) {
      const float* r = table.row(c, enc(n, c));
      for (Index j = 0; j < b.cols(); ++j) {
        result(n, j) += r[j];
        ++f.lookup_aggregate;
      }
    }
  }
  // Dense baseline, counted the same way.
  MatrixF32 dense = MatrixF32::Zero(a.rows(), b.cols());
  for (Index n = 0; n < a.rows(); ++n) {
    for (Index k = 0; k < a.cols(); ++k) {
      for (Index j = 0; j < b.cols(); ++j) {
        dense(n, j) += a(n, k) * b(k, j);
        ++f.dense;
      }
    }
  }
  if (out) *out = std::move(result);
  return f;
}

double operation_intensity(Index k, Index v) {
  if (k < 1 || v < 1) throw ConfigError("operation_intensity: K and V must be >= 1");
  return 2.0 / (1.0 / static_cast<double>(k) + 1.0 / static_cast<double>(v));
}

}  // namespace lutkit
