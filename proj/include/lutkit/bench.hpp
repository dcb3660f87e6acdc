#pragma once

#include <cstdint>
#include <string>

#include "lutkit/kernels.hpp"

namespace lutkit {

struct BenchShape {
  Index n = 1, d = 768, m = 768, k = 16, v = 32;
};

/// Single-threaded timing of the integer LUT path (centroid search, INT8
/// lookup, rescale) against matmul_ref on identical shapes.
struct BenchReport {
  BenchShape shape;
  KernelPlan plan;
  int repetitions = 0;
  double min_ns = 0, median_ns = 0;              // LUT path
  double dense_min_ns = 0, dense_median_ns = 0;  // matmul_ref
  double gflops_equiv = 0;                       // 2*N*D*M / LUT median
  double speedup_vs_dense = 0;                   // dense min / LUT min
};

inline constexpr int kMinBenchRepetitions = 5;

/// Inputs are drawn from `seed`; warm-up runs are excluded from the stats.
BenchReport bench_kernel(const BenchShape& shape, const KernelPlan& plan, int repetitions, std::uint64_t seed = 42);

/// Restricts the calling thread to the CPU it is running on (Linux only;
/// elsewhere a no-op). Returns false if pinning failed.
bool pin_to_current_cpu();

std::string bench_csv_header();
std::string bench_csv_row(const BenchReport& r);

}  // namespace lutkit
