#include "lutkit/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <vector>

#if defined(__linux__)
#include <sched.h>
#endif

namespace lutkit {

bool pin_to_current_cpu() {
#if defined(__linux__)
  const int cpu = sched_getcpu();
  if (cpu < 0) return false;
  cpu_set_t set;
  CPU_ZERO(&set);
  CPU_SET(cpu, &set);
  return sched_setaffinity(0, sizeof(set), &set) == 0;
#else
  return true;
#endif
}

namespace {

template <typename F>
std::vector<double> time_runs(F&& body, int warmup, int reps) {
  for (int i = 0; i < warmup; ++i) body();
  std::vector<double> ns;
  ns.reserve(static_cast<std::size_t>(reps));
  for (int i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    body();
    const auto t1 = std::chrono::steady_clock::now();
    ns.push_back(std::chrono::duration<double, std::nano>(t1 - t0).count());
  }
  std::sort(ns.begin(), ns.end());
  return ns;
}

double median(const std::vector<double>& sorted) {
  const std::size_t n = sorted.size();
  return n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
}

// Keeps results observable so the timed work is not optimised away.
volatile float g_sink = 0.0f;

}  // namespace

BenchReport bench_kernel(const BenchShape& shape, const KernelPlan& plan, int repetitions, std::uint64_t seed) {
  if (repetitions < kMinBenchRepetitions) {
    throw ConfigError("bench_kernel: need at least " + std::to_string(kMinBenchRepetitions) + " repetitions");
  }
  plan.validate();
  const PqConfig cfg{shape.v, shape.k};
  cfg.validate(shape.d);
  if (shape.n < 1 || shape.m < 1) throw ConfigError("bench_kernel: empty shape");
  pin_to_current_cpu();

  Rng rng(seed);
  MatrixF32 a(shape.n, shape.d), b(shape.d, shape.m);
  for (Index i = 0; i < a.size(); ++i) a.data()[i] = static_cast<float>(rng.normal());
  for (Index i = 0; i < b.size(); ++i) b.data()[i] = static_cast<float>(rng.normal() / std::sqrt(double(shape.d)));
  // Codebooks come from a separate draw of the same distribution; fitting on
  // a single row would leave K identical centroids per codebook.
  MatrixF32 sample(std::max<Index>(shape.n, 1024), shape.d);
  for (Index i = 0; i < sample.size(); ++i) sample.data()[i] = static_cast<float>(rng.normal());
  const CodebooksF32 books = fit_codebooks(sample, cfg, 4, rng);

  // Offline preparation, as at model load time.
  const CentroidSearch search(books);
  const PackedTableI8 table(quantize_table(build_table(b, books)));

  const int warmup = 2;
  const auto lut = time_runs(
      [&] {
        const Encoding enc = search.encode(a, plan);
        const MatrixF32 out = lut_gather_accumulate(enc, table, plan);
        g_sink = g_sink + out(0, 0);
      },
      warmup, repetitions);
  const auto dense = time_runs(
      [&] {
        const MatrixF32 out = matmul_ref(a, b);
        g_sink = g_sink + out(0, 0);
      },
      warmup, repetitions);

  BenchReport r;
  r.shape = shape;
  r.plan = plan;
  r.repetitions = repetitions;
  r.min_ns = lut.front();
  r.median_ns = median(lut);
  r.dense_min_ns = dense.front();
  r.dense_median_ns = median(dense);
  r.gflops_equiv = 2.0 * static_cast<double>(shape.n) * static_cast<double>(shape.d) * static_cast<double>(shape.m) /
                   r.median_ns;
  r.speedup_vs_dense = r.dense_min_ns / r.min_ns;
  return r;
}

std::string bench_csv_header() {
  return "n,d,m,k,v,rows_per_tile,centroids_per_tile,accumulation_chunk,min_ns,median_ns,gflops_equiv,"
         "speedup_vs_dense";
}

std::string bench_csv_row(const BenchReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%lld,%lld,%lld,%lld,%lld,%lld,%lld,%lld,%.0f,%.0f,%.4f,%.4f",
                static_cast<long long>(r.shape.n), static_cast<long long>(r.shape.d),
                static_cast<long long>(r.shape.m), static_cast<long long>(r.shape.k),
                static_cast<long long>(r.shape.v), static_cast<long long>(r.plan.rows_per_tile),
                static_cast<long long>(r.plan.centroids_per_tile), static_cast<long long>(r.plan.accumulation_chunk),
                r.min_ns, r.median_ns, r.gflops_equiv, r.speedup_vs_dense);
  return buf;
}

}  // namespace lutkit
