// End-to-end acceptance run: one PASS/FAIL line per criterion, exit status 1
// if any criterion fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "lutkit/bench.hpp"
#include "lutkit/cost.hpp"
#include "lutkit/experiment.hpp"
#include "lutkit/kernels.hpp"
#include "oracles.hpp"

using namespace lutkit;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

Index pick(Rng& rng, std::initializer_list<Index> xs) { return xs.begin()[rng.index(xs.size())]; }
Index upto(Rng& rng, Index n) { return 1 + static_cast<Index>(rng.index(static_cast<std::uint64_t>(n))); }

std::vector<std::vector<int>> as_lists(const Encoding& e) {
  std::vector<std::vector<int>> out(static_cast<std::size_t>(e.rows()));
  for (Index n = 0; n < e.rows(); ++n)
    for (Index c = 0; c < e.cols(); ++c) out[n].push_back(e(n, c));
  return out;
}

CodebooksF32 random_books(Index c, Index k, Index v, Rng& rng) {
  CodebooksF32 b(c, k, v);
  b.centroids = oracle::random_matrix(c * k, v, rng);
  return b;
}

// ---------------------------------------------------------------------------

Outcome kernels_match_references() {
  Rng rng(1001);
  int float_bad = 0, int_bad = 0, enc_bad = 0;
  double worst_rel = 0;
  const int shapes = 240;
  for (int t = 0; t < shapes; ++t) {
    const Index k = pick(rng, {4, 8, 16}), v = pick(rng, {2, 3, 4, 9, 16});
    const Index c = upto(rng, 144 / v), n = upto(rng, 64), m = upto(rng, 96);
    CodebooksF32 books = random_books(c, k, v, rng);
    MatrixF32 a = oracle::random_matrix(n, c * v, rng);
    if (t % 4 == 0) {
      // Crafted ties: duplicate centroids and inputs sitting exactly on them.
      for (Index cb = 0; cb < c; ++cb) books.book(cb).row(k - 1) = books.book(cb).row(0);
      for (Index r = 0; r < n; r += 2)
        for (Index cb = 0; cb < c; ++cb) a.block(r, cb * v, 1, v) = books.book(cb).row(0);
    }
    const LutLayer layer = LutLayer::from_weight(oracle::random_matrix(c * v, m, rng), books, PqConfig{v, k});
    KernelPlan plan;
    plan.rows_per_tile = upto(rng, 64);
    plan.centroids_per_tile = upto(rng, 16);
    plan.accumulation_chunk = upto(rng, kMaxAccumulationChunk);

    const Encoding fast = centroid_search_fast(a, books, plan);
    const auto oracle_enc = oracle::encode(a, books.centroids, k, v);
    enc_bad += fast != encode_hard(a, books) || as_lists(fast) != oracle_enc;

    const MatrixF32 ref = lut_matmul_ref(encode_hard(a, books), layer.table);
    const MatrixF32 f = lut_layer_infer(a, layer, plan, InferPath::Float);
    const double rel = (f - ref).norm() / std::max(static_cast<double>(ref.norm()), 1e-30);
    worst_rel = std::max(worst_rel, rel);
    float_bad += rel > 1e-6;

    const LookupTableI8& q = *layer.quantized;
    std::vector<std::int64_t> raw;
    const std::vector<std::int8_t> flat(q.entries.data(), q.entries.data() + q.entries.size());
    const MatrixF32 want = oracle::int_aggregate(oracle_enc, flat, k, m, q.scale, &raw);
    const MatrixI32 got = lut_accumulate_i32(fast, PackedTableI8(q), plan);
    bool same = lut_layer_infer(a, layer, plan, InferPath::Integer) == want;
    for (Index i = 0; i < got.size() && same; ++i) same = got(i / m, i % m) == raw[static_cast<std::size_t>(i)];
    int_bad += !same;
  }
  Outcome o;
  o.pass = float_bad == 0 && int_bad == 0 && enc_bad == 0;
  o.detail = std::to_string(shapes) + " shapes; float mismatches " + std::to_string(float_bad) + " (worst rel " +
             fmt("%.2e", worst_rel) + "), integer mismatches " + std::to_string(int_bad) + ", index mismatches " +
             std::to_string(enc_bad);
  return o;
}

Outcome gradients_match_finite_differences() {
  Rng rng(1002);
  double worst = 0;
  for (int t = 0; t < 50; ++t) {
    const Index v = pick(rng, {2, 3}), d = v * upto(rng, 12 / v);
    const Index n = upto(rng, 8), k = upto(rng, 8), m = upto(rng, 6);
    LutLayer layer = LutLayer::from_weight(oracle::random_matrix(d, m, rng), random_books(d / v, k, v, rng), PqConfig{v, k});
    layer.temp.theta = static_cast<float>(rng.uniform(-0.5, 1.0));
    const MatrixF32 a = oracle::random_matrix(n, d, rng), g = oracle::random_matrix(n, m, rng);
    const SteForward f = ste_forward(a, layer);
    const SteGradients sg = ste_backward(g, f.cache, layer);
    const auto fd = oracle::soft_fd_gradients(a.cast<double>(), layer.books.centroids.cast<double>(),
                                              layer.weight.cast<double>(), layer.temp.theta, g.cast<double>(), k, v,
                                              1e-4);
    worst = std::max({worst, oracle::relative_error(sg.centroids.cast<double>(), fd.centroids),
                      oracle::relative_error(sg.weight.cast<double>(), fd.weight),
                      oracle::relative_error(sg.input.cast<double>(), fd.input)});
    if (k > 1)
      worst = std::max(worst, std::abs(sg.theta - fd.theta) / std::max(std::abs(fd.theta), 1e-8));
    else if (sg.theta != 0.0f)
      worst = INFINITY;
  }
  return {worst < 1e-5, "50 instances; worst relative error " + fmt("%.2e", worst)};
}

Outcome kmeans_objective_and_mean() {
  int bad = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const MatrixF32 s = oracle::random_matrix(200, 4, rng);
    const KMeansResult r = kmeans_fit(s, 16, 40, rng);
    for (std::size_t i = 1; i < r.objective.size(); ++i) bad += r.objective[i] > r.objective[i - 1];
  }
  Rng rng(77);
  const MatrixF32 s = oracle::random_matrix(333, 5, rng, 3.0);
  const KMeansResult one = kmeans_fit(s, 1, 10, rng);
  double err = 0;
  for (Index j = 0; j < 5; ++j) {
    double mean = 0;
    for (Index i = 0; i < s.rows(); ++i) mean += s(i, j);
    mean /= static_cast<double>(s.rows());
    err = std::max(err, std::abs(one.centroids(0, j) - mean) / std::max(std::abs(mean), 1.0));
  }
  return {bad == 0 && err < 1e-6,
          "50 seeds, objective increases " + std::to_string(bad) + "; k=1 mean error " + fmt("%.2e", err)};
}

Outcome quantization_bounds() {
  Rng rng(1004);
  int scale_bad = 0, trip_bad = 0, qat_bad = 0;
  auto ulp = [](float x) { return std::nextafter(std::abs(x), INFINITY) - std::abs(x); };
  for (int t = 0; t < 200; ++t) {
    const Index c = upto(rng, 24), k = pick(rng, {4, 8, 16}), m = upto(rng, 32);
    LookupTableF32 tab(c, k, m);
    tab.entries = oracle::random_matrix(c * k, m, rng, std::exp(rng.uniform(-5, 5)));
    const LookupTableI8 q = quantize_table(tab);
    const float max_abs = tab.entries.cwiseAbs().maxCoeff();
    scale_bad += std::abs(q.scale * 127.0f - max_abs) > ulp(max_abs);
    const LookupTableF32 back = dequantize(q);
    for (Index i = 0; i < tab.entries.size(); ++i) {
      const float x = tab.entries.data()[i];
      trip_bad += std::abs(x - back.entries.data()[i]) > q.scale / 2 + ulp(x) + ulp(q.scale / 2);
    }
    Encoding e(8, c);
    for (Index i = 0; i < e.size(); ++i) e.data()[i] = static_cast<std::uint8_t>(rng.index(static_cast<std::uint64_t>(k)));
    const MatrixF32 real = lut_matmul_ref(e, tab), fake = lut_matmul_ref(e, qat_hook(tab).forward);
    const double bound = static_cast<double>(c) * q.scale / 2;
    qat_bad += (real - fake).cwiseAbs().maxCoeff() > bound * (1 + 1e-5) + 1e-6 * max_abs;
  }
  return {scale_bad == 0 && trip_bad == 0 && qat_bad == 0,
          "200 tables; scale violations " + std::to_string(scale_bad) + ", round-trip violations " +
              std::to_string(trip_bad) + ", QAT bound violations " + std::to_string(qat_bad)};
}

Outcome cost_formulas() {
  Rng rng(1005);
  int bad = 0;
  for (int t = 0; t < 100; ++t) {
    const Index v = upto(rng, 8), c = upto(rng, 12), k = upto(rng, 32), n = upto(rng, 24), m = upto(rng, 40);
    const Index d = c * v;
    const FlopCounts f = flop_counter(n, d, m, PqConfig{v, k});
    const std::uint64_t encode = static_cast<std::uint64_t>(n * d * k), lookup = static_cast<std::uint64_t>(n * m * d / v);
    const std::uint64_t dense = static_cast<std::uint64_t>(n * d * m);
    const FlopCounts counted = count_reference_pq_amm(oracle::random_matrix(n, d, rng), oracle::random_matrix(d, m, rng),
                                                      random_books(c, k, v, rng));
    bad += f.encode != encode || f.lookup_aggregate != lookup || f.dense != dense;
    bad += counted.encode != encode || counted.lookup_aggregate != lookup;
    bad += cost(n, d, m, k, v).flops_lut != encode + lookup;
  }
  const CostReport bert = cost(1, 768, 768, 16, 32);
  const double ratio = bert.size_reduction_with_centroids;
  const bool size_ok = std::abs(ratio - 7.0) / 7.0 < 0.05;
  return {bad == 0 && size_ok && bert.flops_reduction == 19.2,
          "100 shapes, mismatches " + std::to_string(bad) + "; size reduction " + fmt("%.3f", ratio) +
              "x (7x within 5%), FLOP reduction " + fmt("%.2f", bert.flops_reduction) + "x"};
}

// Toy-task experiments shared by the degradation, recovery and hashing checks.
ExperimentConfig toy_config(std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.seed = seed;
  cfg.policy.k = 16;
  cfg.policy.dense_v = 8;
  cfg.policy.replace_last_n = 3;
  cfg.hash_levels = 12;
  return cfg;
}

struct ToyRun {
  double float_acc = 0, vanilla_acc = 0, tuned_acc = 0, hash_agreement = 1;
  std::vector<double> vanilla_mse;  // replace_last_n = 1, 2, 3
};

std::vector<ToyRun> run_toy(const std::vector<std::uint64_t>& seeds) {
  std::vector<ToyRun> runs;
  for (std::uint64_t seed : seeds) {
    ExperimentConfig cfg = toy_config(seed);
    const ExperimentResult full = run_experiment(cfg);
    ToyRun r;
    r.float_acc = full.float_accuracy;
    r.vanilla_acc = full.vanilla.accuracy;
    r.tuned_acc = full.tuned.accuracy;
    for (const LayerReport& l : full.hashed->layers) r.hash_agreement = std::min(r.hash_agreement, l.hash_agreement);
    for (int n = 1; n <= 2; ++n) {
      ExperimentConfig partial = cfg;
      partial.policy.replace_last_n = n;
      partial.lut_train.epochs = 0;
      partial.hash_levels = 0;
      r.vanilla_mse.push_back(run_experiment(partial, &full.float_model).vanilla.output_mse);
    }
    r.vanilla_mse.push_back(full.vanilla.output_mse);
    runs.push_back(r);
  }
  return runs;
}

Outcome degradation(const std::vector<ToyRun>& runs) {
  std::vector<double> fl, van, m1, m2, m3;
  for (const ToyRun& r : runs) {
    fl.push_back(r.float_acc);
    van.push_back(r.vanilla_acc);
    m1.push_back(r.vanilla_mse[0]);
    m2.push_back(r.vanilla_mse[1]);
    m3.push_back(r.vanilla_mse[2]);
  }
  const double f = median(fl), v = median(van), drop = f - v;
  const bool trend = median(m1) <= median(m2) && median(m2) <= median(m3);
  return {f >= 0.95 && drop >= 0.10 && trend,
          "median float " + fmt("%.4f", f) + ", vanilla PQ " + fmt("%.4f", v) + " (drop " + fmt("%.1f", 100 * drop) +
              " points); output MSE n=1,2,3: " + fmt("%.4g, %.4g, %.4g", median(m1), median(m2), median(m3))};
}

Outcome recovery(const std::vector<ToyRun>& runs) {
  std::vector<double> gap, tuned;
  for (const ToyRun& r : runs) {
    gap.push_back(r.float_acc - r.tuned_acc);
    tuned.push_back(r.tuned_acc);
  }
  const double g = median(gap);
  return {g <= 0.03, "median soft-PQ accuracy " + fmt("%.4f", median(tuned)) + ", median gap to float " +
                         fmt("%.1f", 100 * g) + " points"};
}

std::vector<std::map<std::string, std::string>> csv_rows(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::string line;
  std::vector<std::string> header;
  std::vector<std::map<std::string, std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    if (header.empty()) {
      header = cells;
      continue;
    }
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < header.size() && i < cells.size(); ++i) row[header[i]] = cells[i];
    rows.push_back(row);
  }
  return rows;
}

Outcome temperature_ablation(const std::vector<ToyRun>& runs, const std::filesystem::path& csv) {
  std::filesystem::remove(csv);
  const std::string cmd = std::string("'") + LUTKIT_CLI + "' sweep --grid-centroids 16 --grid-subvec 8 "
                          "--grid-replace-last 3 --grid-temperature learned fixed:1 --grid-seeds 1 2 3 4 5 --out '" +
                          csv.string() + "' > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) return {false, "sweep command failed: " + cmd};
  std::vector<double> learned, fixed;
  int consistent = 0;
  for (const auto& row : csv_rows(csv)) {
    const double acc = std::stod(row.at("accuracy"));
    if (row.at("temperature") == "learned") {
      learned.push_back(acc);
      const std::size_t seed = std::stoul(row.at("seed"));
      consistent += seed >= 1 && seed <= runs.size() && fmt("%.6g", runs[seed - 1].tuned_acc) == row.at("accuracy");
    } else {
      fixed.push_back(acc);
    }
  }
  if (learned.size() != 5 || fixed.size() != 5) return {false, "sweep CSV is missing cells"};
  const double l = median(learned), f = median(fixed);
  return {l >= f, "median learned " + fmt("%.4f", l) + " vs fixed t=1 " + fmt("%.4f", f) + " (" + csv.string() +
                      "; learned cells equal to in-process runs: " + std::to_string(consistent) + "/5)"};
}

Outcome hashing(const std::vector<ToyRun>& runs) {
  std::vector<double> agree;
  for (const ToyRun& r : runs) agree.push_back(r.hash_agreement);
  // Encoder swap: the hashed indices go through exactly the distance path's lookup.
  Rng rng(1009);
  const MatrixF32 a = oracle::random_matrix(200, 16, rng);
  LutLayer layer = LutLayer::from_weight(oracle::random_matrix(16, 12, rng), fit_codebooks(a, PqConfig{4, 16}, 10, rng),
                                         PqConfig{4, 16});
  HashTreeOptions ho;
  ho.levels = 12;
  layer.hash_trees = build_hash_trees(a, layer.books, ho, rng);
  const Encoding hashed = encode_hash(a, layer.hash_trees, 4);
  const bool swap = lut_layer_infer(a, layer, KernelPlan{}, InferPath::Integer, EncoderKind::Hash) ==
                        lut_gather_accumulate(hashed, *layer.quantized, KernelPlan{}) &&
                    lut_layer_infer(a, layer, KernelPlan{}, InferPath::Float, EncoderKind::Hash) ==
                        lut_gather_accumulate_f32(hashed, layer.table);
  const double m = median(agree);
  return {m >= 0.90 && swap, "12-level trees, median held-out agreement (worst layer) " + fmt("%.4f", m) +
                                 (swap ? "; encoder swap changes indices only" : "; encoder swap changed the lookup")};
}

Outcome bench_trends() {
  KernelPlan plan;
  auto speedup = [&](Index n, Index d, Index m, Index k, Index v, int reps) {
    return bench_kernel(BenchShape{n, d, m, k, v}, plan, reps).speedup_vs_dense;
  };
  const double s64 = speedup(1, 768, 64, 16, 32, 400), s256 = speedup(1, 768, 256, 16, 32, 400);
  const double s768 = speedup(1, 768, 768, 16, 32, 400);
  const double small = speedup(1, 768, 16, 16, 4, 400);
  const double big = speedup(256, 768, 768, 16, 32, 15);
  const bool pass = s64 < s256 && s256 < s768 && small <= 1.0 && big >= 2.0;
  return {pass, "speedup M=64,256,768: " + fmt("%.2f, %.2f, %.2f", s64, s256, s768) + "; M=16 V=4: " +
                    fmt("%.2f", small) + "; N=256 D=M=768: " + fmt("%.2f", big)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::filesystem::path csv =
      argc > 1 ? std::filesystem::path(argv[1]) : std::filesystem::temp_directory_path() / "lutkit_temperature_sweep.csv";
  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = body();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += !o.pass;
    std::printf("%s  %2d %-28s %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs);
    std::fflush(stdout);
  };

  report(1, "kernel-oracle equivalence", kernels_match_references);
  report(2, "gradient correctness", gradients_match_finite_differences);
  report(3, "k-means", kmeans_objective_and_mean);
  report(4, "quantization", quantization_bounds);
  report(5, "cost formulas", cost_formulas);

  std::vector<ToyRun> runs;
  std::string toy_error;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    runs = run_toy({1, 2, 3, 4, 5});
  } catch (const std::exception& e) {
    toy_error = e.what();
  }
  const double toy_secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("      toy experiments: 5 seeds in %.1fs\n", toy_secs);
  auto toy = [&](const std::function<Outcome()>& body) {
    return [&, body] { return toy_error.empty() ? body() : Outcome{false, "toy run threw: " + toy_error}; };
  };
  report(6, "degradation trend", toy([&] { return degradation(runs); }));
  report(7, "soft-PQ recovery", toy([&] { return recovery(runs); }));
  report(8, "temperature ablation", toy([&] { return temperature_ablation(runs, csv); }));
  report(9, "hash encoder", toy([&] { return hashing(runs); }));
  report(10, "kernel benchmark trends", bench_trends);

  std::printf("%d/10 criteria passed\n", 10 - failures);
  return failures == 0 ? 0 : 1;
}
