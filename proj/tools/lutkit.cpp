// Command-line front end: train, eval, sweep, bench, cost.

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "lutkit/bench.hpp"
#include "lutkit/container.hpp"
#include "lutkit/cost.hpp"
#include "lutkit/experiment.hpp"

using namespace lutkit;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kTrainSchema = "lutkit.train/1";
constexpr const char* kEvalSchema = "lutkit.eval/1";
constexpr const char* kSweepSchema = "lutkit.sweep/1";
constexpr const char* kBenchSchema = "lutkit.bench/1";
constexpr const char* kCostSchema = "lutkit.cost/1";

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

struct TaskFlags {
  std::string temperature = "learned";
};

void add_task_options(CLI::App* cmd, ExperimentConfig& cfg) {
  cmd->add_option("--task", cfg.task, "toy-spiral | toy-gauss | idx | csv")->capture_default_str();
  cmd->add_option("--train-file", cfg.train_path, "csv file or idx images");
  cmd->add_option("--test-file", cfg.test_path, "csv file or idx images");
  cmd->add_option("--train-labels", cfg.train_labels, "idx labels for --train-file");
  cmd->add_option("--test-labels", cfg.test_labels, "idx labels for --test-file");
  cmd->add_option("--per-class", cfg.per_class, "toy samples per class (test split gets a quarter)")->capture_default_str();
  cmd->add_option("--classes", cfg.classes, "toy class count")->capture_default_str();
  cmd->add_option("--turns", cfg.spiral_turns, "spiral revolutions per arm")->capture_default_str();
  cmd->add_option("--noise", cfg.spiral_noise, "spiral angular noise")->capture_default_str();
  cmd->add_option("--dims", cfg.gauss_dims, "toy-gauss feature count")->capture_default_str();
  cmd->add_option("--seed", cfg.seed, "seed for data, init and training")->capture_default_str();
}

void add_model_options(CLI::App* cmd, ExperimentConfig& cfg, TaskFlags& flags) {
  cmd->add_option("--model", cfg.model, "mlp | tinycnn")->capture_default_str();
  cmd->add_option("--hidden", cfg.hidden, "MLP hidden widths")->delimiter(',')->capture_default_str();
  cmd->add_option("--replace-last", cfg.policy.replace_last_n, "linear layers to replace, counted from the output")
      ->capture_default_str();
  cmd->add_flag("--replace-first", cfg.policy.replace_first, "allow replacing the first linear layer");
  cmd->add_option("--centroids", cfg.policy.k, "K, centroids per codebook")->capture_default_str();
  cmd->add_option("--subvec", cfg.policy.dense_v, "V for dense layers")->capture_default_str();
  cmd->add_option("--conv-subvec", cfg.policy.conv_v, "V for conv layers (0: kernel area)")->capture_default_str();
  cmd->add_option("--temperature", flags.temperature, "learned | fixed:<t> | anneal:<t0>:<t1>")->capture_default_str();
  cmd->add_flag("--qat", cfg.policy.qat, "train against INT8 tables");
  cmd->add_option("--hash-levels", cfg.hash_levels, "build hash trees of this depth (0: none)")->capture_default_str();
  cmd->add_option("--epochs", cfg.lut_train.epochs, "soft-PQ epochs")->capture_default_str();
  cmd->add_option("--float-epochs", cfg.float_train.epochs, "float pretraining epochs")->capture_default_str();
  cmd->add_option("--batch", cfg.lut_train.batch_size, "minibatch size")->capture_default_str();
  cmd->add_option("--lr", cfg.lut_train.lr_weight, "soft-PQ weight learning rate")->capture_default_str();
  cmd->add_option("--lr-centroid", cfg.lut_train.lr_centroid, "centroid learning rate")->capture_default_str();
  cmd->add_option("--lr-temperature", cfg.lut_train.lr_temperature, "log-temperature learning rate")
      ->capture_default_str();
  cmd->add_option("--float-lr", cfg.float_train.lr_weight, "float pretraining learning rate")->capture_default_str();
}

void finish_config(ExperimentConfig& cfg, const TaskFlags& flags) {
  cfg.lut_train.temperature = TemperatureSchedule::parse(flags.temperature);
  cfg.float_train.batch_size = cfg.lut_train.batch_size;
  cfg.validate();
}

json eval_json(const EvalReport& r) {
  json j;
  j["accuracy"] = r.accuracy;
  if (r.output_mse >= 0) j["output_mse"] = r.output_mse;
  json layers = json::array();
  for (const auto& l : r.layers) {
    json e;
    e["layer"] = l.layer;
    if (r.output_mse >= 0) e["mse"] = l.mse;
    if (l.hash_agreement >= 0) e["hash_agreement"] = l.hash_agreement;
    layers.push_back(e);
  }
  j["layers"] = layers;
  return j;
}

void write_metrics(const std::filesystem::path& path, const ExperimentResult& r) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "# schema=" << kTrainSchema << "\n";
  out << "phase,epoch,loss,accuracy,mse_vs_float,temperature\n";
  auto rows = [&](const char* phase, const std::vector<EpochMetrics>& h) {
    for (const auto& e : h) {
      std::string temps;
      for (std::size_t i = 0; i < e.temperatures.size(); ++i) temps += (i ? ";" : "") + fmt(e.temperatures[i]);
      out << phase << ',' << e.epoch << ',' << fmt(e.loss) << ',' << fmt(e.accuracy) << ',' << fmt(e.mse_vs_float)
          << ',' << temps << '\n';
    }
  };
  rows("float", r.float_history);
  rows("lut", r.lut_history);
}

int cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& out, std::filesystem::path float_out,
              std::filesystem::path metrics, const std::filesystem::path& from_float) {
  if (float_out.empty()) float_out = out.string() + ".float";
  if (metrics.empty()) metrics = out.string() + ".csv";
  std::optional<ModelSpec> pre;
  if (!from_float.empty()) pre = load_model(from_float);
  const ExperimentResult r = run_experiment(cfg, pre ? &*pre : nullptr);
  save_model(out, r.lut_model);
  save_model(float_out, r.float_model);
  write_metrics(metrics, r);

  json j;
  j["schema"] = kTrainSchema;
  j["model"] = out.string();
  j["float_model"] = float_out.string();
  j["metrics"] = metrics.string();
  j["float_accuracy"] = r.float_accuracy;
  j["vanilla"] = eval_json(r.vanilla);
  j["trained"] = eval_json(r.tuned);
  if (r.hashed) j["hashed"] = eval_json(*r.hashed);
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_eval(const ExperimentConfig& cfg, const std::filesystem::path& model_path,
             const std::filesystem::path& float_path, const std::string& encoder) {
  if (encoder != "dist" && encoder != "hash") throw ConfigError("--encoder must be dist or hash");
  const ModelSpec model = load_model(model_path);
  std::optional<ModelSpec> twin;
  if (!float_path.empty()) twin = load_model(float_path);
  const TaskData data = load_task(cfg);

  bool has_trees = false;
  for (const Layer& l : model.layers) has_trees = has_trees || (l.replaced() && !l.lut->hash_trees.empty());
  if (encoder == "hash" && !has_trees) throw ConfigError("model has no hash trees; train with --hash-levels");

  InferenceOptions opts;
  opts.encoder = encoder == "hash" ? EncoderKind::Hash : EncoderKind::Distance;
  const EvalReport r = evaluate(model, data.test, opts, twin ? &*twin : nullptr);
  json j;
  j["schema"] = kEvalSchema;
  j["encoder"] = encoder;
  j.update(eval_json(r));
  if (has_trees) {
    InferenceOptions dist, hash;
    hash.encoder = EncoderKind::Hash;
    j["accuracy_dist"] = evaluate(model, data.test, dist).accuracy;
    j["accuracy_hash"] = evaluate(model, data.test, hash).accuracy;
  }
  std::cout << j.dump(2) << "\n";
  return 0;
}

struct SweepCell {
  Index k, v;
  int n;
  std::string temperature;
  std::uint64_t seed;

  std::string key() const {
    return std::to_string(k) + ',' + std::to_string(v) + ',' + std::to_string(n) + ',' + temperature + ',' +
           std::to_string(seed);
  }
};

std::string sweep_header() {
  return "k,v,replace_last_n,temperature,seed,float_accuracy,vanilla_accuracy,accuracy,flops_lut,size_lut";
}

std::set<std::string> completed_keys(const std::filesystem::path& path) {
  std::set<std::string> keys;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("k,", 0) == 0) continue;
    std::size_t pos = 0;
    for (int i = 0; i < 5 && pos != std::string::npos; ++i) pos = line.find(',', pos + 1);
    if (pos != std::string::npos) keys.insert(line.substr(0, pos));
  }
  return keys;
}

int cmd_sweep(ExperimentConfig base, const TaskFlags& flags, std::vector<Index> ks, std::vector<Index> vs,
              std::vector<int> ns, std::vector<std::string> temps, std::vector<std::uint64_t> seeds,
              const std::filesystem::path& out) {
  finish_config(base, flags);
  if (ks.empty() || vs.empty() || ns.empty() || temps.empty() || seeds.empty()) throw ConfigError("sweep grid is empty");
  for (const auto& t : temps) TemperatureSchedule::parse(t);

  const auto done = completed_keys(out);
  std::vector<SweepCell> cells;
  for (auto seed : seeds)
    for (auto k : ks)
      for (auto v : vs)
        for (auto n : ns)
          for (const auto& t : temps) {
            SweepCell c{k, v, n, t, seed};
            if (!done.count(c.key())) cells.push_back(c);
          }

  const bool fresh = !std::filesystem::exists(out) || std::filesystem::file_size(out) == 0;
  std::ofstream csv(out, std::ios::app);
  if (!csv) throw DataError("cannot write " + out.string());
  if (fresh) csv << "# schema=" << kSweepSchema << "\n" << sweep_header() << "\n" << std::flush;

  // Float pretraining depends only on the seed; cells sharing a seed share it.
  std::map<std::uint64_t, ModelSpec> pretrained;
  for (const auto& c : cells) {
    if (pretrained.count(c.seed)) continue;
    ExperimentConfig cfg = base;
    cfg.seed = c.seed;
    ModelSpec m = pretrain_float(cfg, load_task(cfg));
    pretrained.emplace(c.seed, std::move(m));
  }

  int threads = 1;
  if (const char* env = std::getenv("LUTKIT_THREADS")) threads = std::max(1, std::atoi(env));
  std::mutex mu;
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  auto worker = [&] {
    for (std::size_t i; (i = next++) < cells.size();) {
      const SweepCell& c = cells[i];
      try {
        ExperimentConfig cfg = base;
        cfg.seed = c.seed;
        cfg.policy.k = c.k;
        cfg.policy.dense_v = c.v;
        cfg.policy.replace_last_n = c.n;
        cfg.lut_train.temperature = TemperatureSchedule::parse(c.temperature);
        const ExperimentResult r = run_experiment(cfg, &pretrained.at(c.seed));
        const CostReport cost = model_cost(r.lut_model, 1).total;
        std::lock_guard lock(mu);
        csv << c.key() << ',' << fmt(r.float_accuracy) << ',' << fmt(r.vanilla.accuracy) << ','
            << fmt(r.tuned.accuracy) << ',' << cost.flops_lut << ',' << cost.size_lut_bytes << '\n'
            << std::flush;
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        next = cells.size();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  std::cerr << cells.size() << " cells run, " << done.size() << " already present\n";
  return 0;
}

int cmd_bench(std::vector<Index> ns, std::vector<Index> ds, std::vector<Index> ms, Index k, Index v,
              const KernelPlan& plan, int reps, std::uint64_t seed, const std::filesystem::path& out) {
  std::ofstream csv;
  if (!out.empty()) {
    const bool fresh = !std::filesystem::exists(out) || std::filesystem::file_size(out) == 0;
    csv.open(out, std::ios::app);
    if (!csv) throw DataError("cannot write " + out.string());
    if (fresh) csv << "# schema=" << kBenchSchema << "\n" << bench_csv_header() << "\n";
  }
  std::cout << "# schema=" << kBenchSchema << "\n" << bench_csv_header() << "\n";
  for (auto n : ns)
    for (auto d : ds)
      for (auto m : ms) {
        const BenchReport r = bench_kernel(BenchShape{n, d, m, k, v}, plan, reps, seed);
        const std::string row = bench_csv_row(r);
        std::cout << row << std::endl;
        if (csv.is_open()) csv << row << "\n" << std::flush;
      }
  return 0;
}

json cost_json(const CostReport& r) {
  json j;
  j["n"] = r.n;
  j["d"] = r.d;
  j["m"] = r.m;
  j["replaced"] = r.replaced;
  if (r.replaced && r.k > 0) {
    j["k"] = r.k;
    j["v"] = r.v;
  }
  j["table_bits"] = r.table_bits;
  j["flops_lut"] = r.flops_lut;
  j["flops_dense"] = r.flops_dense;
  j["size_lut_bytes"] = r.size_lut_bytes;
  j["size_dense_bytes"] = r.size_dense_bytes;
  j["centroid_bytes"] = r.centroid_bytes;
  j["hash_comparisons"] = r.hash_comparisons;
  j["flops_reduction"] = r.flops_reduction;
  j["size_reduction"] = r.size_reduction;
  j["size_reduction_with_centroids"] = r.size_reduction_with_centroids;
  if (r.replaced && r.k > 0) j["op_intensity"] = r.op_intensity;
  return j;
}

int cmd_cost(const std::filesystem::path& model_path, const std::vector<Index>& shape, Index batch, int bits) {
  json j;
  j["schema"] = kCostSchema;
  if (!model_path.empty()) {
    const ModelCost mc = model_cost(load_model(model_path), batch, bits);
    json layers = json::array();
    for (std::size_t i = 0; i < mc.layers.size(); ++i) {
      json e = cost_json(mc.layers[i]);
      e["layer"] = mc.layer_index[i];
      layers.push_back(e);
    }
    j["layers"] = layers;
    json total = cost_json(mc.total);
    total.erase("d");
    total.erase("m");
    j["total"] = total;
  } else {
    if (shape.size() != 5) throw ConfigError("--shape takes N,D,M,K,V");
    j.update(cost_json(cost(shape[0], shape[1], shape[2], shape[3], shape[4], bits)));
  }
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Product-quantized lookup-table inference toolkit"};
  app.require_subcommand(1);

  ExperimentConfig cfg;
  TaskFlags flags;

  auto* train_cmd = app.add_subcommand("train", "pretrain a float model, replace layers, fine-tune with soft-PQ");
  add_task_options(train_cmd, cfg);
  add_model_options(train_cmd, cfg, flags);
  std::filesystem::path out = "model.lutn", float_out, metrics, from_float;
  train_cmd->add_option("--out", out, "model file")->capture_default_str();
  train_cmd->add_option("--float-out", float_out, "float twin (default <out>.float)");
  train_cmd->add_option("--metrics", metrics, "per-epoch CSV (default <out>.csv)");
  train_cmd->add_option("--from-float", from_float, "skip pretraining and start from this float model");

  auto* eval_cmd = app.add_subcommand("eval", "accuracy and per-layer error of a model file");
  ExperimentConfig eval_cfg;
  add_task_options(eval_cmd, eval_cfg);
  std::filesystem::path model_path, float_path;
  std::string encoder = "dist";
  eval_cmd->add_option("model", model_path, "model file")->required();
  eval_cmd->add_option("--float-model", float_path, "float twin for MSE");
  eval_cmd->add_option("--encoder", encoder, "dist | hash")->capture_default_str();

  auto* sweep_cmd = app.add_subcommand("sweep", "grid over K, V, replace_last_n, temperature and seed");
  ExperimentConfig sweep_cfg;
  TaskFlags sweep_flags;
  add_task_options(sweep_cmd, sweep_cfg);
  add_model_options(sweep_cmd, sweep_cfg, sweep_flags);
  std::vector<Index> grid_k{16}, grid_v{2};
  std::vector<int> grid_n{1};
  std::vector<std::string> grid_t{"learned"};
  std::vector<std::uint64_t> grid_seeds{42};
  std::filesystem::path sweep_out = "sweep.csv";
  sweep_cmd->add_option("--grid-centroids", grid_k, "K values")->delimiter(',')->capture_default_str();
  sweep_cmd->add_option("--grid-subvec", grid_v, "V values")->delimiter(',')->capture_default_str();
  sweep_cmd->add_option("--grid-replace-last", grid_n, "replace_last_n values")->delimiter(',')->capture_default_str();
  sweep_cmd->add_option("--grid-temperature", grid_t, "temperature modes")->delimiter(',')->capture_default_str();
  sweep_cmd->add_option("--grid-seeds", grid_seeds, "seeds")->delimiter(',')->capture_default_str();
  sweep_cmd->add_option("--out", sweep_out, "CSV, appended and resumed")->capture_default_str();

  auto* bench_cmd = app.add_subcommand("bench", "single-threaded LUT kernel vs dense reference timing");
  std::vector<Index> bn{1}, bd{768}, bm{768};
  Index bk = 16, bv = 32;
  int reps = 20;
  std::uint64_t bseed = 42;
  KernelPlan plan;
  std::filesystem::path bench_out;
  bench_cmd->add_option("--n", bn, "rows")->delimiter(',')->capture_default_str();
  bench_cmd->add_option("--d", bd, "inner dimension")->delimiter(',')->capture_default_str();
  bench_cmd->add_option("--m", bm, "output columns")->delimiter(',')->capture_default_str();
  bench_cmd->add_option("--k", bk, "centroids")->capture_default_str();
  bench_cmd->add_option("--v", bv, "sub-vector length")->capture_default_str();
  bench_cmd->add_option("--reps", reps, "timed repetitions")->capture_default_str();
  bench_cmd->add_option("--seed", bseed, "input seed")->capture_default_str();
  bench_cmd->add_option("--rows-per-tile", plan.rows_per_tile)->capture_default_str();
  bench_cmd->add_option("--centroids-per-tile", plan.centroids_per_tile)->capture_default_str();
  bench_cmd->add_option("--chunk", plan.accumulation_chunk, "codebooks per int16 partial")->capture_default_str();
  bench_cmd->add_option("--out", bench_out, "CSV to append to");

  auto* cost_cmd = app.add_subcommand("cost", "FLOPs and size of a model file or a single shape");
  std::filesystem::path cost_model;
  std::vector<Index> shape;
  Index cost_batch = 1;
  int bits = 8;
  cost_cmd->add_option("--model", cost_model, "model file");
  cost_cmd->add_option("--shape", shape, "N,D,M,K,V")->delimiter(',');
  cost_cmd->add_option("--batch", cost_batch, "N for a model file")->capture_default_str();
  cost_cmd->add_option("--table-bits", bits, "8 or 32")->capture_default_str();

  try {
    app.parse(argc, argv);
    if (train_cmd->parsed()) {
      finish_config(cfg, flags);
      return cmd_train(cfg, out, float_out, metrics, from_float);
    }
    if (eval_cmd->parsed()) return cmd_eval(eval_cfg, model_path, float_path, encoder);
    if (sweep_cmd->parsed()) {
      return cmd_sweep(sweep_cfg, sweep_flags, grid_k, grid_v, grid_n, grid_t, grid_seeds, sweep_out);
    }
    if (bench_cmd->parsed()) return cmd_bench(bn, bd, bm, bk, bv, plan, reps, bseed, bench_out);
    if (cost_cmd->parsed()) {
      if (cost_model.empty() == shape.empty()) throw ConfigError("cost needs exactly one of --model and --shape");
      return cmd_cost(cost_model, shape, cost_batch, bits);
    }
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
