#include "lutkit/experiment.hpp"

namespace lutkit {

ExperimentConfig::ExperimentConfig() {
  float_train.lr_weight = 0.05f;
  float_train.epochs = 60;
  lut_train.lr_weight = 0.01f;
  lut_train.epochs = 40;
  policy.replace_last_n = 3;
}

void ExperimentConfig::validate() const {
  if (task != "toy-spiral" && task != "toy-gauss" && task != "idx" && task != "csv") {
    throw ConfigError("unknown task '" + task + "' (toy-spiral, toy-gauss, idx, csv)");
  }
  if (model != "mlp" && model != "tinycnn") throw ConfigError("unknown model '" + model + "' (mlp, tinycnn)");
  if (task == "idx" || task == "csv") {
    if (train_path.empty() || test_path.empty()) throw ConfigError(task + " task needs train and test files");
    if (task == "idx" && (train_labels.empty() || test_labels.empty())) throw ConfigError("idx task needs label files");
  }
  if (model == "tinycnn" && task != "idx") throw ConfigError("tinycnn needs image data (task idx)");
  if (per_class < 1 || classes < 2 || gauss_dims < 1) throw ConfigError("toy task sizes must be positive");
  if (hash_levels < 0 || hash_levels > kMaxHashLevels) {
    throw ConfigError("hash levels must be in [0, " + std::to_string(kMaxHashLevels) + "]");
  }
  policy.validate();
  float_train.validate();
  lut_train.validate();
}

TaskData load_task(const ExperimentConfig& cfg) {
  cfg.validate();
  TaskData t;
  Rng rng(cfg.seed);
  const Index test_per_class = std::max<Index>(1, cfg.per_class / 4);
  if (cfg.task == "toy-spiral") {
    Rng a = rng.split(), b = rng.split();
    t.train = make_spiral(cfg.per_class, cfg.classes, cfg.spiral_turns, cfg.spiral_noise, a);
    t.test = make_spiral(test_per_class, cfg.classes, cfg.spiral_turns, cfg.spiral_noise, b);
  } else if (cfg.task == "toy-gauss") {
    const std::uint64_t means = rng.next_u64();
    Rng a = rng.split(), b = rng.split();
    t.train = make_gauss(cfg.per_class, cfg.classes, cfg.gauss_dims, cfg.gauss_spread, means, a);
    t.test = make_gauss(test_per_class, cfg.classes, cfg.gauss_dims, cfg.gauss_spread, means, b);
  } else if (cfg.task == "csv") {
    t.train = from_labeled(read_csv_dataset(cfg.train_path));
    t.test = from_labeled(read_csv_dataset(cfg.test_path));
  } else {
    auto load = [](const std::filesystem::path& images, const std::filesystem::path& labels) {
      Dataset d;
      d.features = read_idx_images(images, &d.height, &d.width);
      d.labels = read_idx_labels(labels);
      d.channels = 1;
      return d;
    };
    t.train = load(cfg.train_path, cfg.train_labels);
    t.test = load(cfg.test_path, cfg.test_labels);
  }
  if (cfg.task == "csv" || cfg.task == "idx") {
    Index classes = 0;
    for (const Dataset* d : {&t.train, &t.test}) {
      for (auto l : d->labels) classes = std::max<Index>(classes, Index{l} + 1);
    }
    t.train.num_classes = t.test.num_classes = classes;
  }
  t.train.validate();
  t.test.validate();
  if (t.train.features.cols() != t.test.features.cols()) throw DataError("train and test feature widths differ");
  return t;
}

ModelSpec make_model(const ExperimentConfig& cfg, const Dataset& train, Rng& rng) {
  if (cfg.model == "tinycnn") {
    if (!train.is_image()) throw ConfigError("tinycnn needs image data");
    return make_tiny_cnn(train.channels, train.height, train.width, train.num_classes, rng);
  }
  return make_mlp(train.features.cols(), cfg.hidden, train.num_classes, rng);
}

EvalReport evaluate(const ModelSpec& model, const Dataset& data, const InferenceOptions& opts,
                    const ModelSpec* float_twin) {
  EvalReport r;
  const auto trace = forward_trace(model, data.features, opts);
  r.accuracy = accuracy(trace.back(), data.labels);

  std::vector<MatrixF32> reference;
  if (float_twin) {
    InferenceOptions dense = opts;
    dense.use_lut = false;
    reference = forward_trace(*float_twin, data.features, dense);
    if (reference.size() != trace.size()) throw ShapeError("float twin has a different layer count");
    r.output_mse = mse(trace.back(), reference.back());
  }

  std::vector<MatrixF32> inputs;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const Layer& l = model.layers[i];
    if (!l.replaced()) continue;
    LayerReport lr;
    lr.layer = i;
    if (float_twin) lr.mse = mse(trace[i], reference[i]);
    if (!l.lut->hash_trees.empty()) {
      if (inputs.empty()) {
        InferenceOptions dist = opts;
        dist.encoder = EncoderKind::Distance;
        inputs = linear_inputs(model, data.features, dist);
      }
      lr.hash_agreement = hash_agreement(inputs[i], l.lut->hash_trees, l.lut->books);
    }
    r.layers.push_back(lr);
  }
  return r;
}

namespace {

// Independent streams per stage so that reusing a pretrained model leaves
// the later stages unchanged.
struct Streams {
  Rng model, init, hash;
  std::uint64_t float_seed, lut_seed;

  explicit Streams(std::uint64_t seed) : model(0), init(0), hash(0) {
    Rng root(seed ^ 0x6c75746b69747275ull);
    model = root.split();
    init = root.split();
    hash = root.split();
    float_seed = root.next_u64();
    lut_seed = root.next_u64();
  }
};

}  // namespace

ModelSpec pretrain_float(const ExperimentConfig& cfg, const TaskData& data, std::vector<EpochMetrics>* history) {
  Streams st(cfg.seed);
  ModelSpec m = make_model(cfg, data.train, st.model);
  TrainConfig tc = cfg.float_train;
  tc.seed = st.float_seed;
  auto h = train(m, data.train, tc);
  if (history) *history = std::move(h);
  return m;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const ModelSpec* pretrained) {
  const TaskData data = load_task(cfg);
  ExperimentResult res;
  Streams st(cfg.seed);
  res.float_model = pretrained ? *pretrained : pretrain_float(cfg, data, &res.float_history);
  const InferenceOptions opts;
  res.float_accuracy = accuracy(forward(res.float_model, data.test.features, opts), data.test.labels);

  res.lut_model = res.float_model;
  init_from_float(res.lut_model, data.train.features, cfg.policy, st.init);
  res.vanilla = evaluate(res.lut_model, data.test, opts, &res.float_model);

  TrainConfig tc = cfg.lut_train;
  tc.seed = st.lut_seed;
  if (res.lut_model.replaced_count() > 0) {
    res.lut_history = train(res.lut_model, data.train, tc, &res.float_model);
  }
  res.tuned = evaluate(res.lut_model, data.test, opts, &res.float_model);

  if (cfg.hash_levels > 0 && res.lut_model.replaced_count() > 0) {
    HashTreeOptions ho;
    ho.levels = cfg.hash_levels;
    ho.max_samples = cfg.hash_samples;
    build_model_hash_trees(res.lut_model, data.train.features, ho, st.hash);
    InferenceOptions hashed = opts;
    hashed.encoder = EncoderKind::Hash;
    res.hashed = evaluate(res.lut_model, data.test, hashed, &res.float_model);
  }
  return res;
}

}  // namespace lutkit
