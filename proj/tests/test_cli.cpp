#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

#include "lutkit/container.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("lutkit_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  CliRun run(const std::string& args) const {
    const std::string cmd = "cd '" + dir_.string() + "' && '" LUTKIT_CLI "' " + args + " 2>/dev/null";
    CliRun r;
    FILE* p = popen(cmd.c_str(), "r");
    char buf[4096];
    for (std::size_t n; (n = std::fread(buf, 1, sizeof buf, p)) > 0;) r.out.append(buf, n);
    const int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
  }

  std::string read(const std::string& name) const {
    std::ifstream in(dir_ / name, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
  }

  fs::path dir_;
};

// Field names and value types, with numbers collapsed to "number" and each
// distinct array element shape listed once. The schema tag is kept verbatim.
json skeleton(const json& j) {
  if (j.is_object()) {
    json out = json::object();
    for (auto it = j.begin(); it != j.end(); ++it) out[it.key()] = it.key() == "schema" ? it.value() : skeleton(it.value());
    return out;
  }
  if (j.is_array()) {
    json out = json::array();
    for (const auto& e : j) {
      json s = skeleton(e);
      if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
    }
    return out;
  }
  if (j.is_number()) return "number";
  if (j.is_boolean()) return "boolean";
  if (j.is_string()) return "string";
  return "null";
}

std::string header_lines(const std::string& csv) {
  std::istringstream in(csv);
  std::string a, b;
  std::getline(in, a);
  std::getline(in, b);
  return a + "\n" + b + "\n";
}

void check_golden(const std::string& name, const std::string& actual) {
  const fs::path path = fs::path(LUTKIT_GOLDEN_DIR) / name;
  if (std::getenv("LUTKIT_UPDATE_GOLDEN")) {
    std::ofstream(path, std::ios::binary) << actual;
    return;
  }
  std::ifstream in(path, std::ios::binary);
  ASSERT_TRUE(in) << "missing golden file " << path;
  const std::string want{std::istreambuf_iterator<char>(in), {}};
  EXPECT_EQ(actual, want) << name;
}

void check_golden_json(const std::string& name, const std::string& stdout_text) {
  check_golden(name, skeleton(json::parse(stdout_text)).dump(2) + "\n");
}

std::vector<std::map<std::string, std::string>> csv_rows(const std::string& text) {
  std::istringstream in(text);
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

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

const std::string kSmall = "--per-class 150 --hidden 16 16 16 --float-epochs 20 --epochs 3 --centroids 8 --subvec 4";

}  // namespace

TEST_F(Cli, TrainIsDeterministicAndMatchesSchemas) {
  const CliRun a = run("train " + kSmall + " --replace-last 2 --seed 42 --out a.lutn");
  ASSERT_EQ(a.code, 0);
  const CliRun b = run("train " + kSmall + " --replace-last 2 --seed 42 --out b.lutn");
  ASSERT_EQ(b.code, 0);
  EXPECT_EQ(read("a.lutn"), read("b.lutn"));
  EXPECT_EQ(read("a.lutn.float"), read("b.lutn.float"));
  const std::string metrics = read("a.lutn.csv");
  EXPECT_EQ(csv_rows(metrics), csv_rows(read("b.lutn.csv")));

  check_golden_json("train.json", a.out);
  check_golden("train_metrics.csv", header_lines(metrics));

  const CliRun other = run("train " + kSmall + " --replace-last 2 --seed 43 --out c.lutn");
  ASSERT_EQ(other.code, 0);
  EXPECT_NE(read("a.lutn"), read("c.lutn"));
}

TEST_F(Cli, ReplaceNothingTrainsADenseModel) {
  ASSERT_EQ(run("train " + kSmall + " --replace-last 0 --out d.lutn").code, 0);
  const lutkit::ModelSpec m = lutkit::load_model(dir_ / "d.lutn");
  EXPECT_EQ(m.replaced_count(), 0u);
  const CliRun c = run("cost --model d.lutn --batch 4");
  ASSERT_EQ(c.code, 0);
  EXPECT_EQ(json::parse(c.out)["total"]["flops_reduction"].get<double>(), 1.0);
}

TEST_F(Cli, EvalReportsBothEncoders) {
  ASSERT_EQ(run("train " + kSmall + " --replace-last 2 --hash-levels 6 --out h.lutn").code, 0);
  const CliRun self = run("eval h.lutn.float --per-class 150 --float-model h.lutn.float");
  ASSERT_EQ(self.code, 0);
  EXPECT_EQ(json::parse(self.out)["output_mse"].get<double>(), 0.0);

  const CliRun dist = run("eval h.lutn --per-class 150 --float-model h.lutn.float");
  ASSERT_EQ(dist.code, 0);
  check_golden_json("eval.json", dist.out);
  const json d = json::parse(dist.out);
  EXPECT_GT(d["layers"][0]["mse"].get<double>(), 0.0);

  const CliRun hash = run("eval h.lutn --per-class 150 --float-model h.lutn.float --encoder hash");
  ASSERT_EQ(hash.code, 0);
  check_golden_json("eval_hash.json", hash.out);
  const json h = json::parse(hash.out);
  EXPECT_EQ(h["encoder"], "hash");
  EXPECT_GT(h["layers"][0]["hash_agreement"].get<double>(), 0.5);
}

TEST_F(Cli, CostSchemas) {
  const CliRun shape = run("cost --shape 1 768 768 16 32");
  ASSERT_EQ(shape.code, 0);
  check_golden_json("cost_shape.json", shape.out);
  const json j = json::parse(shape.out);
  EXPECT_DOUBLE_EQ(j["flops_reduction"].get<double>(), 19.2);
  EXPECT_NEAR(j["size_reduction_with_centroids"].get<double>(), 6.857, 1e-3);

  ASSERT_EQ(run("train " + kSmall + " --replace-last 2 --out c.lutn").code, 0);
  const CliRun model = run("cost --model c.lutn --batch 2");
  ASSERT_EQ(model.code, 0);
  check_golden_json("cost_model.json", model.out);
}

TEST_F(Cli, BenchSchema) {
  const CliRun r = run("bench --n 2 --d 64 --m 32 64 --k 16 --v 8 --reps 5 --out bench.csv");
  ASSERT_EQ(r.code, 0);
  const std::string csv = read("bench.csv");
  check_golden("bench.csv", header_lines(csv));
  EXPECT_EQ(csv_rows(csv).size(), 2u);
}

TEST_F(Cli, SweepResumes) {
  const std::string args = "sweep " + kSmall + " --grid-centroids 4 8 --grid-replace-last 1 --grid-seeds 1 2 --out s.csv";
  ASSERT_EQ(run(args).code, 0);
  const std::string first = read("s.csv");
  check_golden("sweep.csv", header_lines(first));
  ASSERT_EQ(csv_rows(first).size(), 4u);

  ASSERT_EQ(run(args).code, 0);
  EXPECT_EQ(read("s.csv"), first);

  // Drop the last row; a rerun fills in exactly that cell again.
  std::string cut = first.substr(0, first.rfind('\n', first.size() - 2) + 1);
  std::ofstream(dir_ / "s.csv", std::ios::binary) << cut;
  ASSERT_EQ(run(args).code, 0);
  EXPECT_EQ(read("s.csv"), first);
}

TEST_F(Cli, MoreCentroidsHelp) {
  const CliRun r = run("sweep --per-class 500 --epochs 20 --grid-subvec 8 --grid-centroids 4 8 16 --grid-replace-last 3 "
                    "--grid-seeds 1 2 3 --out k.csv");
  ASSERT_EQ(r.code, 0);
  std::map<int, std::vector<double>> acc;
  for (const auto& row : csv_rows(read("k.csv"))) acc[std::stoi(row.at("k"))].push_back(std::stod(row.at("accuracy")));
  ASSERT_EQ(acc.size(), 3u);
  EXPECT_LE(median(acc[4]), median(acc[8]));
  EXPECT_LE(median(acc[8]), median(acc[16]));
}

TEST_F(Cli, ReplacingMoreLayersHurtsWithoutTraining) {
  const CliRun r = run("sweep --per-class 500 --epochs 1 --grid-subvec 8 --grid-centroids 16 --grid-replace-last 1 2 3 "
                    "--grid-seeds 1 2 3 --out n.csv");
  ASSERT_EQ(r.code, 0);
  std::map<int, std::vector<double>> acc;
  for (const auto& row : csv_rows(read("n.csv")))
    acc[std::stoi(row.at("replace_last_n"))].push_back(std::stod(row.at("vanilla_accuracy")));
  ASSERT_EQ(acc.size(), 3u);
  EXPECT_GE(median(acc[1]), median(acc[2]));
  EXPECT_GE(median(acc[2]), median(acc[3]));
}

TEST_F(Cli, TemperatureAblationWritesTwoMetricFiles) {
  ASSERT_EQ(run("train " + kSmall + " --temperature fixed:1 --out fixed.lutn").code, 0);
  ASSERT_EQ(run("train " + kSmall + " --temperature learned --out learned.lutn").code, 0);
  const auto fixed = csv_rows(read("fixed.lutn.csv")), learned = csv_rows(read("learned.lutn.csv"));
  ASSERT_FALSE(fixed.empty());
  for (const auto& row : fixed) {
    if (row.at("phase") != "lut") continue;
    EXPECT_EQ(std::stod(row.at("temperature").substr(0, row.at("temperature").find(';'))), 1.0);
  }
  EXPECT_NE(learned.back().at("temperature"), fixed.back().at("temperature"));
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run("train --task nope").code, 2);
  EXPECT_EQ(run("train --centroids 0").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("eval missing.lutn").code, 3);
  EXPECT_EQ(run("train --task csv --train-file nothing.csv --test-file nothing.csv").code, 3);
  EXPECT_EQ(run("train " + kSmall + " --float-lr 1e30 --out x.lutn").code, 4);
}
