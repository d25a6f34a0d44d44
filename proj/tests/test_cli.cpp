#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <sys/wait.h>

#include <json.hpp>

#include "gmc/bench.hpp"
#include "gmc/diagnostics.hpp"
#include "gmc/model_io.hpp"
#include "gmc/split.hpp"

namespace fs = std::filesystem;
using namespace gmc;

namespace {

struct RunResult {
  int status = -1;
  std::string output;  // stdout and stderr together
};

RunResult run(const std::string& args) {
  const std::string command = std::string(GMC_CLI_PATH) + " " + args + " 2>&1";
  RunResult r;
  FILE* pipe = popen(command.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), n);
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

std::map<std::string, double> read_metrics(const fs::path& p) {
  std::map<std::string, double> out;
  std::istringstream in(slurp(p));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    out[line.substr(0, comma)] = std::stod(line.substr(comma + 1));
  }
  return out;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("gmc_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

// Small but realistic: 1200 moons keep each fit to about a second.
const char* kMoons = "--dataset moons --n 1200 --seed 0";

}  // namespace

TEST_F(CliTest, UsageErrorsExitNonZero) {
  EXPECT_NE(run("").status, 0);
  EXPECT_NE(run("fit --out " + path("m.json")).status, 0);
  EXPECT_NE(run("fit --data " + path("missing.csv") + " --out " + path("m.json")).status, 0);
  EXPECT_NE(run("fit --dataset moons --data x.csv").status, 0);
  EXPECT_NE(run("fit --dataset iris").status, 0);
  EXPECT_NE(run("evaluate --dataset moons").status, 0);  // --model is required
  EXPECT_NE(run("evaluate --dataset moons --model " + path("none.json")).status, 0);
  std::ofstream(path("bad.json")) << R"({"max_epochs": 3, "no_such_key": 1})";
  const auto r = run(std::string("fit ") + kMoons + " --config " + path("bad.json") + " --out " + path("m.json"));
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.output.find("no_such_key"), std::string::npos) << r.output;
  EXPECT_FALSE(fs::exists(path("m.json")));
}

TEST_F(CliTest, FitWritesModelLogAndSummary) {
  const auto r = run(std::string("fit ") + kMoons + " --out " + path("m.json"));
  ASSERT_EQ(r.status, 0) << r.output;
  const ModelFile f = load_model(path("m.json"));
  EXPECT_EQ(f.model.class_count(), 2u);
  for (std::size_t c = 0; c < 2; ++c) {
    EXPECT_GE(f.model.planes.planes(c), 1u);
    EXPECT_LE(f.model.planes.planes(c), 4u);
  }
  EXPECT_TRUE(f.temperature);
  EXPECT_EQ(f.metadata["split"]["seed"], 0);
  EXPECT_EQ(f.metadata["dataset"]["fingerprint"],
            dataset_fingerprint(make_named_dataset("moons", 0, GeneratorParams{1200, {}, {}, {}})));
  EXPECT_TRUE(fs::exists(path("m.trainlog.csv")));
  EXPECT_TRUE(fs::exists(path("m.summary.txt")));
  EXPECT_EQ(slurp(path("m.trainlog.csv")).substr(0, 46), "epoch,train_loss,val_loss,alpha,lr,min_usage,m");
}

TEST_F(CliTest, SinglePlaneLinearFitIsLogistic) {
  const auto r = run(std::string("fit ") + kMoons + " --planes 1 --lift linear --out " + path("m.json"));
  ASSERT_EQ(r.status, 0) << r.output;
  const ModelFile f = load_model(path("m.json"));
  EXPECT_EQ(f.model.planes.planes_per_class(), (std::vector<std::size_t>{1, 1}));
  EXPECT_FALSE(f.model.pipeline.rff());
}

TEST_F(CliTest, FitAndEvaluateAreDeterministic) {
  for (const char* name : {"a", "b"}) {
    const std::string stem = path(name);
    ASSERT_EQ(run(std::string("fit ") + kMoons + " --out " + stem + ".json").status, 0);
    ASSERT_EQ(run(std::string("evaluate ") + kMoons + " --model " + stem + ".json --out " + stem + ".metrics.csv").status, 0);
  }
  EXPECT_EQ(slurp(path("a.json")), slurp(path("b.json")));
  EXPECT_EQ(slurp(path("a.trainlog.csv")), slurp(path("b.trainlog.csv")));
  EXPECT_EQ(slurp(path("a.summary.txt")), slurp(path("b.summary.txt")));
  EXPECT_EQ(slurp(path("a.metrics.csv")), slurp(path("b.metrics.csv")));
}

TEST_F(CliTest, EvaluateMatchesLibraryCalls) {
  ASSERT_EQ(run(std::string("fit ") + kMoons + " --out " + path("m.json")).status, 0);
  ASSERT_EQ(run(std::string("evaluate ") + kMoons + " --model " + path("m.json") + " --out " + path("metrics.csv")).status, 0);
  const auto metrics = read_metrics(path("metrics.csv"));

  const ModelFile f = load_model(path("m.json"));
  const Dataset ds = make_named_dataset("moons", 0, GeneratorParams{1200, {}, {}, {}});
  SplitSpec spec;
  spec.seed = 0;
  const Dataset test = stratified_split(ds, spec).test;
  const Matrix scores = class_scores(f.model, test.features);
  const auto predicted = predict(f.model, test.features);
  EXPECT_EQ(metrics.at("samples"), static_cast<double>(test.size()));
  EXPECT_EQ(metrics.at("accuracy"), accuracy(predicted, test.labels));
  EXPECT_EQ(metrics.at("macro_f1"), macro_f1(predicted, test.labels, 2));
  EXPECT_EQ(metrics.at("ece_before"), ece(predict_proba(f.model, test.features), test.labels).ece);
  EXPECT_EQ(metrics.at("temperature"), *f.temperature);
  EXPECT_EQ(metrics.at("ece_after"), ece(apply_temperature(scores, *f.temperature), test.labels).ece);
  const auto rs = responsibility_stats(f.model, test.features, test.labels);
  EXPECT_EQ(metrics.at("maxresp"), rs.maxresp);
  EXPECT_EQ(metrics.at("resp_entropy"), rs.resp_entropy);
  const auto usage = plane_usage(f.model, test.features, test.labels);
  double total = 0.0;
  for (std::size_t p = 0; p < usage.fractions[0].size(); ++p) {
    EXPECT_EQ(metrics.at("usage_pct_class_0_plane_" + std::to_string(p + 1)), 100.0 * usage.fractions[0][p]);
    total += metrics.at("usage_pct_class_0_plane_" + std::to_string(p + 1));
  }
  EXPECT_NEAR(total, 100.0, 1e-9);

  // Training split of an easy fit scores at least as well as the holdout.
  ASSERT_EQ(run(std::string("evaluate ") + kMoons + " --split train --model " + path("m.json") + " --out " +
                path("train.csv")).status, 0);
  EXPECT_GE(read_metrics(path("train.csv")).at("accuracy"), metrics.at("accuracy") - 0.01);
}

TEST_F(CliTest, PredictAndCalibrate) {
  ASSERT_EQ(run(std::string("fit ") + kMoons + " --out " + path("m.json")).status, 0);
  ASSERT_EQ(run(std::string("predict ") + kMoons + " --model " + path("m.json") + " --out " + path("p.csv")).status, 0);
  std::istringstream in(slurp(path("p.csv")));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "index,predicted,class,p_0,p_1");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 1200u);

  const double stored = *load_model(path("m.json")).temperature;
  ASSERT_EQ(run(std::string("calibrate ") + kMoons + " --model " + path("m.json") + " --out " + path("c.json")).status, 0);
  EXPECT_EQ(*load_model(path("c.json")).temperature, stored);
}

TEST_F(CliTest, GeneratedCsvRoundTripsThroughFit) {
  ASSERT_EQ(run(std::string("generate ") + kMoons + " --out " + path("moons.csv")).status, 0);
  const auto r = run("fit --data " + path("moons.csv") + " --seed 0 --max-epochs 20 --out " + path("m.json"));
  ASSERT_EQ(r.status, 0) << r.output;
  const auto e = run("evaluate --data " + path("moons.csv") + " --model " + path("m.json") + " --out " + path("e.csv"));
  ASSERT_EQ(e.status, 0) << e.output;
  EXPECT_GT(read_metrics(path("e.csv")).at("accuracy"), 0.8);
}

TEST_F(CliTest, InspectBundleHasManifest) {
  ASSERT_EQ(run(std::string("fit ") + kMoons + " --out " + path("m.json")).status, 0);
  const auto r = run(std::string("inspect ") + kMoons + " --model " + path("m.json") + " --resolution 40 --out " +
                     path("bundle"));
  ASSERT_EQ(r.status, 0) << r.output;
  const auto manifest = nlohmann::json::parse(slurp(path("bundle/manifest.json")));
  std::vector<std::string> names;
  for (const auto& f : manifest["files"]) {
    names.push_back(f["file"]);
    EXPECT_TRUE(fs::exists(dir_ / "bundle" / names.back())) << names.back();
  }
  for (const char* expect : {"plane_usage.csv", "metrics.csv", "saliency.csv", "reliability_before.svg",
                             "reliability_after.csv", "decision_regions.svg", "responsibility_class_0.svg"})
    EXPECT_NE(std::find(names.begin(), names.end(), expect), names.end()) << expect;

  // RFF models record saliency as unsupported and still write the rest.
  ASSERT_EQ(run(std::string("fit ") + kMoons + " --lift rff --rff-dim 64 --max-epochs 10 --out " + path("r.json")).status, 0);
  ASSERT_EQ(run(std::string("inspect ") + kMoons + " --model " + path("r.json") + " --resolution 20 --out " +
                path("rbundle")).status, 0);
  const auto rm = nlohmann::json::parse(slurp(path("rbundle/manifest.json")));
  ASSERT_FALSE(rm["unsupported"].empty());
  EXPECT_EQ(rm["unsupported"][0]["output"], "saliency");
  EXPECT_TRUE(fs::exists(path("rbundle/decision_regions.svg")));
  EXPECT_FALSE(fs::exists(path("rbundle/saliency.csv")));
}

TEST_F(CliTest, BenchWritesTables) {
  const auto r = run("bench --datasets moons --seeds 0,1 --lift linear --max-epochs 10 --skip-latency "
                     "--latency-budget 0.01 --max-inferences 2000 --scaling-dim 16 --out " + path("bench"));
  ASSERT_EQ(r.status, 0) << r.output;
  std::istringstream rows(slurp(path("bench/bench_rows.csv")));
  std::string line;
  std::size_t count = 0;
  while (std::getline(rows, line)) ++count;
  EXPECT_EQ(count, 3u);
  EXPECT_TRUE(fs::exists(path("bench/bench_summary.csv")));
  EXPECT_TRUE(fs::exists(path("bench/scaling.csv")));
  const auto report = nlohmann::json::parse(slurp(path("bench/bench.json")));
  EXPECT_TRUE(report.is_object());
}
