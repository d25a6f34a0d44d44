#include <gtest/gtest.h>

#include <sstream>

#include "gmc/bench.hpp"

using namespace gmc;

TEST(NamedDatasets, DefaultsAndOverrides) {
  EXPECT_EQ(make_named_dataset("moons", 0).size(), 4000u);
  EXPECT_EQ(make_named_dataset("circles", 0).size(), 4000u);
  EXPECT_EQ(make_named_dataset("aniso", 0).size(), 4500u);
  EXPECT_EQ(make_named_dataset("spirals", 0).size(), 2000u);
  EXPECT_EQ(make_named_dataset("aniso", 0).class_count, 3u);
  GeneratorParams p;
  p.n = 100;
  EXPECT_EQ(make_named_dataset("moons", 0, p).size(), 100u);
  EXPECT_THROW(make_named_dataset("iris", 0), std::invalid_argument);
  EXPECT_EQ(synthetic_dataset_names().size(), 4u);
}

TEST(NamedDatasets, Fingerprint) {
  const Dataset a = make_named_dataset("moons", 1);
  EXPECT_EQ(dataset_fingerprint(a), dataset_fingerprint(make_named_dataset("moons", 1)));
  EXPECT_NE(dataset_fingerprint(a), dataset_fingerprint(make_named_dataset("moons", 2)));
  EXPECT_EQ(dataset_fingerprint(a).size(), 16u);
  Dataset b = a;
  b.labels[0] = 1 - b.labels[0];
  EXPECT_NE(dataset_fingerprint(a), dataset_fingerprint(b));
}

TEST(Statistics, MeanStd) {
  const std::vector<double> v = {2, 4, 4, 4, 5, 5, 7, 9};
  const auto m = mean_std(v);
  EXPECT_EQ(m.mean, 5.0);
  EXPECT_NEAR(m.std, std::sqrt(32.0 / 7.0), 1e-15);
  EXPECT_EQ(mean_std(std::vector<double>{3.5}).std, 0.0);
}

TEST(Statistics, LinearFit) {
  const std::vector<double> x = {2, 4, 8, 16};
  std::vector<double> y;
  for (double v : x) y.push_back(3.0 * v + 10.0);
  const auto exact = linear_fit(x, y);
  EXPECT_NEAR(exact.slope, 3.0, 1e-12);
  EXPECT_NEAR(exact.intercept, 10.0, 1e-12);
  EXPECT_NEAR(exact.r_squared, 1.0, 1e-12);

  // x = 1..4, y = 1,3,2,4: slope 0.8, intercept 0.5, R^2 = 0.64.
  const auto hand = linear_fit(std::vector<double>{1, 2, 3, 4}, std::vector<double>{1, 3, 2, 4});
  EXPECT_NEAR(hand.slope, 0.8, 1e-12);
  EXPECT_NEAR(hand.intercept, 0.5, 1e-12);
  EXPECT_NEAR(hand.r_squared, 0.64, 1e-12);
}

TEST(Latency, ProtocolLimits) {
  const GmcModel m = synthetic_timing_model(16, 4, 0);
  Matrix x(10, 16);
  LatencyProtocol p;
  p.max_inferences = 1000;
  const auto r = measure_latency(m, x, p);
  EXPECT_EQ(r.inferences, 1000u);
  EXPECT_GT(r.ns_per_example, 0.0);
  p.max_inferences = 100000000;
  p.time_budget_seconds = 0.02;
  const auto capped = measure_latency(m, x, p);
  EXPECT_LT(capped.inferences, p.max_inferences);
  EXPECT_THROW(measure_latency(m, Matrix(2, 3)), std::invalid_argument);
}

TEST(Latency, ScalingSweepShape) {
  LatencyProtocol p;
  p.time_budget_seconds = 0.02;
  p.max_inferences = 20000;
  const auto r = latency_scaling(kScalingPlaneTotals, 32, 0, p, 1);
  ASSERT_EQ(r.points.size(), 4u);
  EXPECT_EQ(r.working_dim, 32u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(r.points[i].total_planes, kScalingPlaneTotals[i]);
  const auto m = synthetic_timing_model(32, 8, 1);
  EXPECT_EQ(m.planes.planes_per_class(), (std::vector<std::size_t>{4, 4}));
  EXPECT_THROW(synthetic_timing_model(8, 3, 0), std::invalid_argument);
}

TEST(BenchCell, RecordsMetricsDeterministically) {
  RecipeOptions o;
  o.train.max_epochs = 30;
  GeneratorParams p;
  p.n = 500;
  const auto a = run_bench_cell("moons", 1, o, p);
  const auto b = run_bench_cell("moons", 1, o, p);
  ASSERT_TRUE(a.row.ok) << a.row.error;
  ASSERT_TRUE(a.fit);
  EXPECT_EQ(a.row.accuracy, b.row.accuracy);
  EXPECT_EQ(a.row.ece_after, b.row.ece_after);
  EXPECT_EQ(a.row.temperature, b.row.temperature);
  EXPECT_EQ(a.row.planes_per_class, a.fit->budget.planes);
  EXPECT_GT(a.row.accuracy, 0.8);
  EXPECT_EQ(a.row.lift, "linear");
  EXPECT_EQ(a.row.latency_ns, 0.0);
}

TEST(BenchCell, FailuresAreRecorded) {
  const auto r = run_bench_cell("no-such-data", 0, RecipeOptions{});
  EXPECT_FALSE(r.row.ok);
  EXPECT_FALSE(r.fit);
  EXPECT_NE(r.row.error.find("unknown dataset"), std::string::npos);
}

TEST(BenchAggregate, RecomputedFromRows) {
  std::vector<BenchRow> rows(5);
  const double acc[5] = {0.9, 0.8, 0.7, 0.95, 0.1};
  for (std::size_t i = 0; i < 5; ++i) {
    rows[i].dataset = i < 3 ? "moons" : "circles";
    rows[i].seed = i;
    rows[i].ok = i != 4;
    rows[i].accuracy = acc[i];
    rows[i].ece_after = 0.01 * static_cast<double>(i);
  }
  const auto aggs = aggregate_rows(rows);
  ASSERT_EQ(aggs.size(), 2u);
  EXPECT_EQ(aggs[0].dataset, "moons");
  EXPECT_EQ(aggs[0].seeds, 3u);
  EXPECT_NEAR(aggs[0].accuracy.mean, 0.8, 1e-15);
  EXPECT_NEAR(aggs[0].accuracy.std, 0.1, 1e-15);
  EXPECT_NEAR(aggs[0].ece_after.mean, 0.01, 1e-15);
  // The failed circles row is left out.
  EXPECT_EQ(aggs[1].seeds, 1u);
  EXPECT_EQ(aggs[1].accuracy.mean, 0.95);
}

TEST(BenchCsv, QuotingAndColumns) {
  EXPECT_EQ(csv_field("plain"), "plain");
  EXPECT_EQ(csv_field("rff(D=1024,gamma=0.5)"), "\"rff(D=1024,gamma=0.5)\"");
  EXPECT_EQ(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");

  BenchRow r;
  r.dataset = "circles";
  r.ok = true;
  r.lift = "rff(D=1024,gamma=0.5)";
  r.planes_per_class = {2, 3};
  std::ostringstream out;
  write_bench_rows_csv(out, std::vector<BenchRow>{r});
  const std::string text = out.str();
  const std::string header = text.substr(0, text.find('\n'));
  EXPECT_EQ(header,
            "dataset,seed,status,accuracy,macro_f1,ece_before,ece_after,temperature,train_seconds,latency_ns,lift,"
            "planes_per_class,error");
  EXPECT_NE(text.find(",\"rff(D=1024,gamma=0.5)\",2;3,\n"), std::string::npos);

  ScalingReport s;
  s.working_dim = 128;
  s.points = {{2, 100.0}, {4, 200.0}};
  std::ostringstream sc;
  write_scaling_csv(sc, s);
  EXPECT_EQ(sc.str(), "total_planes,working_dim,ns_per_example\n2,128,100\n4,128,200\n");
}
