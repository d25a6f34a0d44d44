#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gmc/calibration.hpp"
#include "gmc/datasets.hpp"
#include "gmc/diagnostics.hpp"
#include "gmc/recipe.hpp"
#include "gmc/split.hpp"

namespace gmc {

// ---------------------------------------------------------------------------
// Named synthetic datasets
// ---------------------------------------------------------------------------

/// Generator parameters; unset fields take the per-dataset defaults.
struct GeneratorParams {
  std::optional<std::size_t> n;
  std::optional<double> noise;         // moons, circles
  std::optional<double> radius_ratio;  // circles
  std::optional<double> turns;         // spirals
};

inline const std::vector<std::string>& synthetic_dataset_names() {
  static const std::vector<std::string> names = {"moons", "circles", "aniso", "spirals"};
  return names;
}

inline Dataset make_named_dataset(const std::string& name, std::uint64_t seed, const GeneratorParams& p = {}) {
  if (name == "moons") return make_moons(p.n.value_or(4000), p.noise.value_or(0.25), seed);
  if (name == "circles")
    return make_circles(p.n.value_or(4000), p.radius_ratio.value_or(0.5), p.noise.value_or(0.08), seed);
  if (name == "aniso") return make_aniso_blobs(p.n.value_or(4500), seed);
  if (name == "spirals") return make_two_spirals(p.n.value_or(2000), p.turns.value_or(2.0), seed);
  throw std::invalid_argument("unknown dataset '" + name + "' (expected moons, circles, aniso or spirals)");
}

/// FNV-1a over labels and the bit patterns of the features.
inline std::string dataset_fingerprint(const Dataset& ds) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  const std::uint64_t shape[3] = {ds.features.rows(), ds.features.cols(), ds.class_count};
  mix(shape, sizeof shape);
  for (double v : ds.features.values()) mix(&v, sizeof v);
  for (std::size_t y : ds.labels) {
    const std::uint64_t v = y;
    mix(&v, sizeof v);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample (n - 1); 0 for a single value
};

inline MeanStd mean_std(std::span<const double> v) {
  MeanStd out;
  if (v.empty()) return out;
  for (double x : v) out.mean += x;
  out.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - out.mean) * (x - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return out;
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

/// Ordinary least squares y = a + b x.
inline LinearFit linear_fit(std::span<const double> x, std::span<const double> y) {
  detail::require(x.size() == y.size() && x.size() >= 2, "linear_fit: need at least two paired points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  detail::require(sxx > 0.0, "linear_fit: x values are all equal");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return f;
}

// ---------------------------------------------------------------------------
// Latency
// ---------------------------------------------------------------------------

struct LatencyProtocol {
  std::size_t warmup_passes = 5;
  std::size_t max_inferences = 100000;
  double time_budget_seconds = 1.0;
};

struct LatencyResult {
  double ns_per_example = 0.0;
  std::size_t inferences = 0;
};

/// Single-threaded, batch size 1: warm-up passes over `x`, then cycles rows
/// until `max_inferences` or the time budget is reached.
inline LatencyResult measure_latency(const GmcModel& model, const Matrix& x, const LatencyProtocol& protocol = {}) {
  detail::require(x.rows() > 0 && x.cols() == model.input_dim(), "measure_latency: need rows matching the model");
  using clock = std::chrono::steady_clock;
  InferenceWorkspace ws(model);
  volatile double sink = 0.0;
  for (std::size_t pass = 0; pass < protocol.warmup_passes; ++pass)
    for (std::size_t r = 0; r < x.rows(); ++r) sink = sink + forward(model, x.row(r), ws).posterior[0];

  // Check the clock only every `chunk` inferences to keep overhead out.
  constexpr std::size_t chunk = 256;
  const auto start = clock::now();
  const auto budget = std::chrono::duration<double>(protocol.time_budget_seconds);
  std::size_t done = 0, row = 0;
  while (done < protocol.max_inferences) {
    const std::size_t stop = std::min(done + chunk, protocol.max_inferences);
    for (; done < stop; ++done) {
      sink = sink + forward(model, x.row(row), ws).posterior[0];
      if (++row == x.rows()) row = 0;
    }
    if (clock::now() - start >= budget) break;
  }
  const double elapsed = std::chrono::duration<double, std::nano>(clock::now() - start).count();
  return {elapsed / static_cast<double>(done), done};
}

struct ScalingPoint {
  std::size_t total_planes = 0;
  double ns_per_example = 0.0;
};

struct ScalingReport {
  std::size_t working_dim = 0;
  std::vector<ScalingPoint> points;
  LinearFit fit;
};

inline const std::vector<std::size_t> kScalingPlaneTotals = {2, 4, 8, 16};
inline constexpr std::size_t kScalingWorkingDim = 128;

/// Random two-class linear-pipeline model with `total_planes` planes split
/// evenly and working dimension `dim`; parameters are irrelevant to timing.
inline GmcModel synthetic_timing_model(std::size_t dim, std::size_t total_planes, std::uint64_t seed) {
  detail::require(total_planes >= 2 && total_planes % 2 == 0, "synthetic_timing_model: need an even plane total >= 2");
  Rng rng = make_rng(seed, 0x7157);
  std::normal_distribution<double> normal(0.0, 1.0);
  Standardizer st;
  st.mean.assign(dim, 0.0);
  st.scale.assign(dim, 1.0);
  GmcModel model;
  model.pipeline = FeaturePipeline(std::move(st), std::nullopt, std::nullopt);
  model.planes.offsets = {0, total_planes / 2, total_planes};
  model.planes.weights = Matrix(total_planes, dim);
  for (double& w : model.planes.weights.values()) w = 0.1 * normal(rng);
  model.planes.biases.resize(total_planes);
  for (double& b : model.planes.biases) b = 0.1 * normal(rng);
  model.alpha = 6.0;
  return model;
}

/// Per-example latency against the plane total at fixed working dimension.
/// Repeats run round-robin over the plane totals so a slow stretch on a
/// shared CPU hits every point alike. Interference only adds time, so each
/// point keeps the fastest of its `repeats` measurements.
inline ScalingReport latency_scaling(std::span<const std::size_t> totals = kScalingPlaneTotals,
                                     std::size_t dim = kScalingWorkingDim, std::uint64_t seed = 0,
                                     const LatencyProtocol& protocol = {}, std::size_t repeats = 7) {
  ScalingReport report;
  report.working_dim = dim;
  Rng rng = make_rng(seed, 0x7158);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix x(256, dim);
  for (double& v : x.values()) v = normal(rng);
  std::vector<GmcModel> models;
  for (std::size_t total : totals) models.push_back(synthetic_timing_model(dim, total, seed));
  std::vector<std::vector<double>> samples(models.size());
  for (std::size_t r = 0; r < std::max<std::size_t>(repeats, 1); ++r)
    for (std::size_t k = 0; k < models.size(); ++k) samples[k].push_back(measure_latency(models[k], x, protocol).ns_per_example);
  std::vector<double> xs, ys;
  for (std::size_t k = 0; k < models.size(); ++k) {
    const double fastest = *std::min_element(samples[k].begin(), samples[k].end());
    report.points.push_back({totals[k], fastest});
    xs.push_back(static_cast<double>(totals[k]));
    ys.push_back(fastest);
  }
  if (xs.size() >= 2) report.fit = linear_fit(xs, ys);
  return report;
}

// ---------------------------------------------------------------------------
// Benchmark cells
// ---------------------------------------------------------------------------

struct BenchRow {
  std::string dataset;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double ece_before = 0.0;
  double ece_after = 0.0;
  double temperature = 1.0;
  double train_seconds = 0.0;  // timing
  double latency_ns = 0.0;     // timing
  std::string lift;
  std::vector<std::size_t> planes_per_class;
};

/// Recipe options for one seed: every randomized stage derives from `seed`.
inline RecipeOptions seeded_options(RecipeOptions options, std::uint64_t seed) {
  options.pipeline.seed = seed;
  options.init.seed = seed;
  options.train.seed = seed;
  return options;
}

struct CellOutcome {
  BenchRow row;
  std::optional<RecipeResult> fit;
};

/// Generate, split 60/20/20, fit the recipe, score the test split.
inline CellOutcome run_bench_cell(const std::string& dataset, std::uint64_t seed, const RecipeOptions& options,
                                  const GeneratorParams& params = {}, std::optional<LatencyProtocol> latency = {}) {
  CellOutcome out;
  BenchRow& row = out.row;
  row.dataset = dataset;
  row.seed = seed;
  try {
    const Dataset ds = make_named_dataset(dataset, seed, params);
    SplitSpec spec;
    spec.seed = seed;
    const SplitResult split = stratified_split(ds, spec);
    const auto t0 = std::chrono::steady_clock::now();
    RecipeResult fit = train_recipe(split.train, split.val, seeded_options(options, seed));
    row.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const Matrix scores = class_scores(fit.model, split.test.features);
    const Matrix probs = apply_temperature(scores, 1.0);
    const auto predicted = argmax_rows(probs);
    row.accuracy = accuracy(predicted, split.test.labels);
    row.macro_f1 = macro_f1(predicted, split.test.labels, ds.class_count);
    row.ece_before = ece(probs, split.test.labels).ece;
    row.temperature = fit.temperature ? fit.temperature->temperature : 1.0;
    row.ece_after = ece(apply_temperature(scores, row.temperature), split.test.labels).ece;
    row.lift = fit.pipeline_config.describe();
    row.planes_per_class = fit.budget.planes;
    if (latency) row.latency_ns = measure_latency(fit.model, split.test.features, *latency).ns_per_example;
    row.ok = true;
    out.fit = std::move(fit);
  } catch (const std::exception& e) {
    row.ok = false;
    row.error = e.what();
  }
  return out;
}

struct BenchAggregate {
  std::string dataset;
  std::size_t seeds = 0;  // successful cells
  MeanStd accuracy, macro_f1, ece_before, ece_after, train_seconds, latency_ns;
};

inline std::vector<BenchAggregate> aggregate_rows(std::span<const BenchRow> rows) {
  std::vector<std::string> order;
  for (const auto& r : rows)
    if (std::find(order.begin(), order.end(), r.dataset) == order.end()) order.push_back(r.dataset);
  std::vector<BenchAggregate> out;
  for (const auto& name : order) {
    std::vector<double> acc, f1, eb, ea, ts, lat;
    for (const auto& r : rows) {
      if (r.dataset != name || !r.ok) continue;
      acc.push_back(r.accuracy);
      f1.push_back(r.macro_f1);
      eb.push_back(r.ece_before);
      ea.push_back(r.ece_after);
      ts.push_back(r.train_seconds);
      lat.push_back(r.latency_ns);
    }
    BenchAggregate a;
    a.dataset = name;
    a.seeds = acc.size();
    a.accuracy = mean_std(acc);
    a.macro_f1 = mean_std(f1);
    a.ece_before = mean_std(eb);
    a.ece_after = mean_std(ea);
    a.train_seconds = mean_std(ts);
    a.latency_ns = mean_std(lat);
    out.push_back(a);
  }
  return out;
}

inline std::string join_sizes(std::span<const std::size_t> v, char sep = ';') {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += std::to_string(v[i]);
  }
  return s;
}

/// Quotes a CSV field when it contains a comma, quote or line break.
inline std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\r\n") == std::string::npos) return text;
  std::string quoted = "\"";
  for (char ch : text) {
    if (ch == '"') quoted += '"';
    quoted += ch;
  }
  return quoted + '"';
}

inline void write_bench_rows_csv(std::ostream& out, std::span<const BenchRow> rows) {
  out.precision(17);
  out << "dataset,seed,status,accuracy,macro_f1,ece_before,ece_after,temperature,train_seconds,latency_ns,lift,"
         "planes_per_class,error\n";
  for (const auto& r : rows) {
    out << csv_field(r.dataset) << ',' << r.seed << ',' << (r.ok ? "ok" : "failed") << ',' << r.accuracy << ','
        << r.macro_f1 << ',' << r.ece_before << ',' << r.ece_after << ',' << r.temperature << ',' << r.train_seconds
        << ',' << r.latency_ns << ',' << csv_field(r.lift) << ',' << join_sizes(r.planes_per_class) << ','
        << csv_field(r.error) << '\n';
  }
}

inline void write_bench_summary_csv(std::ostream& out, std::span<const BenchAggregate> aggs) {
  out.precision(17);
  out << "dataset,seeds,accuracy_mean,accuracy_std,macro_f1_mean,macro_f1_std,ece_before_mean,ece_before_std,"
         "ece_after_mean,ece_after_std,train_seconds_mean,train_seconds_std,latency_ns_mean,latency_ns_std\n";
  for (const auto& a : aggs)
    out << csv_field(a.dataset) << ',' << a.seeds << ',' << a.accuracy.mean << ',' << a.accuracy.std << ','
        << a.macro_f1.mean << ',' << a.macro_f1.std << ',' << a.ece_before.mean << ',' << a.ece_before.std << ',' << a.ece_after.mean
        << ',' << a.ece_after.std << ',' << a.train_seconds.mean << ',' << a.train_seconds.std << ','
        << a.latency_ns.mean << ',' << a.latency_ns.std << '\n';
}

inline void write_scaling_csv(std::ostream& out, const ScalingReport& s) {
  out.precision(17);
  out << "total_planes,working_dim,ns_per_example\n";
  for (const auto& p : s.points) out << p.total_planes << ',' << s.working_dim << ',' << p.ns_per_example << '\n';
}

}  // namespace gmc
