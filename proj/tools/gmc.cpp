// gmc: command-line front end for the geometric mixture classifier.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cli_options.hpp"
#include "gmc/bench.hpp"
#include "gmc/calibration.hpp"
#include "gmc/csv.hpp"
#include "gmc/diagnostics.hpp"
#include "gmc/model_io.hpp"
#include "gmc/recipe.hpp"
#include "gmc/split.hpp"
#include "gmc/svg.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gmc;
using namespace gmc::cli;

namespace {

// ---------------------------------------------------------------------------
// Small helpers
// ---------------------------------------------------------------------------

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return out;
}

/// Writes to `path`, or to stdout when it is empty or "-".
template <typename Fn>
void emit(const std::string& path, Fn&& write) {
  if (path.empty() || path == "-") {
    write(std::cout);
    return;
  }
  auto out = open_out(path);
  write(out);
}

std::string with_suffix(const fs::path& model_path, const std::string& suffix) {
  fs::path p = model_path;
  p.replace_extension();
  return p.string() + suffix;
}

SplitResult split_with_seed(const Dataset& ds, std::uint64_t seed) {
  SplitSpec spec;
  spec.seed = seed;
  return stratified_split(ds, spec);
}

Dataset pick_split(const Dataset& ds, const std::string& which, std::uint64_t seed) {
  if (which == "all") return ds;
  SplitResult s = split_with_seed(ds, seed);
  if (which == "train") return std::move(s.train);
  if (which == "val") return std::move(s.val);
  return std::move(s.test);
}

/// Seed for re-deriving a split: the explicit flag, else the fit's seed.
std::uint64_t split_seed(const CLI::Option* seed_opt, std::uint64_t seed, const ModelFile& file) {
  if (seed_opt->count() > 0) return seed;
  const auto& m = file.metadata;
  if (m.contains("split") && m["split"].contains("seed")) return m["split"]["seed"].get<std::uint64_t>();
  return seed;
}

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// ---------------------------------------------------------------------------
// Metrics shared by evaluate and inspect
// ---------------------------------------------------------------------------

struct Metrics {
  std::size_t samples = 0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> per_class_f1;
  EceReport ece_before;
  std::optional<double> temperature;
  std::optional<EceReport> ece_after;
  ResponsibilityStats resp;
  PlaneUsage usage;
};

Metrics compute_metrics(const GmcModel& model, std::optional<double> temperature, const Dataset& ds) {
  Metrics m;
  m.samples = ds.size();
  const Matrix scores = class_scores(model, ds.features);
  const Matrix probs = apply_temperature(scores, 1.0);
  const auto predicted = argmax_rows(probs);
  m.accuracy = accuracy(predicted, ds.labels);
  m.macro_f1 = macro_f1(predicted, ds.labels, model.class_count());
  m.per_class_f1 = per_class_f1(predicted, ds.labels, model.class_count());
  m.ece_before = ece(probs, ds.labels);
  if (temperature) {
    m.temperature = temperature;
    m.ece_after = ece(apply_temperature(scores, *temperature), ds.labels);
  }
  m.resp = responsibility_stats(model, ds.features, ds.labels);
  m.usage = plane_usage(model, ds.features, ds.labels);
  return m;
}

json metrics_json(const Metrics& m) {
  json j = {{"samples", m.samples},
            {"accuracy", m.accuracy},
            {"macro_f1", m.macro_f1},
            {"per_class_f1", m.per_class_f1},
            {"ece_before", m.ece_before.ece},
            {"maxresp", m.resp.maxresp},
            {"resp_entropy", m.resp.resp_entropy},
            {"plane_usage_pct", json::array()}};
  if (m.temperature) {
    j["temperature"] = *m.temperature;
    j["ece_after"] = m.ece_after->ece;
  }
  for (const auto& row : m.usage.fractions) {
    json r = json::array();
    for (double f : row) r.push_back(100.0 * f);
    j["plane_usage_pct"].push_back(r);
  }
  return j;
}

/// Stable two-column layout: metric,value.
void write_metrics_csv(std::ostream& out, const Metrics& m) {
  out.precision(17);
  out << "metric,value\n";
  out << "samples," << m.samples << '\n';
  out << "accuracy," << m.accuracy << '\n';
  out << "macro_f1," << m.macro_f1 << '\n';
  for (std::size_t c = 0; c < m.per_class_f1.size(); ++c) out << "f1_class_" << c << ',' << m.per_class_f1[c] << '\n';
  out << "ece_before," << m.ece_before.ece << '\n';
  if (m.temperature) {
    out << "temperature," << *m.temperature << '\n';
    out << "ece_after," << m.ece_after->ece << '\n';
  }
  out << "maxresp," << m.resp.maxresp << '\n';
  out << "resp_entropy," << m.resp.resp_entropy << '\n';
  for (std::size_t c = 0; c < m.usage.fractions.size(); ++c)
    for (std::size_t p = 0; p < m.usage.fractions[c].size(); ++p)
      out << "usage_pct_class_" << c << "_plane_" << (p + 1) << ',' << 100.0 * m.usage.fractions[c][p] << '\n';
}

void print_metrics(std::ostream& out, const Metrics& m) {
  out << "samples        " << m.samples << '\n';
  out << "accuracy       " << fmt(m.accuracy) << '\n';
  out << "macro-F1       " << fmt(m.macro_f1) << '\n';
  out << "ECE            " << fmt(m.ece_before.ece) << '\n';
  if (m.temperature)
    out << "ECE (T=" << fmt(*m.temperature, 3) << ")  " << fmt(m.ece_after->ece) << '\n';
  out << "maxresp        " << fmt(m.resp.maxresp) << '\n';
  out << "resp entropy   " << fmt(m.resp.resp_entropy) << '\n';
  out << "plane usage (% of class samples won per plane)\n";
  for (std::size_t c = 0; c < m.usage.fractions.size(); ++c) {
    out << "  class " << c << ':';
    for (double f : m.usage.fractions[c]) out << ' ' << fmt(100.0 * f, 1);
    if (m.usage.class_absent[c]) out << " (class absent)";
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct Common {
  std::uint64_t seed = 0;
  std::string out;
  std::string format = "csv";
  CLI::Option* seed_opt = nullptr;
};

void add_common(CLI::App* app, Common& c, const std::string& out_help) {
  c.seed_opt = app->add_option("--seed", c.seed, "Seed for generators, splits and training")->capture_default_str();
  app->add_option("--out", c.out, out_help);
  app->add_option("--format", c.format, "Output format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
}

int cmd_generate(const DataFlags& data, const Common& common) {
  if (data.dataset.empty()) throw CLI::ValidationError("--dataset", "generate needs --dataset");
  const LoadedData loaded = load_data(data, common.seed);
  emit(common.out, [&](std::ostream& out) {
    if (common.format == "csv") {
      write_csv(out, loaded.data);
      return;
    }
    json rows = json::array();
    for (std::size_t r = 0; r < loaded.data.size(); ++r) {
      const auto x = loaded.data.features.row(r);
      rows.push_back({{"x", std::vector<double>(x.begin(), x.end())}, {"label", loaded.data.labels[r]}});
    }
    out << json{{"dataset", loaded.description}, {"samples", rows}}.dump(1) << '\n';
  });
  return 0;
}

int cmd_fit(const DataFlags& data, const Common& common, FitOptions& fit_opts, const std::string& log_path) {
  fit_opts.apply_config();
  const RecipeOptions options = fit_opts.recipe(common.seed);
  const LoadedData loaded = load_data(data, common.seed);
  const SplitResult split = split_with_seed(loaded.data, common.seed);

  const auto t0 = std::chrono::steady_clock::now();
  RecipeResult result = train_recipe(split.train, split.val, options);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  ModelFile file;
  file.model = std::move(result.model);
  file.model.class_names = effective_class_names(loaded.data.class_count, loaded.data.class_names);
  if (result.temperature) file.temperature = result.temperature->temperature;

  json lift = {{"chosen", result.pipeline_config.describe()}};
  if (result.lift_selection) {
    lift["candidates"] = json::array();
    for (const auto& c : result.lift_selection->candidates)
      lift["candidates"].push_back({{"pipeline", c.config.describe()},
                                    {"working_dim", c.output_dim},
                                    {"heldout_loglik", c.diverged ? json(nullptr) : json(c.heldout_loglik)},
                                    {"diverged", c.diverged}});
  }
  const TrainLog& log = result.log;
  file.metadata = {{"config", fit_opts.describe(options)},
                   {"dataset", loaded.description},
                   {"split", {{"seed", common.seed}, {"train", 0.6}, {"val", 0.2}, {"test", 0.2}}},
                   {"lift", lift},
                   {"planes_per_class", result.budget.planes},
                   {"init", {{"used", to_string(result.init.used)},
                             {"unstable", result.init.unstable},
                             {"note", result.init.note}}},
                   {"training", {{"epochs_run", log.epochs.size()},
                                 {"best_epoch", log.best_epoch},
                                 {"best_val_loss", log.best_val_loss},
                                 {"stopped_early", log.stopped_early}}}};
  if (result.temperature)
    file.metadata["calibration"] = {{"val_nll_before", result.temperature->val_nll_before},
                                    {"val_nll_after", result.temperature->val_nll_after},
                                    {"ece_before", result.temperature->ece_before},
                                    {"ece_after", result.temperature->ece_after}};

  const std::string model_path = common.out.empty() ? "model.json" : common.out;
  save_model(file, model_path);
  const std::string trainlog = log_path.empty() ? with_suffix(model_path, ".trainlog.csv") : log_path;
  {
    auto out = open_out(trainlog);
    log.write_csv(out);
  }

  // Held-out test metrics for the summary.
  const Metrics test = compute_metrics(file.model, file.temperature, split.test);
  std::ostringstream summary;
  summary << "data           " << loaded.description.dump() << '\n';
  summary << "split          train " << split.train.size() << " / val " << split.val.size() << " / test "
          << split.test.size() << " (seed " << common.seed << ")\n";
  summary << "lift           " << result.pipeline_config.describe() << " (working dim "
          << file.model.pipeline.output_dim() << ")\n";
  summary << "planes         " << join_sizes(result.budget.planes, ' ') << '\n';
  summary << "init           " << to_string(result.init.used) << (result.init.unstable ? " (unstable)" : "")
          << (result.init.note.empty() ? "" : ": " + result.init.note) << '\n';
  summary << "epochs         " << log.epochs.size() << " (best " << log.best_epoch << ", val NLL "
          << fmt(log.best_val_loss, 5) << (log.stopped_early ? ", stopped early" : "") << ")\n";
  if (file.temperature) summary << "temperature    " << fmt(*file.temperature, 4) << '\n';
  summary << "-- test split --\n";
  print_metrics(summary, test);
  {
    auto out = open_out(with_suffix(model_path, ".summary.txt"));
    out << summary.str();
  }
  if (common.format == "json") {
    json j = file.metadata;
    j["model"] = model_path;
    j["test"] = metrics_json(test);
    std::cout << j.dump(1) << '\n';
  } else {
    std::cout << "model          " << model_path << '\n' << summary.str();
  }
  std::cerr << "fit time " << fmt(seconds, 2) << " s\n";
  return 0;
}

struct ModelFlags {
  std::string model_path;
  std::string split = "test";
  double alpha = 0.0;  // 0: use the stored alpha
  bool no_temperature = false;
};

void add_model_options(CLI::App* app, ModelFlags& f, const std::string& default_split) {
  f.split = default_split;
  app->add_option("--model", f.model_path, "Model file")->required();
  app->add_option("--split", f.split, "Which part of the data to use (60/20/20 stratified by --seed)")
      ->check(CLI::IsMember({"all", "train", "val", "test"}))
      ->capture_default_str();
  app->add_option("--alpha", f.alpha, "Override the stored pooling temperature");
}

struct Loaded {
  ModelFile file;
  Dataset data;
};

Loaded load_model_and_data(const ModelFlags& mf, const DataFlags& data, const Common& common) {
  Loaded l;
  l.file = load_model(mf.model_path);
  if (mf.alpha > 0.0) l.file.model.alpha = mf.alpha;
  const std::uint64_t seed = split_seed(common.seed_opt, common.seed, l.file);
  l.data = pick_split(load_data(data, seed).data, mf.split, seed);
  align_labels(l.data, l.file.model);
  return l;
}

int cmd_predict(const DataFlags& data, const Common& common, const ModelFlags& mf) {
  const Loaded l = load_model_and_data(mf, data, common);
  const GmcModel& model = l.file.model;
  const Matrix scores = class_scores(model, l.data.features);
  const double t = (l.file.temperature && !mf.no_temperature) ? *l.file.temperature : 1.0;
  const Matrix probs = apply_temperature(scores, t);
  const auto predicted = argmax_rows(probs);
  const auto names = effective_class_names(model.class_count(), model.class_names);
  emit(common.out, [&](std::ostream& out) {
    if (common.format == "json") {
      json rows = json::array();
      for (std::size_t r = 0; r < probs.rows(); ++r) {
        const auto p = probs.row(r);
        rows.push_back({{"index", r},
                        {"predicted", predicted[r]},
                        {"class", names[predicted[r]]},
                        {"proba", std::vector<double>(p.begin(), p.end())}});
      }
      out << json{{"temperature", t}, {"predictions", rows}}.dump(1) << '\n';
      return;
    }
    out.precision(17);
    out << "index,predicted,class";
    for (std::size_t c = 0; c < model.class_count(); ++c) out << ",p_" << c;
    out << '\n';
    for (std::size_t r = 0; r < probs.rows(); ++r) {
      out << r << ',' << predicted[r] << ',' << csv_field(names[predicted[r]]);
      for (double p : probs.row(r)) out << ',' << p;
      out << '\n';
    }
  });
  return 0;
}

int cmd_evaluate(const DataFlags& data, const Common& common, const ModelFlags& mf) {
  const Loaded l = load_model_and_data(mf, data, common);
  const Metrics m = compute_metrics(l.file.model, mf.no_temperature ? std::nullopt : l.file.temperature, l.data);
  print_metrics(std::cout, m);
  if (!common.out.empty()) emit(common.out, [&](std::ostream& out) {
      if (common.format == "json")
        out << metrics_json(m).dump(1) << '\n';
      else
        write_metrics_csv(out, m);
    });
  return 0;
}

int cmd_calibrate(const DataFlags& data, const Common& common, const ModelFlags& mf) {
  Loaded l = load_model_and_data(mf, data, common);
  const TemperatureFit t = fit_temperature(class_scores(l.file.model, l.data.features), l.data.labels);
  l.file.temperature = t.temperature;
  l.file.metadata["calibration"] = {{"split", mf.split},
                                    {"val_nll_before", t.val_nll_before},
                                    {"val_nll_after", t.val_nll_after},
                                    {"ece_before", t.ece_before},
                                    {"ece_after", t.ece_after}};
  const std::string path = common.out.empty() ? mf.model_path : common.out;
  save_model(l.file, path);
  if (common.format == "json") {
    std::cout << json{{"model", path}, {"temperature", t.temperature}, {"calibration", l.file.metadata["calibration"]},
                      {"degenerate", t.degenerate}}
                     .dump(1)
              << '\n';
  } else {
    std::cout << "temperature    " << fmt(t.temperature, 4) << (t.degenerate ? " (degenerate scores)" : "") << '\n';
    std::cout << "NLL            " << fmt(t.val_nll_before, 5) << " -> " << fmt(t.val_nll_after, 5) << '\n';
    std::cout << "ECE            " << fmt(t.ece_before) << " -> " << fmt(t.ece_after) << '\n';
    std::cout << "written        " << path << '\n';
  }
  return 0;
}

struct InspectFlags {
  std::size_t resolution = kDefaultGridResolution;
  std::size_t top_k = 0;  // 0: all features
};

int cmd_inspect(const DataFlags& data, const Common& common, const ModelFlags& mf, const InspectFlags& inf) {
  if (common.out.empty()) throw CLI::ValidationError("--out", "inspect needs an output directory");
  const Loaded l = load_model_and_data(mf, data, common);
  const GmcModel& model = l.file.model;
  const fs::path dir = common.out;
  fs::create_directories(dir);
  json files = json::array();
  json unsupported = json::array();
  auto write = [&](const std::string& name, const std::string& what, auto&& body) {
    auto out = open_out(dir / name);
    body(out);
    files.push_back({{"file", name}, {"content", what}});
  };

  const Metrics m = compute_metrics(model, l.file.temperature, l.data);
  write("plane_usage.csv", "winner share per plane, percent of each class's samples",
        [&](std::ostream& o) { write_plane_usage_csv(o, m.usage); });
  write("metrics.csv", "accuracy, macro-F1, ECE, responsibility stats", [&](std::ostream& o) { write_metrics_csv(o, m); });

  try {
    std::vector<std::vector<SalientFeature>> per_plane;
    const std::size_t k = inf.top_k == 0 ? model.input_dim() : std::min(inf.top_k, model.input_dim());
    for (std::size_t c = 0; c < model.class_count(); ++c)
      for (std::size_t p = 0; p < model.planes.planes(c); ++p)
        per_plane.push_back(plane_saliency(model, c, p, k, model.feature_names));
    write("saliency.csv", "top features per plane by |w| (standardized and raw units)", [&](std::ostream& o) {
      o.precision(17);
      o << "class,plane,rank,feature_index,feature,weight,raw_weight\n";
      std::size_t i = 0;
      for (std::size_t c = 0; c < model.class_count(); ++c)
        for (std::size_t p = 0; p < model.planes.planes(c); ++p, ++i)
          for (std::size_t r = 0; r < per_plane[i].size(); ++r) {
            const auto& f = per_plane[i][r];
            o << c << ',' << (p + 1) << ',' << (r + 1) << ',' << f.index << ',' << csv_field(f.name) << ','
              << f.weight << ',' << f.raw_weight << '\n';
          }
    });
  } catch (const Unsupported& e) {
    unsupported.push_back({{"output", "saliency"}, {"reason", e.what()}});
  }

  const Matrix scores = class_scores(model, l.data.features);
  const EceReport before = ece(apply_temperature(scores, 1.0), l.data.labels);
  write("reliability_before.csv", "reliability bins at T=1",
        [&](std::ostream& o) { write_reliability_csv(o, before.bins); });
  write("reliability_before.svg", "reliability diagram at T=1",
        [&](std::ostream& o) { svg::reliability_diagram(o, before.bins, "before temperature"); });
  if (l.file.temperature) {
    const EceReport after = ece(apply_temperature(scores, *l.file.temperature), l.data.labels);
    write("reliability_after.csv", "reliability bins at the stored temperature",
          [&](std::ostream& o) { write_reliability_csv(o, after.bins); });
    write("reliability_after.svg", "reliability diagram at the stored temperature", [&](std::ostream& o) {
      svg::reliability_diagram(o, after.bins, "after temperature T=" + fmt(*l.file.temperature, 3));
    });
  } else {
    unsupported.push_back({{"output", "reliability_after"}, {"reason", "model has no stored temperature"}});
  }

  if (model.input_dim() == 2) {
    const GridBounds bounds = bounds_from_data(l.data.features);
    std::vector<svg::Point2> points;
    for (std::size_t r = 0; r < l.data.size(); ++r)
      points.push_back({l.data.features(r, 0), l.data.features(r, 1), l.data.labels[r]});
    const GridMap regions = decision_grid(model, bounds, inf.resolution);
    write("decision_grid.csv", "predicted class per grid cell", [&](std::ostream& o) { regions.write_csv(o); });
    write("decision_regions.svg", "decision regions with the evaluated samples",
          [&](std::ostream& o) { svg::decision_regions(o, regions, points); });
    for (std::size_t c = 0; c < model.class_count(); ++c) {
      const GridMap g = responsibility_grid(model, c, bounds, inf.resolution);
      std::vector<svg::Point2> own;
      for (const auto& p : points)
        if (p.label == c) own.push_back(p);
      const std::string stem = "responsibility_class_" + std::to_string(c);
      write(stem + ".csv", "responsibilities of class " + std::to_string(c) + " planes per grid cell",
            [&](std::ostream& o) { g.write_csv(o); });
      write(stem + ".svg", "locally responsible plane of class " + std::to_string(c),
            [&](std::ostream& o) { svg::responsibility_map(o, g, own); });
    }
  } else {
    unsupported.push_back({{"output", "grids"}, {"reason", "input space is not 2-D"}});
  }

  json manifest = {{"model", mf.model_path},
                   {"split", mf.split},
                   {"samples", l.data.size()},
                   {"files", files},
                   {"unsupported", unsupported}};
  {
    auto out = open_out(dir / "manifest.json");
    out << manifest.dump(1) << '\n';
  }
  print_metrics(std::cout, m);
  std::cout << "bundle         " << dir.string() << " (" << files.size() << " files, manifest.json)\n";
  for (const auto& u : unsupported)
    std::cout << "skipped        " << u["output"].get<std::string>() << ": " << u["reason"].get<std::string>() << '\n';
  return 0;
}

struct BenchFlags {
  std::vector<std::string> datasets = synthetic_dataset_names();
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  bool skip_scaling = false;
  bool skip_latency = false;
  double latency_budget = 1.0;
  std::size_t max_inferences = 100000;
  std::size_t scaling_dim = kScalingWorkingDim;
};

int cmd_bench(const Common& common, FitOptions& fit_opts, const BenchFlags& bf) {
  fit_opts.apply_config();
  const fs::path dir = common.out.empty() ? "bench_out" : common.out;
  fs::create_directories(dir);
  LatencyProtocol protocol;
  protocol.time_budget_seconds = bf.latency_budget;
  protocol.max_inferences = bf.max_inferences;

  std::vector<BenchRow> rows;
  for (const auto& name : bf.datasets)
    for (std::uint64_t seed : bf.seeds) {
      const RecipeOptions options = fit_opts.recipe(seed);
      CellOutcome cell =
          run_bench_cell(name, seed, options, {}, bf.skip_latency ? std::nullopt : std::optional(protocol));
      const BenchRow& r = cell.row;
      if (r.ok)
        std::cerr << name << " seed " << seed << ": acc " << fmt(r.accuracy) << ", lift " << r.lift << ", planes "
                  << join_sizes(r.planes_per_class, ' ') << ", " << fmt(r.train_seconds, 1) << " s\n";
      else
        std::cerr << name << " seed " << seed << ": FAILED " << r.error << '\n';
      rows.push_back(std::move(cell.row));
    }
  const auto aggs = aggregate_rows(rows);
  {
    auto out = open_out(dir / "bench_rows.csv");
    write_bench_rows_csv(out, rows);
  }
  {
    auto out = open_out(dir / "bench_summary.csv");
    write_bench_summary_csv(out, aggs);
  }
  std::optional<ScalingReport> scaling;
  if (!bf.skip_scaling) {
    scaling = latency_scaling(kScalingPlaneTotals, bf.scaling_dim, common.seed, protocol);
    auto out = open_out(dir / "scaling.csv");
    write_scaling_csv(out, *scaling);
  }

  json report = {{"rows", json::array()}, {"aggregates", json::array()}};
  for (const auto& r : rows)
    report["rows"].push_back({{"dataset", r.dataset},
                              {"seed", r.seed},
                              {"ok", r.ok},
                              {"error", r.error},
                              {"accuracy", r.accuracy},
                              {"macro_f1", r.macro_f1},
                              {"ece_before", r.ece_before},
                              {"ece_after", r.ece_after},
                              {"temperature", r.temperature},
                              {"train_seconds", r.train_seconds},
                              {"latency_ns", r.latency_ns},
                              {"lift", r.lift},
                              {"planes_per_class", r.planes_per_class}});
  for (const auto& a : aggs)
    report["aggregates"].push_back({{"dataset", a.dataset},
                                    {"seeds", a.seeds},
                                    {"accuracy", {a.accuracy.mean, a.accuracy.std}},
                                    {"macro_f1", {a.macro_f1.mean, a.macro_f1.std}},
                                    {"ece_before", {a.ece_before.mean, a.ece_before.std}},
                                    {"ece_after", {a.ece_after.mean, a.ece_after.std}},
                                    {"train_seconds", {a.train_seconds.mean, a.train_seconds.std}},
                                    {"latency_ns", {a.latency_ns.mean, a.latency_ns.std}}});
  if (scaling) {
    json pts = json::array();
    for (const auto& p : scaling->points) pts.push_back({{"total_planes", p.total_planes}, {"ns", p.ns_per_example}});
    report["scaling"] = {{"working_dim", scaling->working_dim},
                         {"points", pts},
                         {"slope_ns_per_plane", scaling->fit.slope},
                         {"intercept_ns", scaling->fit.intercept},
                         {"r_squared", scaling->fit.r_squared}};
  }
  {
    auto out = open_out(dir / "bench.json");
    out << report.dump(1) << '\n';
  }

  if (common.format == "json") {
    std::cout << report.dump(1) << '\n';
  } else {
    std::cout << "dataset   seeds  accuracy          macro-F1          ECE pre   ECE post  ns/example\n";
    for (const auto& a : aggs) {
      char line[256];
      std::snprintf(line, sizeof line, "%-9s %5zu  %.4f +- %.4f  %.4f +- %.4f  %.4f    %.4f    %.0f\n",
                    a.dataset.c_str(), a.seeds, a.accuracy.mean, a.accuracy.std, a.macro_f1.mean, a.macro_f1.std,
                    a.ece_before.mean, a.ece_after.mean, a.latency_ns.mean);
      std::cout << line;
    }
    if (scaling) {
      std::cout << "latency vs planes (d'=" << scaling->working_dim << "):";
      for (const auto& p : scaling->points) std::cout << "  M=" << p.total_planes << ": " << fmt(p.ns_per_example, 1) << " ns";
      std::cout << "\n  fit " << fmt(scaling->fit.intercept, 1) << " + " << fmt(scaling->fit.slope, 2)
                << " ns/plane, R^2 " << fmt(scaling->fit.r_squared) << '\n';
    }
    std::cout << "written to " << dir.string() << '\n';
  }
  std::size_t failed = 0;
  for (const auto& r : rows) failed += r.ok ? 0 : 1;
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Geometric mixture classifier: per-class hyperplane mixtures pooled by a soft-OR"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "gmc model format " + std::to_string(kModelFormatVersion));

  DataFlags data;
  Common common;
  FitOptions fit_opts;
  FitOptions bench_opts("auto");  // the suite records the lift each dataset picks
  ModelFlags pred_flags, eval_flags, cal_flags, insp_flags;
  InspectFlags inspect_flags;
  BenchFlags bench_flags;
  std::string log_path;

  auto* gen = app.add_subcommand("generate", "Write a synthetic dataset");
  add_data_options(gen, data);
  add_common(gen, common, "Output file (default stdout)");

  auto* fit = app.add_subcommand("fit", "Fit a model on the 60% train split, tune on the 20% validation split");
  add_data_options(fit, data);
  add_common(fit, common, "Model file (default model.json)");
  fit_opts.attach(fit);
  fit->add_option("--log", log_path, "Train-log CSV (default <model>.trainlog.csv)");

  auto* pred = app.add_subcommand("predict", "Write class probabilities");
  add_data_options(pred, data);
  add_common(pred, common, "Output file (default stdout)");
  add_model_options(pred, pred_flags, "all");
  pred->add_flag("--no-temperature", pred_flags.no_temperature, "Ignore the stored temperature");

  auto* eval = app.add_subcommand("evaluate", "Accuracy, macro-F1, ECE, responsibility stats, plane usage");
  add_data_options(eval, data);
  add_common(eval, common, "Metrics file (csv: metric,value rows)");
  add_model_options(eval, eval_flags, "test");
  eval->add_flag("--no-temperature", eval_flags.no_temperature, "Report only the uncalibrated ECE");

  auto* cal = app.add_subcommand("calibrate", "Fit the softmax temperature and store it in the model");
  add_data_options(cal, data);
  add_common(cal, common, "Output model (default: overwrite --model)");
  add_model_options(cal, cal_flags, "val");

  auto* bench = app.add_subcommand("bench", "Seeded benchmark suite plus latency scaling sweep");
  add_common(bench, common, "Output directory (default bench_out)");
  bench_opts.attach(bench);
  bench->add_option("--datasets", bench_flags.datasets, "Datasets to run")
      ->delimiter(',')
      ->check(CLI::IsMember(synthetic_dataset_names()))
      ->capture_default_str();
  bench->add_option("--seeds", bench_flags.seeds, "Seeds per dataset")->delimiter(',')->capture_default_str();
  bench->add_flag("--skip-scaling", bench_flags.skip_scaling, "Skip the latency-vs-planes sweep");
  bench->add_flag("--skip-latency", bench_flags.skip_latency, "Skip per-cell latency measurement");
  bench->add_option("--latency-budget", bench_flags.latency_budget, "Seconds per latency measurement")
      ->capture_default_str();
  bench->add_option("--max-inferences", bench_flags.max_inferences, "Timed inferences per measurement")
      ->capture_default_str();
  bench->add_option("--scaling-dim", bench_flags.scaling_dim, "Working dimension for the scaling sweep")
      ->capture_default_str();

  auto* insp = app.add_subcommand("inspect", "Report bundle: usage, saliency, grids, reliability diagrams");
  add_data_options(insp, data);
  add_common(insp, common, "Output directory");
  add_model_options(insp, insp_flags, "test");
  insp->add_option("--resolution", inspect_flags.resolution, "Grid cells per axis (2-D inputs)")->capture_default_str();
  insp->add_option("--top-k", inspect_flags.top_k, "Features per plane in saliency.csv (0: all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  for (auto* sub : app.get_subcommands()) common.seed_opt = sub->get_option("--seed");

  try {
    if (gen->parsed()) return cmd_generate(data, common);
    if (fit->parsed()) return cmd_fit(data, common, fit_opts, log_path);
    if (pred->parsed()) return cmd_predict(data, common, pred_flags);
    if (eval->parsed()) return cmd_evaluate(data, common, eval_flags);
    if (cal->parsed()) return cmd_calibrate(data, common, cal_flags);
    if (bench->parsed()) return cmd_bench(common, bench_opts, bench_flags);
    if (insp->parsed()) return cmd_inspect(data, common, insp_flags, inspect_flags);
  } catch (const CLI::Error& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
