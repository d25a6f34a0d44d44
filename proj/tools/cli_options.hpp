#pragma once

// Flag plumbing shared by the gmc subcommands: data sources, the training
// recipe flags and their JSON config-file mirror.

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "gmc/bench.hpp"
#include "gmc/csv.hpp"
#include "gmc/model.hpp"
#include "gmc/recipe.hpp"

namespace gmc::cli {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Data sources
// ---------------------------------------------------------------------------

struct DataFlags {
  std::string dataset;  // generator name
  std::string path;     // CSV file
  std::string label_column = "label";
  bool no_header = false;
  std::size_t n = 0;  // 0: generator default
  double noise = -1.0;
  double radius_ratio = -1.0;
  double turns = -1.0;
};

inline void add_data_options(CLI::App* app, DataFlags& f) {
  app->add_option("--dataset", f.dataset, "Synthetic generator")
      ->check(CLI::IsMember(synthetic_dataset_names()));
  app->add_option("--data", f.path, "CSV file (features plus a label column)");
  app->add_option("--label-column", f.label_column, "Label column name, or zero-based index")
      ->capture_default_str();
  app->add_flag("--no-header", f.no_header, "CSV has no header row (label column must be an index)");
  app->add_option("--n", f.n, "Generator sample count (default per dataset)");
  app->add_option("--noise", f.noise, "Generator noise std-dev (moons, circles)");
  app->add_option("--radius-ratio", f.radius_ratio, "Inner/outer radius ratio (circles)");
  app->add_option("--turns", f.turns, "Spiral turns (spirals)");
}

inline GeneratorParams generator_params(const DataFlags& f) {
  GeneratorParams p;
  if (f.n > 0) p.n = f.n;
  if (f.noise >= 0.0) p.noise = f.noise;
  if (f.radius_ratio >= 0.0) p.radius_ratio = f.radius_ratio;
  if (f.turns >= 0.0) p.turns = f.turns;
  return p;
}

inline ColumnRef column_ref(const std::string& text) {
  std::size_t index = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), index);
  if (ec == std::errc() && ptr == text.data() + text.size()) return index;
  return text;
}

struct LoadedData {
  Dataset data;
  json description;  // provenance recorded in model metadata
};

inline LoadedData load_data(const DataFlags& f, std::uint64_t seed) {
  if (f.dataset.empty() == f.path.empty())
    throw CLI::ValidationError("data", "exactly one of --dataset or --data is required");
  LoadedData out;
  if (!f.dataset.empty()) {
    const GeneratorParams p = generator_params(f);
    out.data = make_named_dataset(f.dataset, seed, p);
    out.description = {{"source", "generator"}, {"name", f.dataset}, {"seed", seed}};
    if (p.n) out.description["n"] = *p.n;
    if (p.noise) out.description["noise"] = *p.noise;
    if (p.radius_ratio) out.description["radius_ratio"] = *p.radius_ratio;
    if (p.turns) out.description["turns"] = *p.turns;
  } else {
    out.data = load_csv(f.path, column_ref(f.label_column), !f.no_header);
    out.description = {{"source", "csv"}, {"path", f.path}, {"label_column", f.label_column}};
  }
  out.description["rows"] = out.data.size();
  out.description["fingerprint"] = dataset_fingerprint(out.data);
  return out;
}

/// Class names of a model, defaulting to the decimal index.
inline std::vector<std::string> effective_class_names(std::size_t classes, const std::vector<std::string>& names) {
  if (names.size() == classes) return names;
  std::vector<std::string> out;
  for (std::size_t c = 0; c < classes; ++c) out.push_back(std::to_string(c));
  return out;
}

/// Re-encodes dataset labels into the model's class order by class name, so
/// a CSV whose labels appear in a different order still lines up.
inline void align_labels(Dataset& ds, const GmcModel& model) {
  if (ds.dim() != model.input_dim())
    throw std::invalid_argument("data has " + std::to_string(ds.dim()) + " feature columns, model expects " +
                                std::to_string(model.input_dim()));
  const auto model_names = effective_class_names(model.class_count(), model.class_names);
  const auto data_names = effective_class_names(ds.class_count, ds.class_names);
  std::vector<std::size_t> remap(ds.class_count);
  for (std::size_t c = 0; c < ds.class_count; ++c) {
    const auto it = std::find(model_names.begin(), model_names.end(), data_names[c]);
    if (it == model_names.end()) throw std::invalid_argument("label '" + data_names[c] + "' is not a model class");
    remap[c] = static_cast<std::size_t>(it - model_names.begin());
  }
  for (auto& y : ds.labels) y = remap[y];
  ds.class_count = model.class_count();
  ds.class_names = model_names;
}

// ---------------------------------------------------------------------------
// Recipe flags
// ---------------------------------------------------------------------------

struct FitFlags {
  std::string lift = "linear";
  std::size_t rff_dim = kFinalFrequencies;
  double rff_gamma = 1.0;
  double pca_variance = 0.0;  // 0: no PCA
  std::string planes = "auto";
  std::size_t planes_cap = kDefaultPlaneCap;
  std::string init = "auto";
  double init_noise = 0.05;
  bool no_calibrate = false;
  bool no_early_stopping = false;
  std::string lr_schedule = "cosine";
  TrainConfig train;
  std::string config_path;
};

/// A flag with a JSON config-file key; the flag wins when both are given.
struct ConfigBinding {
  std::string key;
  CLI::Option* option = nullptr;
  std::function<void(const json&)> assign;
};

class FitOptions {
 public:
  explicit FitOptions(std::string default_lift = "linear") { flags_.lift = std::move(default_lift); }
  FitOptions(const FitOptions&) = delete;  // bindings point into flags_
  FitOptions& operator=(const FitOptions&) = delete;

  void attach(CLI::App* app) {
    auto& f = flags_;
    auto& t = f.train;
    bind(app, "--lift", "lift", f.lift, "Feature lift")->check(CLI::IsMember({"linear", "rff", "auto"}));
    bind(app, "--rff-dim", "rff_dim", f.rff_dim, "RFF frequencies D (features 2D)");
    bind(app, "--rff-gamma", "rff_gamma", f.rff_gamma, "RBF bandwidth for --lift rff");
    bind(app, "--pca-variance", "pca_variance", f.pca_variance, "PCA retained variance in (0,1]; 0 disables");
    bind(app, "--planes", "planes", f.planes, "Planes per class: auto or an integer");
    bind(app, "--planes-cap", "planes_cap", f.planes_cap, "Cap for automatic plane budgets");
    bind(app, "--init", "init", f.init, "Initializer")->check(CLI::IsMember({"auto", "kmeans", "logreg", "random"}));
    bind(app, "--init-noise", "init_noise", f.init_noise, "Relative jitter for k-means init");
    bind(app, "--alpha-start", "alpha_start", t.alpha_start, "Pooling temperature at epoch 0");
    bind(app, "--alpha-end", "alpha_end", t.alpha_end, "Pooling temperature after the ramp");
    bind(app, "--lambda", "lambda", t.lambda, "Base L2 strength");
    bind(app, "--beta", "beta", t.beta, "Usage-aware L2 weight");
    bind(app, "--delta", "delta", t.delta, "Usage floor");
    bind(app, "--label-smoothing", "label_smoothing", t.label_smoothing, "Label smoothing epsilon");
    bind(app, "--class-weights", "class_weights", t.class_weights, "Per-class loss weights")->delimiter(',');
    bind(app, "--batch-size", "batch_size", t.batch_size, "Minibatch size");
    bind(app, "--learning-rate", "learning_rate", t.learning_rate, "Adam learning rate");
    bind(app, "--lr-schedule", "lr_schedule", f.lr_schedule, "Learning-rate schedule")
        ->check(CLI::IsMember({"cosine", "exponential"}));
    bind(app, "--max-epochs", "max_epochs", t.max_epochs, "Epoch limit");
    bind(app, "--patience", "patience", t.patience, "Early-stopping patience in epochs");
    bind(app, "--min-improvement", "min_improvement", t.min_improvement, "Smallest validation gain that resets patience");
    bind(app, "--clip-norm", "clip_norm", t.clip_norm, "Global gradient-norm clip");
    bind(app, "--usage-momentum", "usage_momentum", t.usage_momentum, "Usage tracker momentum");
    auto* es = app->add_flag("--no-early-stopping", f.no_early_stopping, "Run every epoch");
    bindings_.push_back({"early_stopping", es, [&f](const json& j) { f.no_early_stopping = !j.get<bool>(); }});
    auto* cal = app->add_flag("--no-calibrate", f.no_calibrate, "Skip temperature fitting on validation");
    bindings_.push_back({"calibrate", cal, [&f](const json& j) { f.no_calibrate = !j.get<bool>(); }});
    app->add_option("--config", f.config_path, "JSON file with any of the flags above (snake_case keys)");
  }

  /// Applies --config for every key whose flag was not given explicitly.
  void apply_config() {
    if (flags_.config_path.empty()) return;
    std::ifstream in(flags_.config_path);
    if (!in) throw std::runtime_error("cannot open config " + flags_.config_path);
    json doc;
    try {
      in >> doc;
    } catch (const json::exception& e) {
      throw std::runtime_error("config " + flags_.config_path + ": " + e.what());
    }
    if (!doc.is_object()) throw std::runtime_error("config " + flags_.config_path + ": expected a JSON object");
    for (const auto& [key, value] : doc.items()) {
      auto it = std::find_if(bindings_.begin(), bindings_.end(), [&](const ConfigBinding& b) { return b.key == key; });
      if (it == bindings_.end()) throw std::runtime_error("config " + flags_.config_path + ": unknown key '" + key + "'");
      if (it->option->count() > 0) continue;
      try {
        it->assign(value);
      } catch (const json::exception& e) {
        throw std::runtime_error("config " + flags_.config_path + ": key '" + key + "': " + e.what());
      }
    }
  }

  const FitFlags& flags() const { return flags_; }

  RecipeOptions recipe(std::uint64_t seed) const {
    const auto& f = flags_;
    RecipeOptions o;
    o.lift = f.lift == "rff" ? LiftMode::rff : f.lift == "auto" ? LiftMode::automatic : LiftMode::linear;
    o.pipeline.rff_frequencies = f.rff_dim;
    o.pipeline.rff_gamma = f.rff_gamma;
    if (f.pca_variance > 0.0) o.pipeline.pca_variance = f.pca_variance;
    if (f.planes != "auto") {
      std::size_t k = 0;
      const auto [ptr, ec] = std::from_chars(f.planes.data(), f.planes.data() + f.planes.size(), k);
      if (ec != std::errc() || ptr != f.planes.data() + f.planes.size() || k == 0)
        throw CLI::ValidationError("--planes", "expected 'auto' or a positive integer, got '" + f.planes + "'");
      o.planes.fixed = k;
    }
    o.planes.cap = f.planes_cap;
    o.init.strategy = f.init == "kmeans"   ? InitStrategy::kmeans
                      : f.init == "logreg" ? InitStrategy::logreg
                      : f.init == "random" ? InitStrategy::random
                                           : InitStrategy::automatic;
    o.init.noise_scale = f.init_noise;
    o.train = f.train;
    o.train.lr_schedule = f.lr_schedule == "exponential" ? LrSchedule::exponential : LrSchedule::cosine;
    o.train.early_stopping = !f.no_early_stopping;
    o.calibrate = !f.no_calibrate;
    o.train.validate();
    return seeded_options(o, seed);
  }

  /// Resolved settings as recorded in model metadata.
  json describe(const RecipeOptions& o) const {
    const auto& f = flags_;
    const auto& t = o.train;
    return {{"lift", f.lift},
            {"rff_dim", f.rff_dim},
            {"rff_gamma", f.rff_gamma},
            {"pca_variance", f.pca_variance},
            {"planes", f.planes},
            {"planes_cap", f.planes_cap},
            {"init", f.init},
            {"init_noise", f.init_noise},
            {"calibrate", o.calibrate},
            {"alpha_start", t.alpha_start},
            {"alpha_end", t.alpha_end},
            {"lambda", t.lambda},
            {"beta", t.beta},
            {"delta", t.delta},
            {"label_smoothing", t.label_smoothing},
            {"class_weights", t.class_weights},
            {"batch_size", t.batch_size},
            {"learning_rate", t.learning_rate},
            {"lr_schedule", f.lr_schedule},
            {"max_epochs", t.max_epochs},
            {"patience", t.patience},
            {"early_stopping", t.early_stopping},
            {"min_improvement", t.min_improvement},
            {"clip_norm", t.clip_norm},
            {"usage_momentum", t.usage_momentum},
            {"seed", t.seed}};
  }

 private:
  template <typename T>
  CLI::Option* bind(CLI::App* app, const std::string& flag, const std::string& key, T& field, const std::string& help) {
    auto* opt = app->add_option(flag, field, help)->capture_default_str();
    bindings_.push_back({key, opt, [&field](const json& j) { field = j.get<T>(); }});
    return opt;
  }

  FitFlags flags_;
  std::vector<ConfigBinding> bindings_;
};

}  // namespace gmc::cli
