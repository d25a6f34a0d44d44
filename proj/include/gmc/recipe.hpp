#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "gmc/budgeting.hpp"
#include "gmc/calibration.hpp"
#include "gmc/datasets.hpp"
#include "gmc/features.hpp"
#include "gmc/model.hpp"
#include "gmc/training.hpp"

namespace gmc {

enum class LiftMode { linear, rff, automatic };

inline const char* to_string(LiftMode m) {
  switch (m) {
    case LiftMode::linear: return "linear";
    case LiftMode::rff: return "rff";
    case LiftMode::automatic: return "auto";
  }
  return "?";
}

inline const std::vector<double> kAutoGammaGrid = {0.25, 0.5, 1.0, 2.0};
inline constexpr std::size_t kProbeFrequencies = 512;
inline constexpr std::size_t kFinalFrequencies = 1024;
inline constexpr std::size_t kProbeEpochs = 30;
inline constexpr double kProbeAlpha = 4.0;
/// Held-out mean log-likelihoods closer than this count as a tie.
inline constexpr double kLiftTieTolerance = 0.01;

/// Plane budget request: fixed count per class, or silhouette-driven.
struct PlaneRequest {
  std::optional<std::size_t> fixed;  // empty: auto
  std::size_t cap = kDefaultPlaneCap;
};

inline PlaneBudget resolve_budget(const PlaneRequest& request, const Matrix& train_phi,
                                  std::span<const std::size_t> labels, std::size_t classes, std::uint64_t seed) {
  if (request.fixed) return PlaneBudget::uniform(classes, *request.fixed);
  return compute_plane_budget(train_phi, labels, classes, request.cap, seed);
}

/// Probe budget: fixed alpha, no early stopping, short epoch budget.
inline TrainConfig probe_config(TrainConfig base) {
  base.alpha_start = kProbeAlpha;
  base.alpha_end = kProbeAlpha;
  base.max_epochs = kProbeEpochs;
  base.early_stopping = false;
  return base;
}

struct LiftCandidateScore {
  PipelineConfig config;
  std::size_t output_dim = 0;
  double heldout_loglik = -std::numeric_limits<double>::infinity();  // after the probe's temperature fit
  double raw_loglik = -std::numeric_limits<double>::infinity();      // at T = 1
  double probe_temperature = 1.0;
  bool diverged = false;
};

/// Class scores of already-lifted rows.
inline Matrix class_scores_from_features(const PlaneSet& planes, double alpha, const Matrix& phi) {
  Matrix s(phi.rows(), planes.class_count());
  ForwardResult fr;
  for (std::size_t r = 0; r < phi.rows(); ++r) {
    forward_features(planes, alpha, phi.row(r), fr);
    std::copy(fr.class_scores.begin(), fr.class_scores.end(), s.row(r).begin());
  }
  return s;
}

struct LiftSelection {
  std::size_t chosen = 0;
  FeaturePipeline pipeline;
  std::vector<LiftCandidateScore> candidates;
};

/// Fits a short probe model per candidate pipeline and keeps the one with
/// the highest mean held-out log-likelihood; near-ties go to the smaller
/// working dimension. Each probe's likelihood is taken at its own fitted
/// temperature: short probes of different widths reach very different
/// confidence scales, and a raw comparison would reward width rather than
/// ranking quality.
inline LiftSelection auto_select_lift(const Dataset& train, const Dataset& val,
                                      const std::vector<PipelineConfig>& candidates, const TrainConfig& probe,
                                      const PlaneRequest& planes = {}, const InitSpec& init = {}) {
  detail::require(!candidates.empty(), "auto_select_lift: no candidates");
  LiftSelection sel;
  std::vector<FeaturePipeline> pipelines;
  for (const auto& cfg : candidates) {
    LiftCandidateScore score;
    score.config = cfg;
    FeaturePipeline pipeline = fit_pipeline(train, cfg);
    score.output_dim = pipeline.output_dim();
    try {
      const Matrix train_phi = pipeline.apply(train.features);
      const Matrix val_phi = pipeline.apply(val.features);
      const PlaneBudget budget = resolve_budget(planes, train_phi, train.labels, train.class_count, init.seed);
      InitResult start = initialize(train_phi, train.labels, budget, init);
      auto [params, log] = train_planes(train_phi, train.labels, val_phi, val.labels, std::move(start.planes), probe);
      if (log.diverged) {
        score.diverged = true;
      } else {
        const Matrix scores = class_scores_from_features(params, probe.alpha_end, val_phi);
        if (!all_finite(scores.values())) {
          score.diverged = true;
        } else {
          const TemperatureFit t = fit_temperature(scores, val.labels);
          score.raw_loglik = -t.val_nll_before;
          score.heldout_loglik = -t.val_nll_after;
          score.probe_temperature = t.temperature;
          score.diverged = !std::isfinite(score.heldout_loglik);
        }
      }
    } catch (const DivergenceError&) {
      score.diverged = true;
    }
    sel.candidates.push_back(score);
    pipelines.push_back(std::move(pipeline));
  }
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& c : sel.candidates)
    if (!c.diverged) best = std::max(best, c.heldout_loglik);
  if (!std::isfinite(best)) throw DivergenceError("auto_select_lift: every probe diverged");
  std::size_t chosen = sel.candidates.size();
  for (std::size_t i = 0; i < sel.candidates.size(); ++i) {
    const auto& c = sel.candidates[i];
    if (c.diverged || c.heldout_loglik < best - kLiftTieTolerance) continue;
    if (chosen == sel.candidates.size() || c.output_dim < sel.candidates[chosen].output_dim ||
        (c.output_dim == sel.candidates[chosen].output_dim && c.heldout_loglik > sel.candidates[chosen].heldout_loglik))
      chosen = i;
  }
  sel.chosen = chosen;
  sel.pipeline = std::move(pipelines[chosen]);
  return sel;
}

/// Default auto-mode candidates: linear plus RFF probes over the gamma grid.
inline std::vector<PipelineConfig> auto_lift_candidates(const PipelineConfig& base) {
  std::vector<PipelineConfig> out;
  PipelineConfig linear = base;
  linear.lift = LiftKind::linear;
  out.push_back(linear);
  for (double gamma : kAutoGammaGrid) {
    PipelineConfig rff = base;
    rff.lift = LiftKind::rff;
    rff.rff_frequencies = kProbeFrequencies;
    rff.rff_gamma = gamma;
    out.push_back(rff);
  }
  return out;
}

/// Everything needed to go from a train/validation split to a model.
struct RecipeOptions {
  LiftMode lift = LiftMode::linear;
  PipelineConfig pipeline;  // rff_frequencies / rff_gamma used for LiftMode::rff
  PlaneRequest planes;
  InitSpec init;
  TrainConfig train;
  bool calibrate = true;
};

struct RecipeResult {
  GmcModel model;
  TrainLog log;
  PlaneBudget budget;
  InitResult init;
  PipelineConfig pipeline_config;
  std::optional<LiftSelection> lift_selection;
  std::optional<TemperatureFit> temperature;
};

inline RecipeResult train_recipe(const Dataset& train, const Dataset& val, const RecipeOptions& options) {
  train.validate();
  val.validate();
  RecipeResult out;
  FeaturePipeline pipeline;
  out.pipeline_config = options.pipeline;
  switch (options.lift) {
    case LiftMode::linear:
      out.pipeline_config.lift = LiftKind::linear;
      pipeline = fit_pipeline(train, out.pipeline_config);
      break;
    case LiftMode::rff:
      out.pipeline_config.lift = LiftKind::rff;
      pipeline = fit_pipeline(train, out.pipeline_config);
      break;
    case LiftMode::automatic: {
      auto sel = auto_select_lift(train, val, auto_lift_candidates(options.pipeline), probe_config(options.train),
                                  options.planes, options.init);
      out.pipeline_config = sel.candidates[sel.chosen].config;
      if (out.pipeline_config.lift == LiftKind::rff) {
        out.pipeline_config.rff_frequencies = kFinalFrequencies;
        pipeline = fit_pipeline(train, out.pipeline_config);
      } else {
        pipeline = sel.pipeline;
      }
      out.lift_selection = std::move(sel);
      break;
    }
  }
  const Matrix train_phi = pipeline.apply(train.features);
  out.budget = resolve_budget(options.planes, train_phi, train.labels, train.class_count, options.init.seed);
  FitResult fitted = fit(train, val, pipeline, out.budget, options.init, options.train, &out.init);
  out.model = std::move(fitted.model);
  out.log = std::move(fitted.log);
  if (options.calibrate) out.temperature = fit_temperature(class_scores(out.model, val.features), val.labels);
  return out;
}

}  // namespace gmc
