#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "gmc/budgeting.hpp"
#include "gmc/datasets.hpp"
#include "gmc/error.hpp"
#include "gmc/features.hpp"
#include "gmc/model.hpp"
#include "gmc/random.hpp"

namespace gmc {

enum class LrSchedule { cosine, exponential };

inline const char* to_string(LrSchedule s) { return s == LrSchedule::cosine ? "cosine" : "exponential"; }

/// Training hyperparameters. Defaults follow the reference recipe.
struct TrainConfig {
  double alpha_start = 3.0;
  double alpha_end = 6.0;
  double lambda = 1e-4;           // base L2 strength
  double beta = 0.5;              // usage penalty
  double delta = 1e-3;            // usage floor
  double label_smoothing = 0.02;  // epsilon
  std::vector<double> class_weights;  // empty: all ones
  std::size_t batch_size = 256;
  double learning_rate = 1e-2;
  LrSchedule lr_schedule = LrSchedule::cosine;
  std::size_t max_epochs = 300;
  std::size_t patience = 12;
  bool early_stopping = true;
  double min_improvement = 1e-5;
  double clip_norm = 5.0;
  double usage_momentum = 0.9;
  std::uint64_t seed = 0;

  void validate() const {
    detail::require(alpha_start > 0.0 && alpha_start <= alpha_end, "TrainConfig: need 0 < alpha_start <= alpha_end");
    detail::require(lambda >= 0.0 && beta >= 0.0 && delta > 0.0, "TrainConfig: lambda, beta >= 0 and delta > 0");
    detail::require(label_smoothing >= 0.0 && label_smoothing < 1.0, "TrainConfig: label_smoothing must lie in [0, 1)");
    detail::require(batch_size >= 1 && max_epochs >= 1 && patience >= 1, "TrainConfig: batch, epochs, patience >= 1");
    detail::require(learning_rate >= 0.0 && clip_norm > 0.0, "TrainConfig: learning_rate >= 0 and clip_norm > 0");
    detail::require(usage_momentum >= 0.0 && usage_momentum < 1.0, "TrainConfig: usage_momentum must lie in [0, 1)");
    for (double w : class_weights) detail::require(w > 0.0, "TrainConfig: class weights must be positive");
  }
};

// ---------------------------------------------------------------------------
// Targets and losses
// ---------------------------------------------------------------------------

struct SmoothedTargets {
  Matrix values;  // N x C
};

inline double smoothed_target(std::size_t label, std::size_t c, std::size_t classes, double epsilon) {
  return (label == c ? 1.0 - epsilon : 0.0) + epsilon / static_cast<double>(classes);
}

inline SmoothedTargets smooth_targets(std::span<const std::size_t> labels, std::size_t classes, double epsilon) {
  detail::require(epsilon >= 0.0 && epsilon < 1.0, "smooth_targets: epsilon must lie in [0, 1)");
  SmoothedTargets t{Matrix(labels.size(), classes)};
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (std::size_t c = 0; c < classes; ++c) t.values(i, c) = smoothed_target(labels[i], c, classes, epsilon);
  return t;
}

/// -(1/N) sum_i w_{y_i} sum_c y_ic log p_ic, from log-probabilities.
inline double cross_entropy(const Matrix& log_probs, const SmoothedTargets& targets,
                            std::span<const std::size_t> labels, std::span<const double> class_weights = {}) {
  detail::require(log_probs.rows() == targets.values.rows() && log_probs.cols() == targets.values.cols(),
                  "cross_entropy: shape mismatch");
  detail::require(log_probs.rows() == labels.size(), "cross_entropy: label count mismatch");
  detail::require(log_probs.rows() > 0, "cross_entropy: empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < log_probs.rows(); ++i) {
    const double weight = class_weights.empty() ? 1.0 : class_weights[labels[i]];
    double row = 0.0;
    for (std::size_t c = 0; c < log_probs.cols(); ++c) {
      const double t = targets.values(i, c);
      if (t == 0.0) continue;
      const double lp = log_probs(i, c);
      if (!std::isfinite(lp)) throw DivergenceError("cross_entropy: non-finite log-probability");
      row += t * lp;
    }
    total -= weight * row;
  }
  return total / static_cast<double>(log_probs.rows());
}

/// Row-wise log softmax of class scores.
inline Matrix log_softmax_rows(const Matrix& scores) {
  Matrix out(scores.rows(), scores.cols());
  for (std::size_t r = 0; r < scores.rows(); ++r) log_softmax_into(scores.row(r), out.row(r));
  return out;
}

// ---------------------------------------------------------------------------
// Usage-aware L2
// ---------------------------------------------------------------------------

/// Running average responsibility per plane, seeded uniform (1/M_c).
struct UsageTracker {
  std::vector<std::size_t> offsets;
  std::vector<double> usage;
  double momentum = 0.9;

  static UsageTracker uniform(const PlaneSet& planes, double momentum) {
    UsageTracker t;
    t.offsets = planes.offsets;
    t.momentum = momentum;
    t.usage.resize(planes.total_planes());
    for (std::size_t c = 0; c < planes.class_count(); ++c)
      for (std::size_t k = planes.offsets[c]; k < planes.offsets[c + 1]; ++k)
        t.usage[k] = 1.0 / static_cast<double>(planes.planes(c));
    return t;
  }

  /// u <- momentum * u + (1 - momentum) * batch_usage, then renormalized per
  /// class so rounding drift cannot accumulate.
  void update(std::span<const double> batch_usage) {
    for (std::size_t k = 0; k < usage.size(); ++k) usage[k] = momentum * usage[k] + (1.0 - momentum) * batch_usage[k];
    for (std::size_t c = 0; c + 1 < offsets.size(); ++c) {
      double total = 0.0;
      for (std::size_t k = offsets[c]; k < offsets[c + 1]; ++k) total += usage[k];
      for (std::size_t k = offsets[c]; k < offsets[c + 1]; ++k) usage[k] /= total;
    }
  }
};

/// lambda_{c,m} = lambda (1 + beta / (u_{c,m} + delta)).
inline std::vector<double> usage_coefficients(const UsageTracker& tracker, double lambda, double beta, double delta) {
  detail::require(delta > 0.0, "usage_coefficients: delta must be positive");
  detail::require(lambda >= 0.0 && beta >= 0.0, "usage_coefficients: lambda and beta must be non-negative");
  std::vector<double> out(tracker.usage.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = lambda * (1.0 + beta / (tracker.usage[k] + delta));
  return out;
}

inline double weight_penalty(const PlaneSet& planes, std::span<const double> coefficients) {
  double total = 0.0;
  for (std::size_t k = 0; k < planes.total_planes(); ++k) total += coefficients[k] * squared_norm(planes.weights.row(k));
  return total;
}

// ---------------------------------------------------------------------------
// Gradients
// ---------------------------------------------------------------------------

struct GradientResult {
  PlaneSet gradients;              // same shape as the parameters
  double cross_entropy = 0.0;
  double penalty = 0.0;
  std::vector<double> batch_usage;  // (1/B) sum_i a_{c,m}(x_i)

  double loss() const { return cross_entropy + penalty; }
};

namespace detail {

/// Cross-entropy part over the given rows: fills gradients, loss and batch
/// usage. Rows are visited in order so the reduction is deterministic.
inline void cross_entropy_gradients(const Matrix& phi, std::span<const std::size_t> rows,
                                    std::span<const std::size_t> labels, const PlaneSet& planes, double alpha,
                                    const TrainConfig& config, GradientResult& out, ForwardResult& fr,
                                    std::vector<double>& log_p) {
  const std::size_t classes = planes.class_count();
  const std::size_t dim = planes.dim();
  const double inv_batch = 1.0 / static_cast<double>(rows.size());
  out.gradients = PlaneSet::zeros_like(planes);
  out.batch_usage.assign(planes.total_planes(), 0.0);
  out.cross_entropy = 0.0;
  log_p.resize(classes);
  for (const std::size_t i : rows) {
    const auto x = phi.row(i);
    const std::size_t y = labels[i];
    forward_features(planes, alpha, x, fr);
    log_softmax_into(fr.class_scores, log_p);
    const double weight = config.class_weights.empty() ? 1.0 : config.class_weights[y];
    for (std::size_t c = 0; c < classes; ++c) {
      const double target = smoothed_target(y, c, classes, config.label_smoothing);
      out.cross_entropy -= weight * target * log_p[c];
      const double ds = weight * (fr.posterior[c] - target) * inv_batch;
      for (std::size_t k = planes.offsets[c]; k < planes.offsets[c + 1]; ++k) {
        const double dz = ds * fr.responsibilities[k];
        double* g = out.gradients.weights.data() + k * dim;
        for (std::size_t j = 0; j < dim; ++j) g[j] += dz * x[j];
        out.gradients.biases[k] += dz;
      }
    }
    for (std::size_t k = 0; k < planes.total_planes(); ++k) out.batch_usage[k] += fr.responsibilities[k] * inv_batch;
  }
  out.cross_entropy *= inv_batch;
}

inline void add_penalty_gradients(const PlaneSet& planes, std::span<const double> coefficients, GradientResult& out) {
  const std::size_t dim = planes.dim();
  out.penalty = weight_penalty(planes, coefficients);
  for (std::size_t k = 0; k < planes.total_planes(); ++k) {
    const double scale = 2.0 * coefficients[k];
    if (scale == 0.0) continue;
    const double* w = planes.weights.data() + k * dim;
    double* g = out.gradients.weights.data() + k * dim;
    for (std::size_t j = 0; j < dim; ++j) g[j] += scale * w[j];
  }
}

inline std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

}  // namespace detail

/// Cross entropy with smoothing and class weights plus usage-aware L2 over
/// the batch. Biases are not penalized. The tracker is read, not updated.
inline double total_loss(const Matrix& phi, std::span<const std::size_t> labels, const PlaneSet& planes, double alpha,
                         const UsageTracker& tracker, const TrainConfig& config) {
  detail::require(phi.rows() > 0 && phi.rows() == labels.size(), "total_loss: empty or mismatched batch");
  detail::require(phi.cols() == planes.dim(), "total_loss: feature dimension mismatch");
  Matrix scores(phi.rows(), planes.class_count());
  ForwardResult fr;
  for (std::size_t i = 0; i < phi.rows(); ++i) {
    forward_features(planes, alpha, phi.row(i), fr);
    std::copy(fr.class_scores.begin(), fr.class_scores.end(), scores.row(i).begin());
  }
  const auto targets = smooth_targets(labels, planes.class_count(), config.label_smoothing);
  const double ce = cross_entropy(log_softmax_rows(scores), targets, labels, config.class_weights);
  const auto coefficients = usage_coefficients(tracker, config.lambda, config.beta, config.delta);
  return ce + weight_penalty(planes, coefficients);
}

/// Analytic gradients of total_loss with the tracker held fixed.
inline GradientResult gradients(const Matrix& phi, std::span<const std::size_t> labels, const PlaneSet& planes,
                                double alpha, const UsageTracker& tracker, const TrainConfig& config) {
  detail::require(phi.rows() > 0 && phi.rows() == labels.size(), "gradients: empty or mismatched batch");
  detail::require(phi.cols() == planes.dim(), "gradients: feature dimension mismatch");
  GradientResult out;
  ForwardResult fr;
  std::vector<double> log_p;
  const auto rows = detail::all_rows(phi.rows());
  detail::cross_entropy_gradients(phi, rows, labels, planes, alpha, config, out, fr, log_p);
  const auto coefficients = usage_coefficients(tracker, config.lambda, config.beta, config.delta);
  detail::add_penalty_gradients(planes, coefficients, out);
  if (!out.gradients.finite() || !std::isfinite(out.loss())) throw DivergenceError("gradients: non-finite value");
  return out;
}

// ---------------------------------------------------------------------------
// Optimizer pieces
// ---------------------------------------------------------------------------

struct AdamState {
  PlaneSet first_moment;
  PlaneSet second_moment;
  std::size_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_parameters(const PlaneSet& params) {
    return AdamState{PlaneSet::zeros_like(params), PlaneSet::zeros_like(params)};
  }
};

namespace detail {

inline void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                        std::span<double> v, const AdamState& s, double step_size, double bias2) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g;
    v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g * g;
    params[i] -= step_size * m[i] / (std::sqrt(v[i] / bias2) + s.epsilon);
  }
}

}  // namespace detail

/// Bias-corrected Adam update with learning rate `lr`.
inline void adam_step(AdamState& state, PlaneSet& params, const PlaneSet& grads, double lr) {
  detail::require(grads.weights.rows() == params.weights.rows() && grads.weights.cols() == params.weights.cols() &&
                      grads.biases.size() == params.biases.size(),
                  "adam_step: gradient shape differs from parameters");
  ++state.step;
  const double bias1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  const double step_size = lr / bias1;
  detail::adam_update(params.weights.values(), grads.weights.values(), state.first_moment.weights.values(),
                      state.second_moment.weights.values(), state, step_size, bias2);
  detail::adam_update(params.biases, grads.biases, state.first_moment.biases, state.second_moment.biases, state,
                      step_size, bias2);
  if (!params.finite()) throw DivergenceError("adam_step: non-finite parameters");
}

inline double lr_at(LrSchedule schedule, double base_lr, std::size_t epoch, std::size_t max_epochs) {
  detail::require(epoch <= max_epochs && max_epochs > 0, "lr_at: epoch outside [0, max_epochs]");
  if (schedule == LrSchedule::cosine)
    return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(max_epochs)));
  return base_lr * std::pow(0.97, static_cast<double>(epoch));
}

/// Linear ramp from alpha_start to alpha_end over the first half of the
/// epoch budget, constant afterwards.
inline double alpha_at(const TrainConfig& config, std::size_t epoch, std::size_t max_epochs) {
  detail::require(epoch <= max_epochs && max_epochs > 0, "alpha_at: epoch outside [0, max_epochs]");
  const double ramp = 0.5 * static_cast<double>(max_epochs);
  const double t = std::min(1.0, static_cast<double>(epoch) / ramp);
  return config.alpha_start + (config.alpha_end - config.alpha_start) * t;
}

inline double global_norm(const PlaneSet& g) {
  return std::sqrt(squared_norm(g.weights.values()) + squared_norm(g.biases));
}

/// Rescales all gradients when their joint L2 norm exceeds clip_norm.
/// Returns the pre-clip norm.
inline double clip_global_norm(PlaneSet& g, double clip_norm) {
  detail::require(clip_norm > 0.0, "clip_global_norm: clip_norm must be positive");
  const double norm = global_norm(g);
  if (norm > clip_norm) {
    const double scale = clip_norm / norm;
    for (double& v : g.weights.values()) v *= scale;
    for (double& v : g.biases) v *= scale;
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Fit loop
// ---------------------------------------------------------------------------

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double alpha = 0.0;
  double lr = 0.0;
  double min_usage = 0.0;
  double max_usage = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  double best_alpha = 0.0;  // alpha in effect when the best snapshot was taken
  bool stopped_early = false;
  bool diverged = false;
  std::string divergence_reason;

  void write_csv(std::ostream& out) const {
    out.precision(17);
    out << "epoch,train_loss,val_loss,alpha,lr,min_usage,max_usage\n";
    for (const auto& e : epochs)
      out << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',' << e.alpha << ',' << e.lr << ','
          << e.min_usage << ',' << e.max_usage << '\n';
  }
};

struct FitResult {
  GmcModel model;
  TrainLog log;
};

/// Mean negative log-likelihood (no smoothing, unit weights) of lifted rows.
inline double mean_nll(const PlaneSet& planes, double alpha, const Matrix& phi, std::span<const std::size_t> labels) {
  ForwardResult fr;
  std::vector<double> log_p(planes.class_count());
  double total = 0.0;
  for (std::size_t i = 0; i < phi.rows(); ++i) {
    forward_features(planes, alpha, phi.row(i), fr);
    log_softmax_into(fr.class_scores, log_p);
    total -= log_p[labels[i]];
  }
  return total / static_cast<double>(phi.rows());
}

/// Trains from the given initial planes on already-lifted features.
/// Validation NLL is evaluated at the current annealed alpha after every
/// epoch; the best snapshot is returned.
inline std::pair<PlaneSet, TrainLog> train_planes(const Matrix& train_phi, std::span<const std::size_t> train_labels,
                                                  const Matrix& val_phi, std::span<const std::size_t> val_labels,
                                                  PlaneSet initial, const TrainConfig& config) {
  config.validate();
  detail::require(train_phi.rows() > 0 && val_phi.rows() > 0, "fit: empty train or validation split");
  detail::require(train_phi.cols() == initial.dim() && val_phi.cols() == initial.dim(), "fit: feature width mismatch");
  detail::require(config.class_weights.empty() || config.class_weights.size() == initial.class_count(),
                  "fit: class_weights length differs from class count");

  PlaneSet params = std::move(initial);
  PlaneSet best = params;
  UsageTracker tracker = UsageTracker::uniform(params, config.usage_momentum);
  AdamState adam = AdamState::for_parameters(params);
  TrainLog log;
  log.best_val_loss = std::numeric_limits<double>::infinity();
  log.best_alpha = config.alpha_start;

  Rng rng = make_rng(config.seed, 0x5aff1e);
  std::vector<std::size_t> order = detail::all_rows(train_phi.rows());
  GradientResult step;
  ForwardResult fr;
  std::vector<double> log_p;
  std::size_t since_improvement = 0;

  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    const double alpha = alpha_at(config, epoch, config.max_epochs);
    const double lr = lr_at(config.lr_schedule, config.learning_rate, epoch, config.max_epochs);
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    bool failed = false;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> batch(order.data() + start, stop - start);
      detail::cross_entropy_gradients(train_phi, batch, train_labels, params, alpha, config, step, fr, log_p);
      tracker.update(step.batch_usage);
      detail::add_penalty_gradients(params, usage_coefficients(tracker, config.lambda, config.beta, config.delta),
                                    step);
      if (!std::isfinite(step.loss()) || !step.gradients.finite()) {
        failed = true;
        break;
      }
      epoch_loss += step.loss() * static_cast<double>(batch.size());
      clip_global_norm(step.gradients, config.clip_norm);
      adam_step(adam, params, step.gradients, lr);
    }
    const double val_loss = failed ? std::numeric_limits<double>::quiet_NaN()
                                   : mean_nll(params, alpha, val_phi, val_labels);
    if (failed || !std::isfinite(val_loss)) {
      log.diverged = true;
      log.divergence_reason = "non-finite loss at epoch " + std::to_string(epoch);
      break;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss / static_cast<double>(order.size());
    rec.val_loss = val_loss;
    rec.alpha = alpha;
    rec.lr = lr;
    rec.min_usage = *std::min_element(tracker.usage.begin(), tracker.usage.end());
    rec.max_usage = *std::max_element(tracker.usage.begin(), tracker.usage.end());
    log.epochs.push_back(rec);

    if (val_loss < log.best_val_loss - config.min_improvement) {
      log.best_val_loss = val_loss;
      log.best_epoch = epoch;
      log.best_alpha = alpha;
      best = params;
      since_improvement = 0;
    } else if (config.early_stopping && ++since_improvement >= config.patience) {
      log.stopped_early = true;
      break;
    }
  }
  if (log.epochs.empty()) best = params;
  return {std::move(best), std::move(log)};
}

/// Full fit on raw datasets with a fitted pipeline, a plane budget and an
/// initializer. The returned model carries alpha = alpha_end.
inline FitResult fit(const Dataset& train, const Dataset& val, const FeaturePipeline& pipeline,
                     const PlaneBudget& budget, const InitSpec& init, const TrainConfig& config,
                     InitResult* init_info = nullptr) {
  detail::require(train.dim() == val.dim() && train.dim() == pipeline.input_dim(),
                  "fit: train, validation and pipeline dimensions differ");
  detail::require(train.class_count == val.class_count, "fit: train and validation class sets differ");
  detail::require(budget.planes.size() == train.class_count, "fit: budget length differs from class count");
  const Matrix train_phi = pipeline.apply(train.features);
  const Matrix val_phi = pipeline.apply(val.features);
  InitResult start = initialize(train_phi, train.labels, budget, init);
  if (init_info) *init_info = start;
  auto [planes, log] = train_planes(train_phi, train.labels, val_phi, val.labels, std::move(start.planes), config);
  FitResult out;
  out.model.pipeline = pipeline;
  out.model.planes = std::move(planes);
  out.model.alpha = config.alpha_end;
  out.model.class_names = train.class_names;
  out.model.feature_names = train.feature_names;
  out.log = std::move(log);
  return out;
}

}  // namespace gmc
