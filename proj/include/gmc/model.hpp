#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "gmc/error.hpp"
#include "gmc/features.hpp"
#include "gmc/matrix.hpp"

namespace gmc {

/// Ragged per-class plane parameters stored contiguously: plane rows of
/// class c occupy [offsets[c], offsets[c+1]) in `weights` and `biases`.
/// The same shape doubles as a gradient or optimizer-moment container.
struct PlaneSet {
  std::vector<std::size_t> offsets;  // length C+1, offsets[0] == 0
  Matrix weights;                    // M_tot x d'
  std::vector<double> biases;        // M_tot

  PlaneSet() = default;
  PlaneSet(std::span<const std::size_t> planes_per_class, std::size_t dim) {
    offsets.assign(1, 0);
    for (auto m : planes_per_class) {
      detail::require(m >= 1, "PlaneSet: every class needs at least one plane");
      offsets.push_back(offsets.back() + m);
    }
    weights = Matrix(offsets.back(), dim);
    biases.assign(offsets.back(), 0.0);
  }

  static PlaneSet zeros_like(const PlaneSet& other) {
    PlaneSet z;
    z.offsets = other.offsets;
    z.weights = Matrix(other.weights.rows(), other.weights.cols());
    z.biases.assign(other.biases.size(), 0.0);
    return z;
  }

  std::size_t class_count() const noexcept { return offsets.empty() ? 0 : offsets.size() - 1; }
  std::size_t planes(std::size_t c) const noexcept { return offsets[c + 1] - offsets[c]; }
  std::size_t total_planes() const noexcept { return biases.size(); }
  std::size_t dim() const noexcept { return weights.cols(); }
  std::size_t parameter_count() const noexcept { return weights.size() + biases.size(); }

  std::vector<std::size_t> planes_per_class() const {
    std::vector<std::size_t> m(class_count());
    for (std::size_t c = 0; c < m.size(); ++c) m[c] = planes(c);
    return m;
  }

  std::span<double> weight(std::size_t c, std::size_t m) { return weights.row(offsets[c] + m); }
  std::span<const double> weight(std::size_t c, std::size_t m) const { return weights.row(offsets[c] + m); }
  double& bias(std::size_t c, std::size_t m) { return biases[offsets[c] + m]; }
  double bias(std::size_t c, std::size_t m) const { return biases[offsets[c] + m]; }

  bool finite() const { return all_finite(weights.values()) && all_finite(biases); }

  friend bool operator==(const PlaneSet&, const PlaneSet&) = default;
};

// ---------------------------------------------------------------------------
// Pooling primitives. All use max-subtraction.
// ---------------------------------------------------------------------------

/// Soft-OR class score (1/alpha) log sum_m exp(alpha z_m).
inline double log_sum_exp(std::span<const double> z, double alpha) {
  const double top = *std::max_element(z.begin(), z.end());
  double acc = 0.0;
  for (double v : z) acc += std::exp(alpha * (v - top));
  return top + std::log(acc) / alpha;
}

inline double class_score(std::span<const double> z, double alpha) {
  detail::require(alpha > 0.0, "class_score: alpha must be positive");
  detail::require(!z.empty(), "class_score: empty score vector");
  detail::require(all_finite(z), "class_score: non-finite plane score");
  return log_sum_exp(z, alpha);
}

/// Softmax of alpha*z written into `out`.
inline void softmax_into(std::span<const double> z, double alpha, std::span<double> out) {
  const double top = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = std::exp(alpha * (z[i] - top));
    total += out[i];
  }
  for (std::size_t i = 0; i < z.size(); ++i) out[i] /= total;
}

inline std::vector<double> responsibilities(std::span<const double> z, double alpha) {
  detail::require(alpha > 0.0, "responsibilities: alpha must be positive");
  detail::require(!z.empty(), "responsibilities: empty score vector");
  detail::require(all_finite(z), "responsibilities: non-finite plane score");
  std::vector<double> a(z.size());
  softmax_into(z, alpha, a);
  return a;
}

inline std::vector<double> posterior(std::span<const double> s) {
  detail::require(!s.empty() && all_finite(s), "posterior: scores must be finite and non-empty");
  std::vector<double> p(s.size());
  softmax_into(s, 1.0, p);
  return p;
}

/// log softmax(s) written into `out`.
inline void log_softmax_into(std::span<const double> s, std::span<double> out) {
  const double top = *std::max_element(s.begin(), s.end());
  double total = 0.0;
  for (double v : s) total += std::exp(v - top);
  const double log_norm = top + std::log(total);
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = s[i] - log_norm;
}

/// Index of the largest entry; ties go to the lowest index.
inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

/// Buffers for one forward evaluation; reuse across calls to avoid
/// allocation. z and a are ragged by the PlaneSet offsets.
struct ForwardResult {
  std::vector<std::size_t> offsets;
  std::vector<double> plane_scores;      // z, length M_tot
  std::vector<double> responsibilities;  // a, length M_tot
  std::vector<double> class_scores;      // s, length C
  std::vector<double> posterior;         // p, length C

  std::span<const double> z(std::size_t c) const {
    return std::span<const double>(plane_scores).subspan(offsets[c], offsets[c + 1] - offsets[c]);
  }
  std::span<const double> a(std::size_t c) const {
    return std::span<const double>(responsibilities).subspan(offsets[c], offsets[c + 1] - offsets[c]);
  }
};

/// z_{c,m} = w_{c,m} . phi + b_{c,m} for every plane, one pass over M_tot rows.
inline void plane_scores_into(const PlaneSet& planes, std::span<const double> phi, std::span<double> z) {
  const std::size_t dim = planes.dim();
  const double* w = planes.weights.data();
  for (std::size_t k = 0; k < planes.total_planes(); ++k, w += dim) {
    double acc = planes.biases[k];
    for (std::size_t j = 0; j < dim; ++j) acc += w[j] * phi[j];
    z[k] = acc;
  }
}

inline std::vector<std::vector<double>> plane_scores(const PlaneSet& planes, std::span<const double> phi) {
  detail::require(phi.size() == planes.dim(), "plane_scores: feature dimension mismatch");
  std::vector<double> flat(planes.total_planes());
  plane_scores_into(planes, phi, flat);
  std::vector<std::vector<double>> out(planes.class_count());
  for (std::size_t c = 0; c < out.size(); ++c)
    out[c].assign(flat.begin() + static_cast<std::ptrdiff_t>(planes.offsets[c]),
                  flat.begin() + static_cast<std::ptrdiff_t>(planes.offsets[c + 1]));
  return out;
}

/// Evaluates the pooling equations on an already-lifted feature vector.
inline void forward_features(const PlaneSet& planes, double alpha, std::span<const double> phi, ForwardResult& r) {
  const std::size_t total = planes.total_planes();
  const std::size_t classes = planes.class_count();
  r.offsets = planes.offsets;
  r.plane_scores.resize(total);
  r.responsibilities.resize(total);
  r.class_scores.resize(classes);
  r.posterior.resize(classes);
  plane_scores_into(planes, phi, r.plane_scores);
  for (std::size_t c = 0; c < classes; ++c) {
    const std::size_t begin = planes.offsets[c];
    const std::size_t count = planes.offsets[c + 1] - begin;
    const std::span<const double> zc(r.plane_scores.data() + begin, count);
    const std::span<double> ac(r.responsibilities.data() + begin, count);
    const double top = *std::max_element(zc.begin(), zc.end());
    double total_exp = 0.0;
    for (std::size_t m = 0; m < count; ++m) {
      ac[m] = std::exp(alpha * (zc[m] - top));
      total_exp += ac[m];
    }
    for (std::size_t m = 0; m < count; ++m) ac[m] /= total_exp;
    r.class_scores[c] = top + std::log(total_exp) / alpha;
  }
  softmax_into(r.class_scores, 1.0, r.posterior);
}

/// Geometric mixture classifier: per-class planes pooled by a soft-OR at
/// temperature alpha, then a softmax across classes.
struct GmcModel {
  FeaturePipeline pipeline;
  PlaneSet planes;
  double alpha = 6.0;
  std::vector<std::string> class_names;
  std::vector<std::string> feature_names;

  std::size_t class_count() const noexcept { return planes.class_count(); }
  std::size_t input_dim() const noexcept { return pipeline.input_dim(); }

  void validate() const {
    detail::require(alpha > 0.0 && std::isfinite(alpha), "GmcModel: alpha must be positive and finite");
    detail::require(planes.class_count() >= 1, "GmcModel: no classes");
    detail::require(planes.dim() == pipeline.output_dim(), "GmcModel: plane width differs from pipeline output");
    detail::require(planes.finite(), "GmcModel: non-finite parameters");
    for (std::size_t c = 0; c < planes.class_count(); ++c)
      detail::require(planes.planes(c) >= 1, "GmcModel: class without planes");
  }
};

/// Reusable per-thread scratch for raw-input inference.
struct InferenceWorkspace {
  std::vector<double> phi;
  std::vector<double> scratch;
  ForwardResult result;

  explicit InferenceWorkspace(const GmcModel& model)
      : phi(model.pipeline.output_dim()), scratch(model.pipeline.scratch_dim()) {}
};

inline const ForwardResult& forward(const GmcModel& model, std::span<const double> x, InferenceWorkspace& ws) {
  model.pipeline.apply_row(x, ws.phi, ws.scratch);
  forward_features(model.planes, model.alpha, ws.phi, ws.result);
  return ws.result;
}

inline ForwardResult forward(const GmcModel& model, std::span<const double> x) {
  detail::require(x.size() == model.input_dim(), "forward: input dimension mismatch");
  InferenceWorkspace ws(model);
  forward(model, x, ws);
  return ws.result;
}

inline std::vector<ForwardResult> forward_batch(const GmcModel& model, const Matrix& x) {
  detail::require(x.cols() == model.input_dim(), "forward_batch: input dimension mismatch");
  InferenceWorkspace ws(model);
  std::vector<ForwardResult> out;
  out.reserve(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) out.push_back(forward(model, x.row(r), ws));
  return out;
}

/// Class scores s (N x C) for a raw batch.
inline Matrix class_scores(const GmcModel& model, const Matrix& x) {
  detail::require(x.cols() == model.input_dim(), "class_scores: input dimension mismatch");
  InferenceWorkspace ws(model);
  Matrix s(x.rows(), model.class_count());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto& res = forward(model, x.row(r), ws);
    std::copy(res.class_scores.begin(), res.class_scores.end(), s.row(r).begin());
  }
  return s;
}

inline Matrix predict_proba(const GmcModel& model, const Matrix& x) {
  detail::require(x.cols() == model.input_dim(), "predict_proba: input dimension mismatch");
  InferenceWorkspace ws(model);
  Matrix p(x.rows(), model.class_count());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto& res = forward(model, x.row(r), ws);
    std::copy(res.posterior.begin(), res.posterior.end(), p.row(r).begin());
  }
  return p;
}

/// argmax_c p_c(x) per row; ties go to the lower class index.
inline std::vector<std::size_t> predict(const GmcModel& model, const Matrix& x) {
  detail::require(x.cols() == model.input_dim(), "predict: input dimension mismatch");
  InferenceWorkspace ws(model);
  std::vector<std::size_t> labels(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) labels[r] = argmax(forward(model, x.row(r), ws).posterior);
  return labels;
}

}  // namespace gmc
