#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "gmc/datasets.hpp"
#include "gmc/error.hpp"
#include "gmc/matrix.hpp"
#include "gmc/random.hpp"

namespace gmc {

/// Per-feature affine standardization fitted on the training split.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;  // population std-dev; 1 for constant columns

  std::size_t dim() const noexcept { return mean.size(); }

  void transform(std::span<const double> x, std::span<double> out) const {
    for (std::size_t j = 0; j < mean.size(); ++j) out[j] = (x[j] - mean[j]) / scale[j];
  }

  friend bool operator==(const Standardizer&, const Standardizer&) = default;
};

inline constexpr double kMinFeatureScale = 1e-12;

inline Standardizer fit_standardizer(const Matrix& train) {
  detail::require(train.rows() >= 2, "fit_standardizer: need at least 2 samples");
  Standardizer s;
  s.mean = column_means(train);
  s.scale.assign(train.cols(), 0.0);
  for (std::size_t r = 0; r < train.rows(); ++r)
    for (std::size_t c = 0; c < train.cols(); ++c) {
      const double d = train(r, c) - s.mean[c];
      s.scale[c] += d * d;
    }
  for (double& v : s.scale) {
    v = std::sqrt(v / static_cast<double>(train.rows()));
    if (!(v > kMinFeatureScale)) v = 1.0;
  }
  return s;
}

inline Standardizer fit_standardizer(const Dataset& train) { return fit_standardizer(train.features); }

/// Principal subspace of the (already standardized) training features.
struct PcaMap {
  Matrix components;                 // d x r, orthonormal columns, descending eigenvalue
  std::vector<double> center;        // length d
  std::vector<double> eigenvalues;   // all d covariance eigenvalues, descending
  double variance_retained = 1.0;    // requested fraction
  double variance_explained = 1.0;   // achieved fraction with r components

  std::size_t input_dim() const noexcept { return components.rows(); }
  std::size_t output_dim() const noexcept { return components.cols(); }

  void transform(std::span<const double> x, std::span<double> out) const {
    const std::size_t d = components.rows();
    const std::size_t r = components.cols();
    for (std::size_t k = 0; k < r; ++k) out[k] = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double centered = x[j] - center[j];
      for (std::size_t k = 0; k < r; ++k) out[k] += centered * components(j, k);
    }
  }

  friend bool operator==(const PcaMap&, const PcaMap&) = default;
};

/// Retains the smallest number of components whose cumulative explained
/// variance reaches `variance_retained`. Covariance uses denominator N-1.
inline PcaMap fit_pca(const Matrix& train_std, double variance_retained) {
  detail::require(variance_retained > 0.0 && variance_retained <= 1.0,
                  "fit_pca: variance_retained must lie in (0, 1]");
  detail::require(train_std.rows() >= 2, "fit_pca: need at least 2 samples");
  const std::size_t n = train_std.rows();
  const std::size_t d = train_std.cols();
  PcaMap pca;
  pca.center = column_means(train_std);
  Eigen::MatrixXd centered(n, d);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) centered(r, c) = train_std(r, c) - pca.center[c];
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  if (!cov.allFinite()) throw std::invalid_argument("fit_pca: covariance is not finite");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw std::runtime_error("fit_pca: eigendecomposition failed");
  // Eigen returns ascending order.
  const Eigen::VectorXd values = solver.eigenvalues();
  const Eigen::MatrixXd vectors = solver.eigenvectors();
  const double top = std::max(values(static_cast<Eigen::Index>(d - 1)), 0.0);
  pca.eigenvalues.resize(d);
  double total = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    double v = values(static_cast<Eigen::Index>(d - 1 - k));
    if (v < 1e-12 * top) v = 0.0;
    pca.eigenvalues[k] = v;
    total += v;
  }
  std::size_t r = d;
  if (total > 0.0) {
    double cumulative = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      cumulative += pca.eigenvalues[k];
      if (cumulative / total >= variance_retained - 1e-12) {
        r = k + 1;
        break;
      }
    }
  } else {
    r = 1;
  }
  pca.components = Matrix(d, r);
  double kept = 0.0;
  for (std::size_t k = 0; k < r; ++k) {
    const auto col = static_cast<Eigen::Index>(d - 1 - k);
    // Sign convention: largest-magnitude loading is positive.
    Eigen::Index arg = 0;
    vectors.col(col).cwiseAbs().maxCoeff(&arg);
    const double sign = vectors(arg, col) < 0.0 ? -1.0 : 1.0;
    for (std::size_t j = 0; j < d; ++j) pca.components(j, k) = sign * vectors(static_cast<Eigen::Index>(j), col);
    kept += pca.eigenvalues[k];
  }
  pca.variance_retained = variance_retained;
  pca.variance_explained = total > 0.0 ? kept / total : 1.0;
  return pca;
}

/// Random Fourier feature lift for the RBF kernel exp(-gamma |x-y|^2).
/// Output is sqrt(2/D) [cos(omega^T x + b); sin(omega^T x + b)], so the
/// inner product of two lifted points approximates 2 exp(-gamma |x-y|^2).
struct RffMap {
  Matrix omega;                // d_in x D
  std::vector<double> phases;  // length D, in [0, 2pi)
  double gamma = 1.0;

  std::size_t input_dim() const noexcept { return omega.rows(); }
  std::size_t frequency_count() const noexcept { return omega.cols(); }
  std::size_t output_dim() const noexcept { return 2 * omega.cols(); }

  void transform(std::span<const double> x, std::span<double> out) const {
    const std::size_t d = omega.rows();
    const std::size_t count = omega.cols();
    const double amplitude = std::sqrt(2.0 / static_cast<double>(count));
    for (std::size_t k = 0; k < count; ++k) out[k] = phases[k];
    for (std::size_t j = 0; j < d; ++j) {
      const double xj = x[j];
      const double* w = omega.data() + j * count;
      for (std::size_t k = 0; k < count; ++k) out[k] += w[k] * xj;
    }
    for (std::size_t k = 0; k < count; ++k) {
      const double angle = out[k];
      out[k] = amplitude * std::cos(angle);
      out[count + k] = amplitude * std::sin(angle);
    }
  }

  std::vector<double> transform(std::span<const double> x) const {
    detail::require(x.size() == input_dim(), "rff_transform: input dimension mismatch");
    std::vector<double> out(output_dim());
    transform(x, out);
    return out;
  }

  friend bool operator==(const RffMap&, const RffMap&) = default;
};

inline RffMap sample_rff(std::size_t d_in, std::size_t frequency_count, double gamma, std::uint64_t seed) {
  detail::require(frequency_count >= 1, "sample_rff: need at least one frequency");
  detail::require(d_in >= 1, "sample_rff: input dimension must be positive");
  detail::require(gamma > 0.0 && std::isfinite(gamma), "sample_rff: gamma must be positive");
  RffMap map;
  map.gamma = gamma;
  map.omega = Matrix(d_in, frequency_count);
  Rng rng = make_rng(seed, 0x4ff);
  std::normal_distribution<double> frequency(0.0, std::sqrt(2.0 * gamma));
  for (double& w : map.omega.values()) w = frequency(rng);
  const double two_pi = 2.0 * std::numbers::pi;
  std::uniform_real_distribution<double> phase(0.0, two_pi);
  map.phases.resize(frequency_count);
  for (double& b : map.phases) {
    b = phase(rng);
    if (b >= two_pi) b = 0.0;
  }
  return map;
}

enum class LiftKind { linear, rff };

inline const char* to_string(LiftKind kind) { return kind == LiftKind::rff ? "rff" : "linear"; }

/// How to build a FeaturePipeline from training data.
struct PipelineConfig {
  LiftKind lift = LiftKind::linear;
  std::size_t rff_frequencies = 1024;  // D; output width is 2D
  double rff_gamma = 1.0;
  std::optional<double> pca_variance;  // e.g. 0.95
  std::uint64_t seed = 0;

  std::string describe() const {
    std::string s = to_string(lift);
    if (lift == LiftKind::rff) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "(D=%zu,gamma=%g)", rff_frequencies, rff_gamma);
      s += buf;
    }
    if (pca_variance) s += "+pca(" + std::to_string(*pca_variance) + ")";
    return s;
  }
};

/// The working feature map: standardize, then optional PCA, then optional
/// RFF lift.
class FeaturePipeline {
 public:
  FeaturePipeline() = default;
  FeaturePipeline(Standardizer standardizer, std::optional<PcaMap> pca, std::optional<RffMap> rff)
      : standardizer_(std::move(standardizer)), pca_(std::move(pca)), rff_(std::move(rff)) {
    detail::require(!pca_ || pca_->input_dim() == standardizer_.dim(), "FeaturePipeline: PCA input width mismatch");
    const std::size_t mid = pca_ ? pca_->output_dim() : standardizer_.dim();
    detail::require(!rff_ || rff_->input_dim() == mid, "FeaturePipeline: RFF input width mismatch");
  }

  const Standardizer& standardizer() const noexcept { return standardizer_; }
  const std::optional<PcaMap>& pca() const noexcept { return pca_; }
  const std::optional<RffMap>& rff() const noexcept { return rff_; }

  std::size_t input_dim() const noexcept { return standardizer_.dim(); }
  std::size_t output_dim() const noexcept {
    if (rff_) return rff_->output_dim();
    if (pca_) return pca_->output_dim();
    return standardizer_.dim();
  }
  bool is_linear() const noexcept { return !rff_; }

  /// Scratch width needed by apply_row.
  std::size_t scratch_dim() const noexcept { return 2 * standardizer_.dim() + output_dim(); }

  /// Maps one raw row into `out` (length output_dim()). `scratch` must have
  /// at least scratch_dim() entries.
  void apply_row(std::span<const double> x, std::span<double> out, std::span<double> scratch) const {
    const std::size_t d = standardizer_.dim();
    std::span<double> standardized = scratch.subspan(0, d);
    if (!pca_ && !rff_) {
      standardizer_.transform(x, out);
      return;
    }
    standardizer_.transform(x, standardized);
    std::span<const double> stage = standardized;
    if (pca_) {
      std::span<double> projected = rff_ ? scratch.subspan(d, pca_->output_dim()) : out;
      pca_->transform(stage, projected);
      stage = projected;
    }
    if (rff_) rff_->transform(stage, out);
  }

  std::vector<double> apply_row(std::span<const double> x) const {
    detail::require(x.size() == input_dim(), "FeaturePipeline: input dimension mismatch");
    std::vector<double> out(output_dim());
    std::vector<double> scratch(scratch_dim());
    apply_row(x, out, scratch);
    return out;
  }

  Matrix apply(const Matrix& x) const {
    detail::require(x.cols() == input_dim(), "FeaturePipeline: input dimension mismatch");
    Matrix out(x.rows(), output_dim());
    std::vector<double> scratch(scratch_dim());
    for (std::size_t r = 0; r < x.rows(); ++r) apply_row(x.row(r), out.row(r), scratch);
    return out;
  }

  friend bool operator==(const FeaturePipeline&, const FeaturePipeline&) = default;

 private:
  Standardizer standardizer_;
  std::optional<PcaMap> pca_;
  std::optional<RffMap> rff_;
};

inline FeaturePipeline fit_pipeline(const Matrix& train, const PipelineConfig& config) {
  Standardizer standardizer = fit_standardizer(train);
  std::optional<PcaMap> pca;
  std::size_t width = train.cols();
  if (config.pca_variance) {
    Matrix standardized(train.rows(), train.cols());
    for (std::size_t r = 0; r < train.rows(); ++r) standardizer.transform(train.row(r), standardized.row(r));
    pca = fit_pca(standardized, *config.pca_variance);
    width = pca->output_dim();
  }
  std::optional<RffMap> rff;
  if (config.lift == LiftKind::rff) rff = sample_rff(width, config.rff_frequencies, config.rff_gamma, config.seed);
  return FeaturePipeline(std::move(standardizer), std::move(pca), std::move(rff));
}

inline FeaturePipeline fit_pipeline(const Dataset& train, const PipelineConfig& config) {
  return fit_pipeline(train.features, config);
}

}  // namespace gmc
