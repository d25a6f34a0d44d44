#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "gmc/error.hpp"
#include "gmc/matrix.hpp"
#include "gmc/random.hpp"

namespace gmc {

/// Labelled feature matrix. Labels are contiguous class indices 0..C-1.
struct Dataset {
  Matrix features;
  std::vector<std::size_t> labels;
  std::size_t class_count = 0;
  std::vector<std::string> feature_names;  // empty or one per column
  std::vector<std::string> class_names;    // empty or one per class

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return features.cols(); }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(class_count, 0);
    for (auto y : labels) ++counts[y];
    return counts;
  }

  /// Throws std::invalid_argument when an invariant is broken.
  void validate() const {
    detail::require(features.rows() == labels.size(), "Dataset: feature rows and label count differ");
    detail::require(class_count >= 1, "Dataset: class_count must be at least 1");
    detail::require(all_finite(features.values()), "Dataset: features contain non-finite values");
    std::vector<bool> seen(class_count, false);
    for (auto y : labels) {
      detail::require(y < class_count, "Dataset: label out of range");
      seen[y] = true;
    }
    for (bool s : seen) detail::require(s, "Dataset: a class index has no samples");
    detail::require(feature_names.empty() || feature_names.size() == dim(),
                    "Dataset: feature_names length differs from column count");
  }
};

/// Subset of rows, keeping class metadata.
inline Dataset subset(const Dataset& ds, std::span<const std::size_t> indices) {
  Dataset out;
  out.features = select_rows(ds.features, indices);
  out.labels.reserve(indices.size());
  for (auto i : indices) out.labels.push_back(ds.labels[i]);
  out.class_count = ds.class_count;
  out.feature_names = ds.feature_names;
  out.class_names = ds.class_names;
  return out;
}

namespace detail {

inline double linspace_at(double lo, double hi, std::size_t i, std::size_t count) {
  if (count <= 1) return lo;
  return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
}

inline void add_gaussian_noise(Matrix& m, double stddev, Rng& rng) {
  if (stddev <= 0.0) return;
  std::normal_distribution<double> noise(0.0, stddev);
  for (double& v : m.values()) v += noise(rng);
}

inline Dataset two_class_dataset(Matrix features, std::size_t n0) {
  Dataset ds;
  ds.labels.assign(features.rows(), 1);
  for (std::size_t i = 0; i < n0; ++i) ds.labels[i] = 0;
  ds.features = std::move(features);
  ds.class_count = 2;
  ds.feature_names = {"x0", "x1"};
  return ds;
}

}  // namespace detail

/// Two interleaved half circles. Class 0 is the upper unit arc, class 1 the
/// lower arc shifted by (1, -0.5). Noise is added per coordinate.
inline Dataset make_moons(std::size_t n, double noise, std::uint64_t seed) {
  detail::require(n >= 2, "make_moons: n must be at least 2");
  detail::require(noise >= 0.0, "make_moons: noise must be non-negative");
  const std::size_t n0 = n / 2;
  const std::size_t n1 = n - n0;
  Matrix x(n, 2);
  for (std::size_t i = 0; i < n0; ++i) {
    const double t = detail::linspace_at(0.0, std::numbers::pi, i, n0);
    x(i, 0) = std::cos(t);
    x(i, 1) = std::sin(t);
  }
  for (std::size_t i = 0; i < n1; ++i) {
    const double t = detail::linspace_at(0.0, std::numbers::pi, i, n1);
    x(n0 + i, 0) = 1.0 - std::cos(t);
    x(n0 + i, 1) = 0.5 - std::sin(t);
  }
  Rng rng = make_rng(seed);
  detail::add_gaussian_noise(x, noise, rng);
  return detail::two_class_dataset(std::move(x), n0);
}

/// Concentric circles: class 0 on the unit circle, class 1 on a circle of
/// radius `radius_ratio`.
inline Dataset make_circles(std::size_t n, double radius_ratio, double noise, std::uint64_t seed) {
  detail::require(n >= 2, "make_circles: n must be at least 2");
  detail::require(radius_ratio > 0.0 && radius_ratio < 1.0, "make_circles: radius_ratio must lie in (0, 1)");
  detail::require(noise >= 0.0, "make_circles: noise must be non-negative");
  const std::size_t n0 = n / 2;
  const std::size_t n1 = n - n0;
  Matrix x(n, 2);
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t i = 0; i < n0; ++i) {
    const double t = two_pi * static_cast<double>(i) / static_cast<double>(n0);
    x(i, 0) = std::cos(t);
    x(i, 1) = std::sin(t);
  }
  for (std::size_t i = 0; i < n1; ++i) {
    const double t = two_pi * static_cast<double>(i) / static_cast<double>(n1);
    x(n0 + i, 0) = radius_ratio * std::cos(t);
    x(n0 + i, 1) = radius_ratio * std::sin(t);
  }
  Rng rng = make_rng(seed);
  detail::add_gaussian_noise(x, noise, rng);
  return detail::two_class_dataset(std::move(x), n0);
}

/// Shear applied to every blob sample: x' = x * kAnisoShear (row vector).
inline constexpr double kAnisoShear[2][2] = {{0.6, -0.6}, {-0.4, 0.8}};

/// Unit-variance blob centres on an equilateral triangle of side 2.5 before
/// the shear. Nearest-centre (Bayes) accuracy is about 0.82.
inline constexpr double kAnisoCenters[3][2] = {{0.0, 0.0}, {2.5, 0.0}, {1.25, 2.1650635094610966}};

inline Dataset make_aniso_blobs(std::size_t n, std::uint64_t seed) {
  detail::require(n >= 3, "make_aniso_blobs: n must be at least 3");
  Rng rng = make_rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  Dataset ds;
  ds.features = Matrix(n, 2);
  ds.labels.resize(n);
  ds.class_count = 3;
  ds.feature_names = {"x0", "x1"};
  std::size_t i = 0;
  for (std::size_t c = 0; c < 3; ++c) {
    const std::size_t count = n / 3 + (c < n % 3 ? 1 : 0);
    for (std::size_t k = 0; k < count; ++k, ++i) {
      const double px = kAnisoCenters[c][0] + unit(rng);
      const double py = kAnisoCenters[c][1] + unit(rng);
      ds.features(i, 0) = px * kAnisoShear[0][0] + py * kAnisoShear[1][0];
      ds.features(i, 1) = px * kAnisoShear[0][1] + py * kAnisoShear[1][1];
      ds.labels[i] = c;
    }
  }
  return ds;
}

/// Archimedean spiral r = theta / (2*pi), theta from pi/2 over `turns` full
/// turns. Samples are spaced roughly uniformly in arc length. Class 1 is
/// class 0 rotated by pi. The data is noise free and the seed is unused;
/// it is accepted for interface symmetry with the other generators.
inline Dataset make_two_spirals(std::size_t n, double turns, std::uint64_t /*seed*/) {
  detail::require(n >= 2, "make_two_spirals: n must be at least 2");
  detail::require(turns > 0.0, "make_two_spirals: turns must be positive");
  const std::size_t n0 = n / 2;
  const std::size_t n1 = n - n0;
  const double two_pi = 2.0 * std::numbers::pi;
  const double theta_start = std::numbers::pi / 2.0;
  const double theta_end = theta_start + two_pi * turns;
  auto theta_at = [&](std::size_t i, std::size_t count) {
    const double u = detail::linspace_at(0.0, 1.0, i, count);
    return std::sqrt(theta_start * theta_start + u * (theta_end * theta_end - theta_start * theta_start));
  };
  Matrix x(n, 2);
  for (std::size_t i = 0; i < n0; ++i) {
    const double theta = theta_at(i, n0);
    const double r = theta / two_pi;
    x(i, 0) = r * std::cos(theta);
    x(i, 1) = r * std::sin(theta);
  }
  for (std::size_t i = 0; i < n1; ++i) {
    const double theta = theta_at(i, n1);
    const double r = theta / two_pi;
    x(n0 + i, 0) = -r * std::cos(theta);
    x(n0 + i, 1) = -r * std::sin(theta);
  }
  return detail::two_class_dataset(std::move(x), n0);
}

inline double two_spirals_radius(double theta) { return theta / (2.0 * std::numbers::pi); }

}  // namespace gmc
