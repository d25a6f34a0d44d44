#pragma once

// Central finite-difference check of the training gradients on small random
// instances. Shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "gmc/training.hpp"

namespace gmc::check {

struct GradientCase {
  Matrix phi;
  std::vector<std::size_t> labels;
  PlaneSet planes;
  UsageTracker tracker;
  TrainConfig config;
  double alpha = 1.0;
};

/// C in 2..3, M_c in 1..3, d' in 1..5, B in 1..8, alpha in {1,3,6},
/// lambda in {0,1e-3}, beta in {0,0.5}, epsilon in {0,0.02}, occasional
/// class weights and a non-uniform usage tracker.
inline GradientCase random_gradient_case(std::uint64_t seed) {
  Rng rng = make_rng(seed, 0x9c);
  auto uniform_int = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);

  GradientCase g;
  const std::size_t classes = uniform_int(2, 3);
  const std::size_t dim = uniform_int(1, 5);
  const std::size_t batch = uniform_int(1, 8);
  std::vector<std::size_t> planes(classes);
  for (auto& m : planes) m = uniform_int(1, 3);
  g.planes = PlaneSet(planes, dim);
  for (double& w : g.planes.weights.values()) w = n(rng);
  for (double& b : g.planes.biases) b = 0.5 * n(rng);
  g.phi = Matrix(batch, dim);
  for (double& v : g.phi.values()) v = n(rng);
  g.labels.resize(batch);
  for (auto& y : g.labels) y = uniform_int(0, classes - 1);

  // seed % 24 walks the grid alpha x lambda x beta x epsilon.
  const std::size_t combo = seed % 24;
  g.alpha = std::array<double, 3>{1.0, 3.0, 6.0}[combo % 3];
  g.config.lambda = (combo / 3) % 2 == 0 ? 0.0 : 1e-3;
  g.config.beta = (combo / 6) % 2 == 0 ? 0.0 : 0.5;
  g.config.delta = 1e-3;
  g.config.label_smoothing = (combo / 12) % 2 == 0 ? 0.0 : 0.02;
  if (seed % 5 == 1) {
    g.config.class_weights.resize(classes);
    for (double& w : g.config.class_weights) w = 0.5 + u(rng);
  }
  g.tracker = UsageTracker::uniform(g.planes, 0.9);
  for (std::size_t c = 0; c < classes; ++c) {
    double total = 0.0;
    for (std::size_t k = g.planes.offsets[c]; k < g.planes.offsets[c + 1]; ++k) total += g.tracker.usage[k] = u(rng) + 0.01;
    for (std::size_t k = g.planes.offsets[c]; k < g.planes.offsets[c + 1]; ++k) g.tracker.usage[k] /= total;
  }
  return g;
}

struct GradientCheck {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
};

/// Relative error |a - f| / max(|a|, |f|, floor) over every weight and bias.
/// The floor keeps near-zero coordinates from dividing rounding noise.
inline GradientCheck check_gradients(const GradientCase& g, double h = 1e-6, double floor = 1e-4) {
  const auto analytic = gradients(g.phi, g.labels, g.planes, g.alpha, g.tracker, g.config).gradients;
  GradientCheck out;
  PlaneSet probe = g.planes;
  auto loss = [&] { return total_loss(g.phi, g.labels, probe, g.alpha, g.tracker, g.config); };
  auto visit = [&](double& param, double grad) {
    const double saved = param;
    param = saved + h;
    const double up = loss();
    param = saved - h;
    const double down = loss();
    param = saved;
    const double fd = (up - down) / (2.0 * h);
    const double scale = std::max({std::abs(grad), std::abs(fd), floor});
    out.max_relative_error = std::max(out.max_relative_error, std::abs(grad - fd) / scale);
    ++out.coordinates;
  };
  for (std::size_t i = 0; i < probe.weights.size(); ++i) visit(probe.weights.values()[i], analytic.weights.values()[i]);
  for (std::size_t k = 0; k < probe.biases.size(); ++k) visit(probe.biases[k], analytic.biases[k]);
  return out;
}

}  // namespace gmc::check
