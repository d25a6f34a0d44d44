#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "gmc/datasets.hpp"
#include "gmc/error.hpp"
#include "gmc/model.hpp"

namespace gmc {

struct ResponsibilityStats {
  double maxresp = 0.0;       // mean over samples of max_m a_{y,m}(x)
  double resp_entropy = 0.0;  // mean over samples of -sum_m a log a
};

/// Responsibility concentration of the true class's planes at model alpha.
inline ResponsibilityStats responsibility_stats(const GmcModel& model, const Matrix& x,
                                                std::span<const std::size_t> y) {
  detail::require(x.cols() == model.input_dim(), "responsibility_stats: input dimension mismatch");
  detail::require(x.rows() == y.size() && !y.empty(), "responsibility_stats: need matching non-empty labels");
  InferenceWorkspace ws(model);
  ResponsibilityStats stats;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto& r = forward(model, x.row(i), ws);
    const auto a = r.a(y[i]);
    double entropy = 0.0;
    for (double v : a)
      if (v > 0.0) entropy -= v * std::log(v);
    stats.maxresp += *std::max_element(a.begin(), a.end());
    stats.resp_entropy += entropy;
  }
  stats.maxresp /= static_cast<double>(x.rows());
  stats.resp_entropy /= static_cast<double>(x.rows());
  return stats;
}

/// Winner fractions per class: share of class-c samples whose argmax
/// responsibility among class c's planes is plane m.
struct PlaneUsage {
  std::vector<std::vector<double>> fractions;  // [class][plane]
  std::vector<bool> class_absent;
};

inline PlaneUsage plane_usage(const GmcModel& model, const Matrix& x, std::span<const std::size_t> y) {
  detail::require(x.cols() == model.input_dim(), "plane_usage: input dimension mismatch");
  detail::require(x.rows() == y.size(), "plane_usage: label count mismatch");
  const std::size_t classes = model.class_count();
  PlaneUsage usage;
  usage.fractions.resize(classes);
  usage.class_absent.assign(classes, false);
  std::vector<std::size_t> totals(classes, 0);
  for (std::size_t c = 0; c < classes; ++c) usage.fractions[c].assign(model.planes.planes(c), 0.0);
  InferenceWorkspace ws(model);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto& r = forward(model, x.row(i), ws);
    usage.fractions[y[i]][argmax(r.a(y[i]))] += 1.0;
    ++totals[y[i]];
  }
  for (std::size_t c = 0; c < classes; ++c) {
    if (totals[c] == 0) {
      usage.class_absent[c] = true;
      continue;
    }
    for (double& f : usage.fractions[c]) f /= static_cast<double>(totals[c]);
  }
  return usage;
}

/// Appendix-style table: one row per class, percentages per plane.
inline void write_plane_usage_csv(std::ostream& out, const PlaneUsage& usage) {
  std::size_t widest = 0;
  for (const auto& row : usage.fractions) widest = std::max(widest, row.size());
  out << "class";
  for (std::size_t m = 0; m < widest; ++m) out << ",plane_" << (m + 1) << "_pct";
  out << '\n';
  out.setf(std::ios::fixed);
  out.precision(1);
  for (std::size_t c = 0; c < usage.fractions.size(); ++c) {
    out << c;
    for (std::size_t m = 0; m < widest; ++m)
      out << ',' << (m < usage.fractions[c].size() ? 100.0 * usage.fractions[c][m] : 0.0);
    out << '\n';
  }
  out.unsetf(std::ios::fixed);
}

struct SalientFeature {
  std::size_t index = 0;
  std::string name;
  double weight = 0.0;      // signed, in standardized units
  double raw_weight = 0.0;  // weight / feature scale
};

/// Top-k input features of plane (c, m) by |w|, with sign. Only defined for
/// pipelines without a random-feature lift or PCA rotation.
inline std::vector<SalientFeature> plane_saliency(const GmcModel& model, std::size_t c, std::size_t m, std::size_t k,
                                                  std::span<const std::string> feature_names = {}) {
  if (model.pipeline.rff()) throw Unsupported("plane_saliency: lifted (RFF) coordinates have no per-feature meaning");
  if (model.pipeline.pca()) throw Unsupported("plane_saliency: PCA components do not map to single input features");
  detail::require(c < model.class_count() && m < model.planes.planes(c), "plane_saliency: plane index out of range");
  const auto w = model.planes.weight(c, m);
  detail::require(k <= w.size(), "plane_saliency: k exceeds feature count");
  std::vector<std::size_t> order(w.size());
  for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return std::abs(w[a]) > std::abs(w[b]); });
  const auto& scale = model.pipeline.standardizer().scale;
  std::vector<SalientFeature> out;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = order[i];
    SalientFeature f;
    f.index = j;
    f.name = j < feature_names.size() ? feature_names[j] : "x" + std::to_string(j);
    f.weight = w[j];
    f.raw_weight = w[j] / scale[j];
    out.push_back(std::move(f));
  }
  return out;
}

// ---------------------------------------------------------------------------
// 2-D grids
// ---------------------------------------------------------------------------

struct GridBounds {
  double x_min = -1.0, x_max = 1.0, y_min = -1.0, y_max = 1.0;
};

inline constexpr std::size_t kDefaultGridResolution = 300;

/// Data bounding box grown by `margin` of its extent on every side.
inline GridBounds bounds_from_data(const Matrix& x, double margin = 0.10) {
  detail::require(x.cols() == 2 && x.rows() > 0, "bounds_from_data: need non-empty 2-D data");
  GridBounds b{x(0, 0), x(0, 0), x(0, 1), x(0, 1)};
  for (std::size_t r = 0; r < x.rows(); ++r) {
    b.x_min = std::min(b.x_min, x(r, 0));
    b.x_max = std::max(b.x_max, x(r, 0));
    b.y_min = std::min(b.y_min, x(r, 1));
    b.y_max = std::max(b.y_max, x(r, 1));
  }
  const double dx = std::max(b.x_max - b.x_min, 1e-9) * margin;
  const double dy = std::max(b.y_max - b.y_min, 1e-9) * margin;
  return {b.x_min - dx, b.x_max + dx, b.y_min - dy, b.y_max + dy};
}

/// Row-major lattice of cell centres: cell (i, j) has x index i, y index j
/// and flat index j * resolution + i.
struct GridMap {
  GridBounds bounds;
  std::size_t resolution = 0;
  std::vector<std::size_t> predicted;       // per cell
  std::size_t responsibility_class = 0;
  std::size_t planes = 0;                   // planes of responsibility_class (0 if none)
  std::vector<double> responsibilities;     // cell-major, `planes` values per cell

  std::size_t cell_count() const noexcept { return resolution * resolution; }

  std::pair<double, double> cell_center(std::size_t cell) const {
    const std::size_t i = cell % resolution;
    const std::size_t j = cell / resolution;
    const double fx = (static_cast<double>(i) + 0.5) / static_cast<double>(resolution);
    const double fy = (static_cast<double>(j) + 0.5) / static_cast<double>(resolution);
    return {bounds.x_min + fx * (bounds.x_max - bounds.x_min), bounds.y_min + fy * (bounds.y_max - bounds.y_min)};
  }

  std::size_t winning_plane(std::size_t cell) const {
    return argmax(std::span<const double>(responsibilities).subspan(cell * planes, planes));
  }

  void write_csv(std::ostream& out) const {
    out.precision(17);
    out << "x,y,predicted";
    for (std::size_t m = 0; m < planes; ++m) out << ",resp_" << (m + 1);
    if (planes > 0) out << ",winner";
    out << '\n';
    for (std::size_t cell = 0; cell < cell_count(); ++cell) {
      const auto [cx, cy] = cell_center(cell);
      out << cx << ',' << cy << ',' << predicted[cell];
      for (std::size_t m = 0; m < planes; ++m) out << ',' << responsibilities[cell * planes + m];
      if (planes > 0) out << ',' << winning_plane(cell);
      out << '\n';
    }
  }
};

namespace detail {

inline GridMap evaluate_grid(const GmcModel& model, const GridBounds& bounds, std::size_t resolution,
                             std::optional<std::size_t> resp_class) {
  if (model.input_dim() != 2) throw std::invalid_argument("grid: model input space is not 2-D");
  detail::require(resolution >= 1, "grid: resolution must be at least 1");
  detail::require(bounds.x_max > bounds.x_min && bounds.y_max > bounds.y_min, "grid: empty bounds");
  GridMap g;
  g.bounds = bounds;
  g.resolution = resolution;
  g.predicted.resize(g.cell_count());
  if (resp_class) {
    detail::require(*resp_class < model.class_count(), "grid: class index out of range");
    g.responsibility_class = *resp_class;
    g.planes = model.planes.planes(*resp_class);
    g.responsibilities.resize(g.cell_count() * g.planes);
  }
  InferenceWorkspace ws(model);
  for (std::size_t cell = 0; cell < g.cell_count(); ++cell) {
    const auto [cx, cy] = g.cell_center(cell);
    const double point[2] = {cx, cy};
    const auto& r = forward(model, point, ws);
    g.predicted[cell] = argmax(r.posterior);
    if (resp_class) {
      const auto a = r.a(*resp_class);
      std::copy(a.begin(), a.end(), g.responsibilities.begin() + static_cast<std::ptrdiff_t>(cell * g.planes));
    }
  }
  return g;
}

}  // namespace detail

inline GridMap decision_grid(const GmcModel& model, const GridBounds& bounds,
                             std::size_t resolution = kDefaultGridResolution) {
  return detail::evaluate_grid(model, bounds, resolution, std::nullopt);
}

/// Decision regions plus the responsibilities of class `c`'s planes.
inline GridMap responsibility_grid(const GmcModel& model, std::size_t c, const GridBounds& bounds,
                                   std::size_t resolution = kDefaultGridResolution) {
  return detail::evaluate_grid(model, bounds, resolution, c);
}

}  // namespace gmc
