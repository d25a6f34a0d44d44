#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "gmc/error.hpp"
#include "gmc/matrix.hpp"
#include "gmc/model.hpp"
#include "gmc/random.hpp"

namespace gmc {

// ---------------------------------------------------------------------------
// k-means
// ---------------------------------------------------------------------------

struct KMeansResult {
  Matrix centers;                        // k x d
  std::vector<std::size_t> assignments;  // length n
  double inertia = 0.0;
  std::vector<double> inertia_history;   // one entry per Lloyd iteration
  std::size_t reseed_count = 0;          // empty clusters re-seeded
  std::size_t iterations = 0;
};

inline constexpr std::size_t kKMeansMaxIterations = 100;
inline constexpr double kKMeansShiftTolerance = 1e-6;

namespace detail {

inline std::size_t nearest_center(std::span<const double> point, const Matrix& centers, double* distance = nullptr) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < centers.rows(); ++j) {
    const double d = squared_distance(point, centers.row(j));
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  if (distance) *distance = best_d;
  return best;
}

inline Matrix kmeans_plus_plus(const Matrix& points, std::size_t k, Rng& rng) {
  const std::size_t n = points.rows();
  Matrix centers(k, points.cols());
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::size_t first = pick(rng);
  std::copy(points.row(first).begin(), points.row(first).end(), centers.row(0).begin());
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(points.row(i), centers.row(0));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t j = 1; j < k; ++j) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t chosen = 0;
    if (total > 0.0) {
      double target = unit(rng) * total;
      chosen = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        target -= d2[i];
        if (target < 0.0 && d2[i] > 0.0) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = pick(rng);
    }
    std::copy(points.row(chosen).begin(), points.row(chosen).end(), centers.row(j).begin());
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(points.row(i), centers.row(j)));
  }
  return centers;
}

}  // namespace detail

/// Lloyd's algorithm with k-means++ seeding. Empty clusters take the point
/// farthest from its current centre.
inline KMeansResult kmeans(const Matrix& points, std::size_t k, std::uint64_t seed) {
  const std::size_t n = points.rows();
  detail::require(k >= 1, "kmeans: k must be at least 1");
  detail::require(n >= k, "kmeans: fewer points than clusters");
  const std::size_t d = points.cols();
  Rng rng = make_rng(seed, 0x4b);
  KMeansResult r;
  r.centers = detail::kmeans_plus_plus(points, k, rng);
  r.assignments.assign(n, 0);
  std::vector<double> dist(n);
  std::vector<std::size_t> counts(k);
  Matrix sums(k, d);

  for (std::size_t iter = 0; iter < kKMeansMaxIterations; ++iter) {
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      r.assignments[i] = detail::nearest_center(points.row(i), r.centers, &dist[i]);
      ++counts[r.assignments[i]];
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (counts[j] > 0) continue;
      std::size_t far = n;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i)
        if (counts[r.assignments[i]] > 1 && dist[i] > far_d) {
          far_d = dist[i];
          far = i;
        }
      if (far == n) break;  // cannot happen while n >= k
      --counts[r.assignments[far]];
      r.assignments[far] = j;
      counts[j] = 1;
      dist[far] = 0.0;
      ++r.reseed_count;
    }

    std::fill(sums.values().begin(), sums.values().end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      auto s = sums.row(r.assignments[i]);
      const auto p = points.row(i);
      for (std::size_t c = 0; c < d; ++c) s[c] += p[c];
    }
    double shift = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      auto center = r.centers.row(j);
      double moved = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double updated = sums(j, c) / static_cast<double>(counts[j]);
        moved += (updated - center[c]) * (updated - center[c]);
        center[c] = updated;
      }
      shift = std::max(shift, std::sqrt(moved));
    }
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) inertia += squared_distance(points.row(i), r.centers.row(r.assignments[i]));
    r.inertia = inertia;
    r.inertia_history.push_back(inertia);
    r.iterations = iter + 1;
    if (shift < kKMeansShiftTolerance) break;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Silhouette
// ---------------------------------------------------------------------------

/// Dense Euclidean distance matrix (n x n).
inline Eigen::MatrixXd pairwise_distances(const Matrix& points) {
  const auto n = static_cast<Eigen::Index>(points.rows());
  const auto d = static_cast<Eigen::Index>(points.cols());
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(points.data(), n, d);
  const Eigen::VectorXd norms = x.rowwise().squaredNorm();
  Eigen::MatrixXd g = x * x.transpose();
  Eigen::MatrixXd out(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = std::sqrt(std::max(norms(i) + norms(j) - 2.0 * g(i, j), 0.0));
      out(i, j) = v;
      out(j, i) = v;
    }
  }
  return out;
}

/// Mean silhouette from a precomputed distance matrix. Points in singleton
/// clusters contribute 0.
inline double silhouette_from_distances(const Eigen::MatrixXd& distances, std::span<const std::size_t> assignments) {
  const std::size_t n = assignments.size();
  detail::require(n >= 3, "silhouette: need at least 3 points");
  const std::size_t k = *std::max_element(assignments.begin(), assignments.end()) + 1;
  std::vector<std::size_t> sizes(k, 0);
  for (auto a : assignments) ++sizes[a];
  const auto clusters = static_cast<std::size_t>(std::count_if(sizes.begin(), sizes.end(), [](auto s) { return s > 0; }));
  detail::require(clusters >= 2, "silhouette: need at least 2 non-empty clusters");

  std::vector<double> sum_to(k);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t own = assignments[i];
    if (sizes[own] <= 1) continue;
    std::fill(sum_to.begin(), sum_to.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j)
      sum_to[assignments[j]] += distances(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    const double a = sum_to[own] / static_cast<double>(sizes[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c)
      if (c != own && sizes[c] > 0) b = std::min(b, sum_to[c] / static_cast<double>(sizes[c]));
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

/// Brute-force O(n^2) silhouette score in [-1, 1].
inline double silhouette(const Matrix& points, std::span<const std::size_t> assignments) {
  detail::require(points.rows() == assignments.size(), "silhouette: assignment count differs from point count");
  return silhouette_from_distances(pairwise_distances(points), assignments);
}

// ---------------------------------------------------------------------------
// Plane budgeting
// ---------------------------------------------------------------------------

/// Minimum silhouette for accepting a multi-plane split of a class. A
/// 2-D isotropic Gaussian scores about 0.31-0.33 for k in {2,3,4}; curved
/// or multimodal classes such as moon arcs score about 0.45.
inline constexpr double kSilhouetteThreshold = 0.40;
inline constexpr std::size_t kDefaultPlaneCap = 4;

struct PlaneBudget {
  std::vector<std::size_t> planes;  // M_c per class
  std::size_t cap = kDefaultPlaneCap;

  static PlaneBudget uniform(std::size_t classes, std::size_t m) {
    PlaneBudget b;
    b.planes.assign(classes, m);
    b.cap = std::max<std::size_t>(m, 1);
    return b;
  }

  std::size_t total() const {
    std::size_t t = 0;
    for (auto m : planes) t += m;
    return t;
  }

  void validate() const {
    detail::require(cap >= 1, "PlaneBudget: cap must be at least 1");
    for (auto m : planes) detail::require(m >= 1 && m <= cap, "PlaneBudget: plane count outside [1, cap]");
  }
};

struct BudgetChoice {
  std::size_t planes = 1;
  double best_silhouette = 0.0;  // 0 when no candidate was evaluated
};

inline BudgetChoice auto_plane_budget_detail(const Matrix& class_points, std::size_t cap, std::uint64_t seed,
                                             double threshold = kSilhouetteThreshold) {
  detail::require(cap >= 1, "auto_plane_budget: cap must be at least 1");
  const std::size_t n = class_points.rows();
  BudgetChoice choice;
  if (n < 2 * cap || cap < 2) return choice;
  const Eigen::MatrixXd distances = pairwise_distances(class_points);
  double best = -std::numeric_limits<double>::infinity();
  std::size_t best_k = 1;
  for (std::size_t k = 2; k <= std::min(cap, n - 1); ++k) {
    const KMeansResult km = kmeans(class_points, k, derive_seed(seed, k));
    const double score = silhouette_from_distances(distances, km.assignments);
    if (score > best) {
      best = score;
      best_k = k;
    }
  }
  choice.best_silhouette = best;
  if (best >= threshold) choice.planes = best_k;
  return choice;
}

/// Number of planes for one class: the k in {2..cap} with the best
/// silhouette when it clears the threshold, otherwise 1.
inline std::size_t auto_plane_budget(const Matrix& class_points, std::size_t cap, std::uint64_t seed,
                                     double threshold = kSilhouetteThreshold) {
  return auto_plane_budget_detail(class_points, cap, seed, threshold).planes;
}

inline std::vector<Matrix> split_by_class(const Matrix& x, std::span<const std::size_t> labels, std::size_t classes) {
  std::vector<std::vector<std::size_t>> idx(classes);
  for (std::size_t i = 0; i < labels.size(); ++i) idx[labels[i]].push_back(i);
  std::vector<Matrix> out;
  out.reserve(classes);
  for (const auto& members : idx) out.push_back(select_rows(x, members));
  return out;
}

inline PlaneBudget compute_plane_budget(const Matrix& train_phi, std::span<const std::size_t> labels,
                                        std::size_t classes, std::size_t cap, std::uint64_t seed,
                                        double threshold = kSilhouetteThreshold) {
  PlaneBudget budget;
  budget.cap = cap;
  const auto per_class = split_by_class(train_phi, labels, classes);
  for (std::size_t c = 0; c < classes; ++c)
    budget.planes.push_back(auto_plane_budget(per_class[c], cap, derive_seed(seed, 100 + c), threshold));
  return budget;
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

enum class InitStrategy { kmeans, logreg, random, automatic };

inline const char* to_string(InitStrategy s) {
  switch (s) {
    case InitStrategy::kmeans: return "kmeans";
    case InitStrategy::logreg: return "logreg";
    case InitStrategy::random: return "random";
    case InitStrategy::automatic: return "auto";
  }
  return "?";
}

struct InitSpec {
  InitStrategy strategy = InitStrategy::automatic;
  double noise_scale = 0.05;
  std::uint64_t seed = 0;
};

struct InitResult {
  PlaneSet planes;
  InitStrategy used = InitStrategy::random;
  bool unstable = false;  // k-means only: instability detected
  std::string note;
};

inline constexpr double kKMeansInitScale = 1.0;
inline constexpr double kRandomInitStd = 0.01;

namespace detail {

inline void random_unit(std::span<double> out, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  double norm = 0.0;
  while (norm < 1e-12) {
    for (double& v : out) v = g(rng);
    norm = std::sqrt(squared_norm(out));
  }
  for (double& v : out) v /= norm;
}

}  // namespace detail

/// Planes point from the global training mean toward per-class k-means
/// centres: w = kappa (mu - mean) / |mu - mean|, b = -w . mean, so each
/// plane is zero at the global mean and positive on its own cluster.
inline InitResult init_kmeans(const Matrix& train_phi, std::span<const std::size_t> labels,
                              const PlaneBudget& budget, std::uint64_t seed) {
  budget.validate();
  const std::size_t classes = budget.planes.size();
  const std::size_t dim = train_phi.cols();
  InitResult out;
  out.used = InitStrategy::kmeans;
  out.planes = PlaneSet(budget.planes, dim);
  const std::vector<double> global_mean = column_means(train_phi);
  const auto per_class = split_by_class(train_phi, labels, classes);
  Rng fallback = make_rng(seed, 0xfa11);
  std::vector<double> direction(dim);
  for (std::size_t c = 0; c < classes; ++c) {
    const std::size_t m_c = budget.planes[c];
    const Matrix& pts = per_class[c];
    if (pts.rows() < std::max<std::size_t>(m_c, 2)) {
      out.unstable = true;
      out.note += "class " + std::to_string(c) + ": too few points for k-means; ";
    }
    Matrix centers;
    if (pts.rows() >= m_c && pts.rows() >= 1) {
      const KMeansResult km = kmeans(pts, m_c, derive_seed(seed, c));
      centers = km.centers;
      if (km.reseed_count > 2) {
        out.unstable = true;
        out.note += "class " + std::to_string(c) + ": repeated empty-cluster reseeds; ";
      }
      if (m_c >= 2 && pts.rows() >= 3) {
        const double score = silhouette(pts, km.assignments);
        if (score < 0.0) {
          out.unstable = true;
          out.note += "class " + std::to_string(c) + ": negative silhouette; ";
        }
      }
    } else {
      centers = Matrix(m_c, dim);
      for (std::size_t m = 0; m < m_c; ++m)
        std::copy(global_mean.begin(), global_mean.end(), centers.row(m).begin());
    }
    for (std::size_t m = 0; m < m_c; ++m) {
      const auto mu = centers.row(m);
      for (std::size_t j = 0; j < dim; ++j) direction[j] = mu[j] - global_mean[j];
      const double norm = std::sqrt(squared_norm(direction));
      if (norm < 1e-9) {
        detail::random_unit(direction, fallback);
        out.unstable = true;
        out.note += "class " + std::to_string(c) + ": degenerate centre, random direction; ";
      } else {
        for (double& v : direction) v /= norm;
      }
      auto w = out.planes.weight(c, m);
      for (std::size_t j = 0; j < dim; ++j) w[j] = kKMeansInitScale * direction[j];
      out.planes.bias(c, m) = -dot(w, global_mean);
    }
  }
  return out;
}

namespace detail {

/// Binary logistic regression (full batch Adam, light L2) used to seed
/// class-vs-rest directions.
inline std::pair<std::vector<double>, double> fit_binary_logistic(const Matrix& x, std::span<const double> targets) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  constexpr std::size_t kIterations = 300;
  constexpr double kRate = 0.05;
  constexpr double kL2 = 1e-4;
  std::vector<double> w(d, 0.0), gw(d), mw(d, 0.0), vw(d, 0.0);
  double b = 0.0, mb = 0.0, vb = 0.0;
  double beta1_t = 1.0, beta2_t = 1.0;
  for (std::size_t it = 0; it < kIterations; ++it) {
    std::fill(gw.begin(), gw.end(), 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto xi = x.row(i);
      const double z = dot(w, xi) + b;
      const double p = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
      const double g = (p - targets[i]) / static_cast<double>(n);
      for (std::size_t j = 0; j < d; ++j) gw[j] += g * xi[j];
      gb += g;
    }
    for (std::size_t j = 0; j < d; ++j) gw[j] += 2.0 * kL2 * w[j];
    beta1_t *= 0.9;
    beta2_t *= 0.999;
    for (std::size_t j = 0; j < d; ++j) {
      mw[j] = 0.9 * mw[j] + 0.1 * gw[j];
      vw[j] = 0.999 * vw[j] + 0.001 * gw[j] * gw[j];
      w[j] -= kRate * (mw[j] / (1.0 - beta1_t)) / (std::sqrt(vw[j] / (1.0 - beta2_t)) + 1e-8);
    }
    mb = 0.9 * mb + 0.1 * gb;
    vb = 0.999 * vb + 0.001 * gb * gb;
    b -= kRate * (mb / (1.0 - beta1_t)) / (std::sqrt(vb / (1.0 - beta2_t)) + 1e-8);
  }
  if (!all_finite(w) || !std::isfinite(b)) throw DivergenceError("init_logreg: logistic fit diverged");
  return {std::move(w), b};
}

}  // namespace detail

/// One-vs-rest logistic direction per class, replicated M_c times with
/// Gaussian noise of std noise_scale * |w|.
inline InitResult init_logreg(const Matrix& train_phi, std::span<const std::size_t> labels, const PlaneBudget& budget,
                              double noise_scale, std::uint64_t seed) {
  budget.validate();
  detail::require(noise_scale >= 0.0, "init_logreg: noise_scale must be non-negative");
  const std::size_t classes = budget.planes.size();
  detail::require(classes >= 2, "init_logreg: need at least two classes");
  InitResult out;
  out.used = InitStrategy::logreg;
  out.planes = PlaneSet(budget.planes, train_phi.cols());
  std::vector<double> targets(labels.size());
  Rng rng = make_rng(seed, 0x109);
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < labels.size(); ++i) targets[i] = labels[i] == c ? 1.0 : 0.0;
    auto [w, b] = detail::fit_binary_logistic(train_phi, targets);
    const double norm = std::sqrt(squared_norm(w));
    if (!(norm > 1e-9)) throw DivergenceError("init_logreg: degenerate class-vs-rest direction");
    std::normal_distribution<double> noise(0.0, noise_scale * norm);
    for (std::size_t m = 0; m < budget.planes[c]; ++m) {
      auto row = out.planes.weight(c, m);
      for (std::size_t j = 0; j < w.size(); ++j) row[j] = w[j] + (noise_scale > 0.0 ? noise(rng) : 0.0);
      out.planes.bias(c, m) = b;
    }
  }
  return out;
}

inline InitResult init_random(std::size_t dim, const PlaneBudget& budget, std::uint64_t seed) {
  budget.validate();
  InitResult out;
  out.used = InitStrategy::random;
  out.planes = PlaneSet(budget.planes, dim);
  Rng rng = make_rng(seed, 0x7a);
  std::normal_distribution<double> g(0.0, kRandomInitStd);
  for (double& w : out.planes.weights.values()) w = g(rng);
  return out;
}

/// k-means, then class-vs-rest logistic seeds, then small random weights.
inline InitResult init_auto(const Matrix& train_phi, std::span<const std::size_t> labels, const PlaneBudget& budget,
                            double noise_scale, std::uint64_t seed) {
  std::string note;
  try {
    InitResult km = init_kmeans(train_phi, labels, budget, seed);
    if (!km.unstable && km.planes.finite()) return km;
    note = "k-means unstable (" + km.note + "); ";
  } catch (const std::exception& e) {
    note = std::string("k-means failed: ") + e.what() + "; ";
  }
  try {
    InitResult lr = init_logreg(train_phi, labels, budget, noise_scale, seed);
    if (lr.planes.finite()) {
      lr.note = note + "used logreg";
      return lr;
    }
    note += "logreg produced non-finite parameters; ";
  } catch (const std::exception& e) {
    note += std::string("logreg failed: ") + e.what() + "; ";
  }
  InitResult rnd = init_random(train_phi.cols(), budget, seed);
  rnd.note = note + "used random";
  return rnd;
}

inline InitResult initialize(const Matrix& train_phi, std::span<const std::size_t> labels, const PlaneBudget& budget,
                             const InitSpec& spec) {
  switch (spec.strategy) {
    case InitStrategy::kmeans: return init_kmeans(train_phi, labels, budget, spec.seed);
    case InitStrategy::logreg: return init_logreg(train_phi, labels, budget, spec.noise_scale, spec.seed);
    case InitStrategy::random: return init_random(train_phi.cols(), budget, spec.seed);
    case InitStrategy::automatic: break;
  }
  return init_auto(train_phi, labels, budget, spec.noise_scale, spec.seed);
}

}  // namespace gmc
