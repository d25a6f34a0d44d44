#include <gtest/gtest.h>

#include <cmath>

#include "gmc/datasets.hpp"
#include "gmc/features.hpp"
#include "gmc/recipe.hpp"
#include "gmc/split.hpp"

using namespace gmc;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng = make_rng(seed, 99);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = n(rng);
  return m;
}

}  // namespace

TEST(Standardizer, TwoPointPopulationScale) {
  const Matrix x = Matrix::from_rows({{0.0}, {2.0}});
  const Standardizer s = fit_standardizer(x);
  EXPECT_DOUBLE_EQ(s.mean[0], 1.0);
  EXPECT_DOUBLE_EQ(s.scale[0], 1.0);
}

TEST(Standardizer, ConstantColumnClampedToOne) {
  const Matrix x = Matrix::from_rows({{3.0, 1.0}, {3.0, 2.0}, {3.0, 4.0}});
  const Standardizer s = fit_standardizer(x);
  EXPECT_EQ(s.scale[0], 1.0);
  std::vector<double> out(2);
  for (std::size_t r = 0; r < 3; ++r) {
    s.transform(x.row(r), out);
    EXPECT_EQ(out[0], 0.0);
  }
}

TEST(Standardizer, TrainingColumnsCenteredAndUnitStd) {
  const Matrix x = random_matrix(200, 5, 1);
  const Standardizer s = fit_standardizer(x);
  Matrix z(200, 5);
  for (std::size_t r = 0; r < 200; ++r) s.transform(x.row(r), z.row(r));
  const auto means = column_means(z);
  for (std::size_t c = 0; c < 5; ++c) {
    EXPECT_LT(std::abs(means[c]), 1e-10);
    double ss = 0.0;
    for (std::size_t r = 0; r < 200; ++r) ss += z(r, c) * z(r, c);
    EXPECT_NEAR(std::sqrt(ss / 200.0), 1.0, 1e-8);
  }
  EXPECT_THROW(fit_standardizer(Matrix(1, 3)), std::invalid_argument);
}

TEST(Pca, FullRetentionKeepsRank) {
  const PcaMap full = fit_pca(random_matrix(50, 10, 2), 1.0);
  EXPECT_EQ(full.output_dim(), 10u);
  // Fewer samples than features: rank N - 1.
  const PcaMap wide = fit_pca(random_matrix(5, 10, 3), 1.0);
  EXPECT_EQ(wide.output_dim(), 4u);
}

TEST(Pca, RankOneLine) {
  Matrix x(40, 2);
  for (std::size_t r = 0; r < 40; ++r) {
    const double t = static_cast<double>(r) - 20.0;
    x(r, 0) = 2.0 * t;
    x(r, 1) = -t;
  }
  EXPECT_EQ(fit_pca(x, 0.95).output_dim(), 1u);
  PipelineConfig cfg;
  cfg.pca_variance = 0.95;
  EXPECT_EQ(fit_pipeline(x, cfg).output_dim(), 1u);
}

TEST(Pca, ComponentsOrthonormalAndSorted) {
  const PcaMap p = fit_pca(random_matrix(80, 7, 4), 0.9);
  const std::size_t r = p.output_dim();
  for (std::size_t a = 0; a < r; ++a)
    for (std::size_t b = 0; b < r; ++b) {
      double dotp = 0.0;
      for (std::size_t j = 0; j < 7; ++j) dotp += p.components(j, a) * p.components(j, b);
      EXPECT_NEAR(dotp, a == b ? 1.0 : 0.0, 1e-8);
    }
  for (std::size_t k = 1; k < p.eigenvalues.size(); ++k) EXPECT_GE(p.eigenvalues[k - 1], p.eigenvalues[k]);
  EXPECT_GE(p.variance_explained, 0.9 - 1e-12);
}

// Reconstruction loss of the retained subspace equals the discarded
// eigenvalue mass (covariance normalized by N - 1).
TEST(Pca, ReconstructionErrorMatchesTailSum) {
  const Matrix x = random_matrix(50, 10, 5);
  const PcaMap p = fit_pca(x, 0.7);
  const std::size_t r = p.output_dim();
  ASSERT_LT(r, 10u);
  double loss = 0.0;
  std::vector<double> code(r);
  for (std::size_t i = 0; i < 50; ++i) {
    p.transform(x.row(i), code);
    for (std::size_t j = 0; j < 10; ++j) {
      double rec = p.center[j];
      for (std::size_t k = 0; k < r; ++k) rec += p.components(j, k) * code[k];
      loss += (x(i, j) - rec) * (x(i, j) - rec);
    }
  }
  loss /= 49.0;
  double tail = 0.0;
  for (std::size_t k = r; k < 10; ++k) tail += p.eigenvalues[k];
  EXPECT_NEAR(loss, tail, 1e-8);
}

TEST(Rff, FrequencyVarianceNearTwoGamma) {
  const RffMap m = sample_rff(2, 1024, 1.0, 0);
  double mean = 0.0;
  for (double w : m.omega.values()) mean += w;
  mean /= static_cast<double>(m.omega.values().size());
  double var = 0.0;
  for (double w : m.omega.values()) var += (w - mean) * (w - mean);
  var /= static_cast<double>(m.omega.values().size() - 1);
  EXPECT_NEAR(var, 2.0, 0.2);
  for (double b : m.phases) {
    EXPECT_GE(b, 0.0);
    EXPECT_LT(b, 2.0 * std::numbers::pi);
  }
}

TEST(Rff, DeterministicAndValidated) {
  EXPECT_TRUE(sample_rff(3, 64, 0.5, 7) == sample_rff(3, 64, 0.5, 7));
  EXPECT_FALSE(sample_rff(3, 64, 0.5, 7) == sample_rff(3, 64, 0.5, 8));
  EXPECT_THROW(sample_rff(2, 16, 0.0, 0), std::invalid_argument);
  EXPECT_THROW(sample_rff(2, 0, 1.0, 0), std::invalid_argument);
  EXPECT_THROW(sample_rff(2, 16, 1.0, 0).transform(std::vector<double>{1.0}), std::invalid_argument);
}

TEST(Rff, NormSquaredIsTwo) {
  const RffMap m = sample_rff(4, 300, 0.7, 3);
  Rng rng = make_rng(3);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> x(4);
    for (double& v : x) v = n(rng);
    const auto phi = m.transform(x);
    ASSERT_EQ(phi.size(), 600u);
    double sq = 0.0;
    for (double v : phi) sq += v * v;
    EXPECT_NEAR(sq, 2.0, 1e-12);
  }
}

TEST(Rff, ZeroFrequency) {
  RffMap m;
  m.omega = Matrix(3, 1);
  m.phases = {0.0};
  const auto phi = m.transform(std::vector<double>{0.3, -2.0, 5.0});
  EXPECT_NEAR(phi[0], std::sqrt(2.0), 1e-15);
  EXPECT_EQ(phi[1], 0.0);
}

TEST(Rff, KernelApproximation) {
  const double gamma = 0.5;
  const RffMap m = sample_rff(2, 4096, gamma, 11);
  Rng rng = make_rng(12);
  std::normal_distribution<double> n(0.0, 1.0);
  double err = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::vector<double> x = {n(rng), n(rng)}, y = {n(rng), n(rng)};
    const auto px = m.transform(x), py = m.transform(y);
    const double approx = dot(px, py);
    const double exact = 2.0 * std::exp(-gamma * squared_distance(x, y));
    err += std::abs(approx - exact);
  }
  EXPECT_LE(err / 100.0, 0.1);
}

TEST(Rff, KernelErrorShrinksWithD) {
  auto mean_err = [](std::size_t frequencies) {
    double total = 0.0;
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      const RffMap m = sample_rff(2, frequencies, 1.0, seed);
      Rng rng = make_rng(seed, 5);
      std::normal_distribution<double> n(0.0, 1.0);
      for (int t = 0; t < 50; ++t) {
        const std::vector<double> x = {n(rng), n(rng)}, y = {n(rng), n(rng)};
        total += std::abs(dot(m.transform(x), m.transform(y)) - 2.0 * std::exp(-squared_distance(x, y)));
      }
    }
    return total / 200.0;
  };
  const double small = mean_err(64), large = mean_err(4096);
  EXPECT_LT(large, small);
  // Roughly C / sqrt(D): an 8x increase in sqrt(D) should cut the error by
  // well over half.
  EXPECT_LT(large, 0.5 * small);
}

TEST(Pipeline, IdentityIsStandardization) {
  const Matrix x = random_matrix(30, 3, 8);
  const FeaturePipeline p = fit_pipeline(x, PipelineConfig{});
  EXPECT_TRUE(p.is_linear());
  EXPECT_EQ(p.output_dim(), 3u);
  const Matrix phi = p.apply(x);
  std::vector<double> z(3);
  for (std::size_t r = 0; r < 30; ++r) {
    p.standardizer().transform(x.row(r), z);
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(phi(r, c), z[c]);
  }
  EXPECT_TRUE(p.apply(x) == phi);
  EXPECT_THROW(p.apply(Matrix(2, 4)), std::invalid_argument);
}

TEST(Pipeline, StagesComposeInOrder) {
  const Matrix x = random_matrix(60, 6, 9);
  PipelineConfig cfg;
  cfg.pca_variance = 0.8;
  cfg.lift = LiftKind::rff;
  cfg.rff_frequencies = 32;
  cfg.rff_gamma = 0.5;
  cfg.seed = 4;
  const FeaturePipeline p = fit_pipeline(x, cfg);
  ASSERT_TRUE(p.pca() && p.rff());
  EXPECT_EQ(p.output_dim(), 64u);
  const std::size_t r = p.pca()->output_dim();
  std::vector<double> z(6), code(r), expect(64);
  p.standardizer().transform(x.row(0), z);
  p.pca()->transform(z, code);
  p.rff()->transform(code, expect);
  const auto got = p.apply_row(x.row(0));
  for (std::size_t k = 0; k < 64; ++k) EXPECT_EQ(got[k], expect[k]);
}

TEST(AutoLift, SingletonReturnsIt) {
  const Dataset ds = make_moons(300, 0.2, 0);
  SplitSpec spec;
  const SplitResult s = stratified_split(ds, spec);
  PipelineConfig linear;
  TrainConfig probe = probe_config(TrainConfig{});
  probe.max_epochs = 5;
  const LiftSelection sel = auto_select_lift(s.train, s.val, {linear}, probe);
  EXPECT_EQ(sel.chosen, 0u);
  EXPECT_TRUE(sel.pipeline.is_linear());
  EXPECT_THROW(auto_select_lift(s.train, s.val, {}, probe), std::invalid_argument);
}

TEST(AutoLift, CirclesPickRff) {
  const Dataset ds = make_circles(1000, 0.5, 0.08, 1);
  SplitSpec spec;
  spec.seed = 1;
  const SplitResult s = stratified_split(ds, spec);
  std::vector<PipelineConfig> candidates(1);
  for (double g : {0.5, 1.0, 2.0}) {
    PipelineConfig c;
    c.lift = LiftKind::rff;
    c.rff_frequencies = 512;
    c.rff_gamma = g;
    candidates.push_back(c);
  }
  const LiftSelection sel = auto_select_lift(s.train, s.val, candidates, probe_config(TrainConfig{}));
  EXPECT_EQ(sel.candidates[sel.chosen].config.lift, LiftKind::rff);
  EXPECT_FALSE(sel.pipeline.is_linear());
}

TEST(AutoLift, SeparableBlobsKeepLinear) {
  // Two well separated Gaussian blobs.
  Dataset ds;
  ds.features = Matrix(400, 2);
  ds.labels.resize(400);
  ds.class_count = 2;
  Rng rng = make_rng(3);
  std::normal_distribution<double> n(0.0, 0.5);
  for (std::size_t i = 0; i < 400; ++i) {
    const std::size_t c = i % 2;
    ds.labels[i] = c;
    ds.features(i, 0) = (c ? 4.0 : -4.0) + n(rng);
    ds.features(i, 1) = n(rng);
  }
  const SplitResult s = stratified_split(ds, SplitSpec{});
  const LiftSelection sel =
      auto_select_lift(s.train, s.val, auto_lift_candidates(PipelineConfig{}), probe_config(TrainConfig{}));
  EXPECT_EQ(sel.candidates[sel.chosen].config.lift, LiftKind::linear);
}
