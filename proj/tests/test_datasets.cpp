#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "gmc/csv.hpp"
#include "gmc/datasets.hpp"
#include "gmc/split.hpp"

using namespace gmc;

namespace {

std::size_t count_label(const Dataset& ds, std::size_t c) {
  std::size_t n = 0;
  for (auto y : ds.labels) n += y == c;
  return n;
}

}  // namespace

TEST(Moons, ShapeAndBalance) {
  const Dataset ds = make_moons(4000, 0.25, 0);
  ds.validate();
  EXPECT_EQ(ds.size(), 4000u);
  EXPECT_EQ(ds.dim(), 2u);
  EXPECT_EQ(ds.class_count, 2u);
  EXPECT_EQ(count_label(ds, 0), 2000u);
}

TEST(Moons, TwoSamplesSitOnTheArcs) {
  const Dataset ds = make_moons(2, 0.0, 7);
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.labels[0], 0u);
  EXPECT_EQ(ds.labels[1], 1u);
  // Class 0 on the unit circle, class 1 on the unit circle about (1, 0.5).
  EXPECT_NEAR(std::hypot(ds.features(0, 0), ds.features(0, 1)), 1.0, 1e-12);
  EXPECT_NEAR(std::hypot(ds.features(1, 0) - 1.0, ds.features(1, 1) - 0.5), 1.0, 1e-12);
}

TEST(Moons, NoiseFreeClassZeroOnUpperArc) {
  const Dataset ds = make_moons(4000, 0.0, 0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.labels[i] != 0) continue;
    const double x = ds.features(i, 0), y = ds.features(i, 1);
    EXPECT_LT(std::abs(std::hypot(x, y) - 1.0), 1e-9);
    EXPECT_GE(y, -1e-12);
  }
}

TEST(Moons, OddCountIsBalancedWithinOne) {
  const Dataset ds = make_moons(7, 0.1, 3);
  const auto n0 = count_label(ds, 0), n1 = count_label(ds, 1);
  EXPECT_LE(n0 > n1 ? n0 - n1 : n1 - n0, 1u);
}

TEST(Moons, RejectsBadArguments) {
  EXPECT_THROW(make_moons(1, 0.1, 0), std::invalid_argument);
  EXPECT_THROW(make_moons(10, -0.1, 0), std::invalid_argument);
}

TEST(Circles, InnerRadiusWithoutNoise) {
  const Dataset ds = make_circles(4, 0.5, 0.0, 0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double r = std::hypot(ds.features(i, 0), ds.features(i, 1));
    EXPECT_NEAR(r, ds.labels[i] == 1 ? 0.5 : 1.0, 1e-12);
  }
  const Dataset big = make_circles(4000, 0.5, 0.08, 0);
  EXPECT_EQ(big.size(), 4000u);
  EXPECT_EQ(big.class_count, 2u);
}

TEST(Circles, RejectsRatioOutsideUnitInterval) {
  EXPECT_THROW(make_circles(100, 1.2, 0.0, 0), std::invalid_argument);
  EXPECT_THROW(make_circles(100, 0.0, 0.0, 0), std::invalid_argument);
}

TEST(Aniso, ShapeBalanceAndDeterminism) {
  const Dataset a = make_aniso_blobs(4500, 0);
  EXPECT_EQ(a.size(), 4500u);
  EXPECT_EQ(a.class_count, 3u);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(count_label(a, c), 1500u);
  const Dataset b = make_aniso_blobs(4500, 0);
  EXPECT_TRUE(a.features == b.features);
  EXPECT_EQ(a.labels, b.labels);
  const Dataset three = make_aniso_blobs(3, 5);
  EXPECT_EQ(three.labels, (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_THROW(make_aniso_blobs(2, 0), std::invalid_argument);
}

TEST(Spirals, PointsLieOnCurves) {
  const Dataset ds = make_two_spirals(2000, 2.0, 0);
  EXPECT_EQ(ds.size(), 2000u);
  EXPECT_EQ(ds.class_count, 2u);
  for (std::size_t i = 0; i < 1000; ++i) {
    const double x = ds.features(i, 0), y = ds.features(i, 1);
    const double r = std::hypot(x, y);
    // Recover theta from the radius, then check the angle.
    const double theta = r * 2.0 * std::numbers::pi;
    EXPECT_NEAR(x, two_spirals_radius(theta) * std::cos(theta), 1e-9);
    EXPECT_NEAR(y, two_spirals_radius(theta) * std::sin(theta), 1e-9);
  }
}

TEST(Spirals, ClassOneIsClassZeroRotatedByPi) {
  const Dataset ds = make_two_spirals(2000, 2.0, 0);
  for (std::size_t i = 0; i < 1000; ++i) {
    EXPECT_EQ(ds.features(1000 + i, 0), -ds.features(i, 0));
    EXPECT_EQ(ds.features(1000 + i, 1), -ds.features(i, 1));
  }
}

TEST(Spirals, TwoPointsAtParameterStart) {
  const Dataset ds = make_two_spirals(2, 2.0, 0);
  const double r0 = two_spirals_radius(std::numbers::pi / 2.0);
  EXPECT_NEAR(ds.features(0, 0), 0.0, 1e-15);
  EXPECT_NEAR(ds.features(0, 1), r0, 1e-15);
  EXPECT_NEAR(ds.features(1, 1), -r0, 1e-15);
  EXPECT_THROW(make_two_spirals(10, 0.0, 0), std::invalid_argument);
  EXPECT_THROW(make_two_spirals(10, -1.0, 0), std::invalid_argument);
}

TEST(Generators, SameSeedSameBits) {
  EXPECT_TRUE(make_moons(500, 0.25, 9).features == make_moons(500, 0.25, 9).features);
  EXPECT_TRUE(make_circles(500, 0.5, 0.08, 9).features == make_circles(500, 0.5, 0.08, 9).features);
  EXPECT_FALSE(make_moons(500, 0.25, 9).features == make_moons(500, 0.25, 10).features);
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

TEST(Csv, FirstAppearanceLabelEncoding) {
  std::istringstream in("f1,f2,y\n1,2,a\n3,4,b\n5,6,a\n");
  const Dataset ds = parse_csv(in, std::string("y"), true);
  EXPECT_EQ(ds.labels, (std::vector<std::size_t>{0, 1, 0}));
  EXPECT_EQ(ds.class_count, 2u);
  EXPECT_EQ(ds.class_names, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(ds.feature_names, (std::vector<std::string>{"f1", "f2"}));
  EXPECT_DOUBLE_EQ(ds.features(2, 1), 6.0);
}

TEST(Csv, LabelColumnByIndexWithoutHeader) {
  std::istringstream in("b,1.5,2\na,0.5,1\n");
  const Dataset ds = parse_csv(in, std::size_t{0}, false);
  EXPECT_EQ(ds.dim(), 2u);
  EXPECT_EQ(ds.labels, (std::vector<std::size_t>{0, 1}));
  EXPECT_DOUBLE_EQ(ds.features(1, 0), 0.5);
}

TEST(Csv, NonNumericCellNamesRowAndColumn) {
  std::istringstream in("f1,f2,y\n1,2,a\n3,oops,b\n");
  try {
    parse_csv(in, std::string("y"), true);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("line 3"), std::string::npos) << what;
    EXPECT_NE(what.find("f2"), std::string::npos) << what;
  }
}

TEST(Csv, MissingLabelColumnAndEmptyInput) {
  std::istringstream in("f1,f2\n1,2\n");
  EXPECT_THROW(parse_csv(in, std::string("y"), true), ParseError);
  std::istringstream empty("");
  EXPECT_THROW(parse_csv(empty, std::string("y"), true), ParseError);
}

TEST(Csv, WriteThenParseRoundTrips) {
  const Dataset ds = make_aniso_blobs(30, 4);
  std::stringstream buf;
  write_csv(buf, ds);
  const Dataset back = parse_csv(buf, std::string("label"), true);
  EXPECT_TRUE(back.features == ds.features);
  EXPECT_EQ(back.labels, ds.labels);
}

TEST(Csv, WdbcShapedFile) {
  // 569 rows, 30 features, two string classes: the WDBC layout.
  std::stringstream buf;
  buf << "diagnosis";
  for (int j = 0; j < 30; ++j) buf << ",f" << j;
  buf << '\n';
  Rng rng = make_rng(1);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int i = 0; i < 569; ++i) {
    buf << (i % 3 == 0 ? 'M' : 'B');
    for (int j = 0; j < 30; ++j) buf << ',' << u(rng);
    buf << '\n';
  }
  const Dataset ds = parse_csv(buf, std::string("diagnosis"), true);
  EXPECT_EQ(ds.size(), 569u);
  EXPECT_EQ(ds.dim(), 30u);
  EXPECT_EQ(ds.class_count, 2u);
}

// ---------------------------------------------------------------------------
// Stratified split
// ---------------------------------------------------------------------------

TEST(Split, ExactDivisibility) {
  Dataset ds = make_moons(100, 0.1, 0);
  SplitSpec spec;
  spec.seed = 3;
  const SplitResult s = stratified_split(ds, spec);
  EXPECT_EQ(s.train.size(), 60u);
  EXPECT_EQ(s.val.size(), 20u);
  EXPECT_EQ(s.test.size(), 20u);
  for (std::size_t c = 0; c < 2; ++c) {
    EXPECT_EQ(count_label(s.train, c), 30u);
    EXPECT_EQ(count_label(s.val, c), 10u);
    EXPECT_EQ(count_label(s.test, c), 10u);
  }
}

TEST(Split, DisjointCoverAndDeterministic) {
  const Dataset ds = make_aniso_blobs(301, 2);
  SplitSpec spec;
  spec.seed = 11;
  const SplitResult a = stratified_split(ds, spec);
  const SplitResult b = stratified_split(ds, spec);
  EXPECT_EQ(a.train_indices, b.train_indices);
  EXPECT_EQ(a.test_indices, b.test_indices);
  std::set<std::size_t> all;
  for (const auto* v : {&a.train_indices, &a.val_indices, &a.test_indices})
    for (auto i : *v) EXPECT_TRUE(all.insert(i).second) << "duplicate index " << i;
  EXPECT_EQ(all.size(), ds.size());
  EXPECT_EQ(*all.rbegin(), ds.size() - 1);
  spec.seed = 12;
  EXPECT_NE(stratified_split(ds, spec).train_indices, a.train_indices);
}

TEST(Split, SmallClassesWithinOneOfFractions) {
  // Class sizes {7, 3}.
  Dataset ds;
  ds.features = Matrix(10, 1);
  ds.labels = {0, 0, 0, 0, 0, 0, 0, 1, 1, 1};
  ds.class_count = 2;
  SplitSpec spec;
  spec.seed = 1;
  const SplitResult s = stratified_split(ds, spec);
  const double fractions[3] = {0.6, 0.2, 0.2};
  const Dataset* parts[3] = {&s.train, &s.val, &s.test};
  for (std::size_t c = 0; c < 2; ++c) {
    const double total = c == 0 ? 7.0 : 3.0;
    for (int k = 0; k < 3; ++k) {
      const double got = static_cast<double>(count_label(*parts[k], c));
      EXPECT_LE(std::abs(got - fractions[k] * total), 1.0) << "class " << c << " split " << k;
      EXPECT_GE(got, 1.0);
    }
  }
}

TEST(Split, CountInvariantOverManySeeds) {
  const Dataset ds = make_aniso_blobs(97, 0);
  const auto counts = ds.class_counts();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SplitSpec spec;
    spec.seed = seed;
    const SplitResult s = stratified_split(ds, spec);
    const double fractions[3] = {0.6, 0.2, 0.2};
    const Dataset* parts[3] = {&s.train, &s.val, &s.test};
    for (std::size_t c = 0; c < 3; ++c)
      for (int k = 0; k < 3; ++k)
        EXPECT_LE(std::abs(static_cast<double>(count_label(*parts[k], c)) -
                           fractions[k] * static_cast<double>(counts[c])),
                  1.0);
  }
}

TEST(Split, RejectsTinyClassesAndBadFractions) {
  Dataset ds;
  ds.features = Matrix(5, 1);
  ds.labels = {0, 0, 0, 1, 1};
  ds.class_count = 2;
  EXPECT_THROW(stratified_split(ds, SplitSpec{}), std::invalid_argument);
  SplitSpec bad{0.5, 0.2, 0.2, 0};
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}
