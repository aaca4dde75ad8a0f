// contam_check_test.cpp - fingerprints, k-d tree lookups and overlap reports.

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support.hpp"
#include "tabdpt/contam_check.hpp"

using namespace tabdpt;

namespace {

RawTable rescaled(RawTable t, double a, double b, std::string name) {
  MatrixXdR m(static_cast<Eigen::Index>(t.n_rows), static_cast<Eigen::Index>(t.n_cols()));
  std::vector<std::string> names;
  for (std::size_t c = 0; c < t.n_cols(); ++c) {
    names.push_back(t.columns[c].name);
    for (std::size_t r = 0; r < t.n_rows; ++r)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = a * t.columns[c].numbers[r] + b;
  }
  return RawTable::from_matrix(std::move(name), names, m, t.target);
}

template <std::size_t Dim>
std::size_t scan_nearest(const std::vector<std::array<double, Dim>>& pts, const std::array<double, Dim>& q) {
  std::size_t best = 0;
  double bd = INFINITY;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    double d = 0;
    for (std::size_t k = 0; k < Dim; ++k) d += (pts[i][k] - q[k]) * (pts[i][k] - q[k]);
    if (d < bd) bd = d, best = i;
  }
  return best;
}

}  // namespace

TEST(FeatureStats, SmallSymmetricColumn) {
  const auto s = feature_stats({1, 2, 3});
  EXPECT_NEAR(s.mean, 2.0, 1e-15);
  EXPECT_NEAR(s.variance, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(s.skewness, 0.0, 1e-15);
  EXPECT_NEAR(s.kurtosis, 1.5, 1e-12);
}

TEST(FeatureStats, ShapeInvariantUnderPositiveRescaling) {
  std::mt19937_64 rng(1);
  std::gamma_distribution<double> g(2.0, 1.0);
  std::vector<double> x(500), y(500);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = g(rng);
    y[i] = 7.5 * x[i] - 3.0;
  }
  const auto a = feature_stats(x), b = feature_stats(y);
  EXPECT_NEAR(a.skewness, b.skewness, 1e-9);
  EXPECT_NEAR(a.kurtosis, b.kurtosis, 1e-9);
}

TEST(Fingerprint, StableAndTargetOptional) {
  const RawTable t = synthetic::linear_regression(100, 3, 2);
  const auto a = fingerprint(t), b = fingerprint(t);
  EXPECT_EQ(a.content_hash, b.content_hash);
  EXPECT_EQ(a.features.size(), 3u);
  EXPECT_TRUE(a.target_mean.has_value());
  EXPECT_TRUE(a.fits.has_value());

  RawTable untargeted = t;
  untargeted.target.reset();
  const auto c = fingerprint(untargeted);
  EXPECT_FALSE(c.target_mean.has_value());
  EXPECT_FALSE(c.fits.has_value());
  EXPECT_EQ(c.features.size(), 4u);
}

TEST(Fingerprint, HashIgnoresColumnOrder) {
  const RawTable a = parse_csv("x,y\n1,2\n3,4\n", "a");
  const RawTable b = parse_csv("y,x\n2,1\n4,3\n", "b");
  EXPECT_EQ(fingerprint(a).content_hash, fingerprint(b).content_hash);
  EXPECT_NE(fingerprint(a).content_hash, fingerprint(parse_csv("x,y\n1,2\n3,5\n", "c")).content_hash);
}

TEST(Fingerprint, ParallelMatchesSerial) {
  std::vector<RawTable> ts;
  for (std::uint64_t s = 0; s < 6; ++s) ts.push_back(synthetic::random_table(50 + s, 3, s));
  const auto a = fingerprint_all(ts, 1), b = fingerprint_all(ts, 3);
  for (std::size_t i = 0; i < ts.size(); ++i) EXPECT_EQ(a[i].content_hash, b[i].content_hash);
}

TEST(KdTree, NearestMatchesScan) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  std::vector<std::array<double, 4>> pts(500);
  for (auto& p : pts)
    for (auto& v : p) v = g(rng);
  KdTree<4> tree(pts);
  for (int i = 0; i < 200; ++i) {
    std::array<double, 4> q{g(rng), g(rng), g(rng), g(rng)};
    EXPECT_EQ(*tree.nearest(q), scan_nearest(pts, q));
  }
}

TEST(KdTree, RelativeBoxQuery) {
  std::vector<std::array<double, 2>> pts{{1.0, 2.0}, {10.0, -5.0}};
  KdTree<2> tree(pts);
  EXPECT_TRUE(tree.any_within_relative({1.0005, 2.001}, 1e-3));
  EXPECT_FALSE(tree.any_within_relative({1.01, 2.0}, 1e-3));
  EXPECT_TRUE(tree.any_within_relative({10.0, -5.004}, 1e-3));
  EXPECT_FALSE(KdTree<2>({}).any_within_relative({0, 0}, 1e-3));
}

TEST(CompareAll, ExactCopyFlagged) {
  const RawTable t = synthetic::linear_regression(200, 4, 5);
  RawTable copy = t;
  copy.name = "copy";
  const auto r = compare_all({fingerprint(t)}, {fingerprint(copy)});
  ASSERT_EQ(r.size(), 1u);
  EXPECT_TRUE(r[0].hash_match);
  EXPECT_TRUE(r[0].flagged);
}

TEST(CompareAll, ScaledCopyFlagged) {
  const RawTable t = synthetic::linear_regression(200, 4, 6);
  const RawTable s = rescaled(t, 3.0, 0.0, "scaled");
  const auto r = compare_all({fingerprint(t)}, {fingerprint(s)});
  EXPECT_FALSE(r[0].hash_match);
  EXPECT_EQ(r[0].stat_matches, 0u);
  EXPECT_EQ(r[0].scaled_matches, 4u);
  EXPECT_TRUE(r[0].flagged);
}

TEST(CompareAll, IndependentTablesClear) {
  std::vector<DatasetFingerprint> train, eval;
  for (std::uint64_t s = 0; s < 10; ++s) train.push_back(fingerprint(synthetic::random_table(300 + s, 5, s)));
  for (std::uint64_t s = 0; s < 10; ++s) eval.push_back(fingerprint(synthetic::random_table(400 + s, 5, 100 + s)));
  for (const auto& r : compare_all(train, eval)) EXPECT_FALSE(r.flagged) << r.train_name << " vs " << r.eval_name;
}

TEST(CompareAll, SymmetricMatchCounts) {
  RawTable a = synthetic::linear_regression(150, 5, 7);
  RawTable b = synthetic::linear_regression(150, 5, 8);
  b.columns[0] = a.columns[0];
  b.columns[2] = a.columns[2];
  a.target.reset();
  b.target.reset();
  const auto fa = fingerprint(a), fb = fingerprint(b);
  const auto ab = compare_all({fa}, {fb})[0], ba = compare_all({fb}, {fa})[0];
  EXPECT_EQ(ab.stat_matches, ba.stat_matches);
  EXPECT_GE(ab.stat_matches, 2u);
}

TEST(CompareAll, BadArguments) {
  const auto f = fingerprint(synthetic::random_table(10, 2, 1));
  EXPECT_THROW(compare_all({}, {f}), Error);
  CompareOptions o;
  o.tolerance = 1.5;
  EXPECT_THROW(compare_all({f}, {f}, o), Error);
}

TEST(ReportCsv, Format) {
  SimilarityReport r;
  r.train_name = "a";
  r.eval_name = "b";
  r.reasons = {"hash", "shape"};
  r.match_fraction = 1.0;
  SimilarityReport clear;
  clear.train_name = "a";
  clear.eval_name = "c";
  const std::string csv = format_report_csv({r, clear});
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "train_ds,eval_ds,flag_reason,match_fraction");
  EXPECT_NE(csv.find("a,b,hash+shape,1"), std::string::npos);
  EXPECT_NE(csv.find("a,c,none,0"), std::string::npos);
}
