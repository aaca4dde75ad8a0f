// evalharness_test.cpp - metrics, ranks, IQM, win rates and rating systems.

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "tabdpt/evalharness.hpp"

using namespace tabdpt;

namespace {

ScoreTable make_table(const std::vector<std::vector<double>>& rows) {
  ScoreTable t;
  t.metric = "auc";
  t.scores.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t m = 0; m < rows.size(); ++m) {
    t.methods.push_back("m" + std::to_string(m));
    for (std::size_t d = 0; d < rows[m].size(); ++d)
      t.scores(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d)) = rows[m][d];
  }
  for (std::size_t d = 0; d < rows[0].size(); ++d) t.datasets.push_back("d" + std::to_string(d));
  return t;
}

ScoreTable random_table(std::size_t methods, std::size_t datasets, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u;
  std::vector<std::vector<double>> rows(methods, std::vector<double>(datasets));
  for (auto& r : rows)
    for (auto& v : r) v = u(rng);
  return make_table(rows);
}

// IQM by direct trimming: keep values inside [q25, q75].
double trimmed_oracle(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto q = [&](double p) {
    const double pos = p * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = static_cast<std::size_t>(std::ceil(pos));
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  const double a = q(0.25), b = q(0.75);
  double s = 0;
  int n = 0;
  for (double x : v)
    if (x >= a && x <= b) s += x, ++n;
  return s / n;
}

}  // namespace

TEST(Metrics, SeparatedScoresHaveUnitAuc) {
  const std::vector<double> s{0.1, 0.2, 0.8, 0.9};
  const bool pos[] = {false, false, true, true};
  EXPECT_EQ(binary_auc(s, pos), std::optional<double>(1.0));
}

TEST(Metrics, AucIsRankBased) {
  const std::vector<double> s{0.3, 0.1, 0.7, 0.3, 0.5, 0.9};
  const bool pos[] = {true, false, true, false, false, true};
  std::vector<double> t;
  for (double x : s) t.push_back(std::exp(7 * x) - 2);
  EXPECT_EQ(binary_auc(s, pos), binary_auc(t, pos));
  EXPECT_NEAR(*binary_auc(s, pos), (1.5 + 3 + 3) / 9.0, 1e-12);
}

TEST(Metrics, RegressionIdentities) {
  const std::vector<double> y{1, 2, 4, 7};
  const auto same = regression_metrics(y, y);
  EXPECT_NEAR(*same.correlation, 1.0, 1e-12);
  EXPECT_NEAR(*same.r2, 1.0, 1e-12);
  const std::vector<double> mean(4, 3.5);
  EXPECT_NEAR(*regression_metrics(mean, y).r2, 0.0, 1e-12);
}

TEST(Metrics, PerfectClassifier) {
  MatrixXdR p(3, 3);
  p << 0.9, 0.05, 0.05, 0.1, 0.8, 0.1, 0.2, 0.2, 0.6;
  const std::size_t y[] = {0, 1, 2};
  const auto m = classification_metrics(p, y);
  EXPECT_EQ(*m.accuracy, 1.0);
  EXPECT_EQ(*m.auc, 1.0);
}

TEST(AverageRanks, DominantMethod) {
  const auto r = average_ranks(make_table({{0.9, 0.8}, {0.5, 0.4}}), 200, 1);
  EXPECT_EQ(r[0].estimate, 1.0);
  EXPECT_EQ(r[1].estimate, 2.0);
}

TEST(AverageRanks, TiesShareTheMiddle) {
  const auto r = average_ranks(make_table({{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}}), 100, 1);
  for (const auto& e : r) {
    EXPECT_EQ(e.estimate, 2.0);
    EXPECT_EQ(e.lo, 2.0);
    EXPECT_EQ(e.hi, 2.0);
  }
}

TEST(AverageRanks, LowerIsBetterMetrics) {
  EXPECT_FALSE(default_higher_is_better("rmse"));
  EXPECT_TRUE(default_higher_is_better("accuracy"));
  auto t = make_table({{0.1, 0.2}, {0.5, 0.6}});
  t.higher_is_better = false;
  EXPECT_EQ(average_ranks(t, 10, 1)[0].estimate, 1.0);
}

TEST(Iqm, DirectTrimmedMean) {
  const std::vector<double> v{0, 1, 2, 3, 100};
  EXPECT_NEAR(iqm_point(v), 2.0, 1e-12);
  std::mt19937_64 rng(2);
  std::lognormal_distribution<double> g;
  for (int t = 0; t < 20; ++t) {
    std::vector<double> x(5 + t);
    for (auto& e : x) e = g(rng);
    EXPECT_NEAR(iqm_point(x), trimmed_oracle(x), 1e-12);
  }
}

TEST(Iqm, ConstantHasZeroWidth) {
  const std::vector<double> v(12, 0.7);
  const auto e = iqm(v, 300, 3);
  EXPECT_NEAR(e.estimate, 0.7, 1e-12);
  EXPECT_NEAR(e.hi - e.lo, 0.0, 1e-12);
}

TEST(Iqm, SymmetricDataNearMean) {
  std::vector<double> v;
  for (int i = -50; i <= 50; ++i) v.push_back(0.01 * i);
  EXPECT_NEAR(iqm_point(v), 0.0, 1e-12);
}

TEST(WinRate, RulesAndComplement) {
  EXPECT_EQ(win_rate_matrix(make_table({{1, 1}, {0, 0}}))(0, 1), 1.0);
  EXPECT_EQ(win_rate_matrix(make_table({{1, 1}, {1, 1}}))(0, 1), 0.5);
  const auto w = win_rate_matrix(random_table(5, 30, 4));
  for (Eigen::Index i = 0; i < 5; ++i)
    for (Eigen::Index j = 0; j < 5; ++j) EXPECT_NEAR(w(i, j) + w(j, i), 1.0, 1e-12);
}

TEST(WinRate, NoSharedDatasets) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const auto w = win_rate_matrix(make_table({{1, nan}, {nan, 0}}));
  EXPECT_TRUE(std::isnan(w(0, 1)));
}

TEST(Elo, DominantMethodAndTies) {
  const auto r = elo_ratings(make_table({{1, 1, 1}, {0, 0, 0}}), 20, 1);
  EXPECT_GT(r[0].lo, r[1].hi);
  const auto tie = elo_ratings(make_table({{1, 1, 1}, {1, 1, 1}}), 20, 1);
  EXPECT_EQ(tie[0].estimate, 1500.0);
  EXPECT_EQ(tie[1].estimate, 1500.0);
}

TEST(Elo, OrdinalInvariance) {
  auto t = random_table(4, 15, 5);
  const auto a = elo_ratings(t, 30, 7);
  t.scores = (t.scores.array() * 5).exp() - 3;
  const auto b = elo_ratings(t, 30, 7);
  for (std::size_t m = 0; m < a.size(); ++m) EXPECT_EQ(a[m].estimate, b[m].estimate);
}

TEST(Glicko2, WorkedExample) {
  const RatingState player{1500, 200, 0.06};
  const std::vector<GlickoGame> games{{{1400, 30, 0.06}, 1}, {{1550, 100, 0.06}, 0}, {{1700, 300, 0.06}, 0}};
  const auto s = glicko2_update(player, games);
  EXPECT_NEAR(s.rating, 1464.06, 0.1);
  EXPECT_NEAR(s.rd, 151.52, 0.1);
  EXPECT_NEAR(s.volatility, 0.05999, 1e-4);
}

TEST(Glicko2, IdlePlayerDeviationGrows) {
  const RatingState player{1600, 100, 0.06};
  const auto s = glicko2_update(player, {});
  EXPECT_EQ(s.rating, 1600);
  EXPECT_NEAR(s.rd, std::sqrt(100.0 * 100.0 + std::pow(0.06 * 173.7178, 2)), 1e-9);
}

TEST(Glicko2, WinnerRatedHighest) {
  const auto s = glicko2_ratings(make_table({{0.2, 0.3}, {0.9, 0.8}, {0.5, 0.5}}));
  EXPECT_GT(s[1].rating, s[2].rating);
  EXPECT_GT(s[2].rating, s[0].rating);
}

TEST(Orderings, TwoMethodsAgree) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto t = random_table(2, 9, 10 + seed);
    const auto ranks = average_ranks(t, 10, 1);
    const auto w = win_rate_matrix(t);
    const auto elo = elo_ratings(t, 20, 1);
    if (w(0, 1) == 0.5) continue;
    const bool first = w(0, 1) > 0.5;
    EXPECT_EQ(ranks[0].estimate < ranks[1].estimate, first);
    EXPECT_EQ(elo[0].estimate > elo[1].estimate, first);
  }
}

TEST(Orderings, DatasetOrderDoesNotMatter) {
  const auto t = random_table(3, 12, 20);
  ScoreTable r = t;
  r.scores = t.scores.rowwise().reverse();
  std::reverse(r.datasets.begin(), r.datasets.end());
  const auto a = average_ranks(t, 0, 1), b = average_ranks(r, 0, 1);
  for (std::size_t m = 0; m < 3; ++m) EXPECT_NEAR(a[m].estimate, b[m].estimate, 1e-12);
  EXPECT_LE((win_rate_matrix(t) - win_rate_matrix(r)).cwiseAbs().maxCoeff(), 1e-12);
  const auto ga = glicko2_ratings(t), gb = glicko2_ratings(r);
  for (std::size_t m = 0; m < 3; ++m) EXPECT_NEAR(ga[m].rating, gb[m].rating, 1e-9);
}

TEST(ScoreCsv, RoundTrip) {
  const std::string text = "method,dataset,metric,value\na,d1,auc,0.9\nb,d1,auc,0.8\na,d2,auc,0.7\nb,d2,auc,0.75\n";
  const auto tables = parse_score_csv(text);
  ASSERT_EQ(tables.count("auc"), 1u);
  const auto& t = tables.at("auc");
  EXPECT_EQ(t.methods, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(t.at(1, 1), 0.75);
  EXPECT_EQ(parse_score_csv(format_score_csv({t})).at("auc").scores, t.scores);
}
