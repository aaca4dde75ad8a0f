// ssl_tasks_test.cpp - feature subsets, target generation and episode retrieval.

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "support.hpp"
#include "tabdpt/ssl_tasks.hpp"

using namespace tabdpt;

TEST(FeatureSubset, SizesUniformOnHalfToAll) {
  Rng rng(1);
  std::map<std::size_t, std::size_t> counts;
  const std::size_t draws = 12000;
  for (std::size_t i = 0; i < draws; ++i) {
    const auto s = choose_feature_subset(10, rng);
    ASSERT_GE(s.size(), 5u);
    ASSERT_LE(s.size(), 10u);
    EXPECT_EQ(std::set<std::size_t>(s.begin(), s.end()).size(), s.size());
    ++counts[s.size()];
  }
  ASSERT_EQ(counts.size(), 6u);
  const double expected = draws / 6.0;
  double chi2 = 0;
  for (auto [k, c] : counts) chi2 += (c - expected) * (c - expected) / expected;
  EXPECT_LT(chi2, 15.086);  // df = 5, 1% level
}

TEST(FeatureSubset, TinyWidths) {
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    EXPECT_EQ(choose_feature_subset(1, rng), std::vector<std::size_t>{0});
    const auto s = choose_feature_subset(2, rng);
    EXPECT_TRUE(s.size() == 1 || s.size() == 2);
  }
}

TEST(GenerateTarget, LowCardinalityIsClassification) {
  const std::vector<double> col{0, 1, 2, 0, 1, 2, 2, 1};
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const auto t = generate_target(col, rng);
    EXPECT_EQ(t.kind, TaskKind::classification);
    EXPECT_EQ(t.num_classes, 3u);
    std::set<double> labels(t.targets.begin(), t.targets.end());
    EXPECT_EQ(labels, (std::set<double>{0, 1, 2}));
  }
}

TEST(GenerateTarget, RegressionFraction) {
  std::vector<double> col(50);
  std::iota(col.begin(), col.end(), 0.0);
  Rng rng(4);
  std::size_t reg = 0;
  const std::size_t draws = 10000;
  for (std::size_t i = 0; i < draws; ++i) {
    const auto t = generate_target(col, rng);
    if (t.kind == TaskKind::regression) {
      ++reg;
      const double mean = std::accumulate(t.targets.begin(), t.targets.end(), 0.0) / 50.0;
      double var = 0;
      for (double v : t.targets) var += (v - mean) * (v - mean);
      EXPECT_LE(std::abs(mean), 1e-6);
      EXPECT_LE(std::abs(std::sqrt(var / 50.0) - 1.0), 1e-3);
    } else {
      EXPECT_GE(t.num_classes, 2u);
      EXPECT_LE(t.num_classes, 9u);
    }
  }
  EXPECT_NEAR(static_cast<double>(reg) / draws, 0.70, 0.02);
}

TEST(GenerateTarget, BinningIsMonotone) {
  std::vector<double> col(200);
  for (std::size_t i = 0; i < col.size(); ++i) col[i] = std::sin(static_cast<double>(i)) * 3.0;
  Rng rng(5);
  for (int i = 0; i < 300; ++i) {
    const auto t = generate_target(col, rng);
    if (t.kind != TaskKind::classification) continue;
    for (std::size_t a = 0; a < col.size(); ++a)
      for (std::size_t b = 0; b < col.size(); ++b)
        if (col[a] < col[b]) ASSERT_LE(t.ordinal_labels[a], t.ordinal_labels[b]);
  }
}

TEST(BinByBoundaries, CountsBoundariesBelow) {
  const std::vector<double> v{-1, 0, 0.5, 2, 3};
  const std::vector<double> b{0, 2};
  EXPECT_EQ(bin_by_boundaries(v, b), (std::vector<std::size_t>{0, 0, 1, 1, 2}));
}

TEST(MakeEpisode, AllConstantIsAnError) {
  MatrixXdR m = MatrixXdR::Constant(20, 3, 4.0);
  const PreparedTable p = prepare(RawTable::from_matrix("c", {"a", "b", "c"}, m));
  const auto idx = NeighborIndex::build(p);
  Rng rng(6);
  EXPECT_THROW(make_episode(p, idx, 10, rng), Error);
}

TEST(MakeEpisode, WholeTableWhenKIsN) {
  const PreparedTable p = prepare(synthetic::latent_factor(40, 5, 2, 7));
  const auto idx = NeighborIndex::build(p);
  Rng rng(7);
  for (int i = 0; i < 20; ++i) {
    const auto ep = make_episode(p, idx, 40, rng);
    std::set<std::size_t> rows(ep.row_ids.begin(), ep.row_ids.end());
    EXPECT_EQ(rows.size(), 40u);
    EXPECT_EQ(std::find(ep.feature_perm.begin(), ep.feature_perm.end(), ep.source_col), ep.feature_perm.end());
    EXPECT_EQ(static_cast<std::size_t>(ep.features.cols()), ep.feature_perm.size());
  }
}

TEST(MakeEpisode, StaysInsideAnchorCluster) {
  // Two tight clusters 100 units apart; K below the cluster size.
  MatrixXdR m(60, 3);
  Rng g(8);
  std::normal_distribution<double> noise(0.0, 0.1);
  for (Eigen::Index r = 0; r < 60; ++r)
    for (Eigen::Index c = 0; c < 3; ++c) m(r, c) = (r < 30 ? 0.0 : 100.0) + noise(g);
  const PreparedTable p = prepare(RawTable::from_matrix("two", {"a", "b", "c"}, m));
  const auto idx = NeighborIndex::build(p);
  Rng rng(9);
  for (int i = 0; i < 50; ++i) {
    const auto ep = make_episode(p, idx, 25, rng);
    const bool first = ep.row_ids[0] < 30;
    for (auto r : ep.row_ids) EXPECT_EQ(r < 30, first);
  }
}

TEST(MakeEpisode, EpisodeInvariants) {
  const PreparedTable p = prepare(synthetic::desk_corpus(3, 300)[1]);
  const auto idx = NeighborIndex::build(p);
  Rng rng(10);
  for (int i = 0; i < 100; ++i) {
    const auto ep = make_episode(p, idx, 64, rng);
    ASSERT_EQ(ep.targets.size(), 64u);
    if (ep.task_kind == TaskKind::classification) {
      for (double y : ep.targets) {
        EXPECT_GE(y, 0.0);
        EXPECT_LT(y, static_cast<double>(ep.num_classes));
      }
    } else {
      const double mean = std::accumulate(ep.targets.begin(), ep.targets.end(), 0.0) / 64.0;
      double var = 0;
      for (double y : ep.targets) var += (y - mean) * (y - mean);
      EXPECT_LE(std::abs(mean), 1e-6);
      EXPECT_LE(std::abs(std::sqrt(var / 64.0) - 1.0), 1e-3);
    }
  }
}

TEST(MakeEpisode, FixedTargetKeepsClassCoding) {
  const PreparedTable p = prepare(synthetic::clusters(200, 4, 3, 11));
  const auto idx = NeighborIndex::build(p);
  Rng rng(12);
  EpisodeOptions opts;
  opts.fixed_target = true;
  for (int i = 0; i < 20; ++i) {
    const auto ep = make_episode(p, idx, 32, rng, opts);
    EXPECT_EQ(ep.source_col, *p.target_col);
    EXPECT_EQ(ep.task_kind, TaskKind::classification);
    EXPECT_EQ(ep.num_classes, 3u);
    for (std::size_t j = 0; j < ep.row_ids.size(); ++j) EXPECT_EQ(ep.targets[j], p.target_values[ep.row_ids[j]]);
  }
}
