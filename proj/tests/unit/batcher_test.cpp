// batcher_test.cpp - padding, context split and batch assembly.

#include <gtest/gtest.h>

#include <vector>

#include "support.hpp"
#include "tabdpt/batcher.hpp"

using namespace tabdpt;

TEST(PadFeatures, ZeroPadsOnTheRight) {
  MatrixXdR x(2, 1);
  x << 1, 2;
  MatrixXdR want(2, 3);
  want << 1, 0, 0, 2, 0, 0;
  EXPECT_EQ(pad_features(x, 3), want);
  EXPECT_EQ(pad_features(want, 3), want);
}

TEST(SplitContextQuery, Bounds) {
  Rng rng(1);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(split_context_query(11, rng), 10u);
  for (int i = 0; i < 1000; ++i) {
    const auto p = split_context_query(2048, rng);
    EXPECT_GE(p, 10u);
    EXPECT_LE(p, 2047u);
  }
  EXPECT_THROW(split_context_query(10, rng), Error);
}

TEST(StandardizeByContext, UsesContextRowsOnly) {
  MatrixXdR x(4, 2);
  x << 1, 5, 3, 5, 100, 7, -100, 8;
  standardize_by_context(x, 2);
  EXPECT_NEAR(x(0, 0), -1.0, 1e-12);
  EXPECT_NEAR(x(1, 0), 1.0, 1e-12);
  EXPECT_EQ(x(2, 1), 0.0);  // constant over the context
}

class BatcherCorpus : public ::testing::Test {
 protected:
  void SetUp() override { corpus_ = tabdpt::testing::corpus_from(synthetic::desk_corpus(5, 200)); }
  Corpus corpus_;
};

TEST_F(BatcherCorpus, SingleDataset) {
  Corpus one;
  one.push_back(corpus_[2]);
  BatchOptions opts;
  opts.K = 32;
  opts.f_max = 16;
  Rng rng(2);
  const auto b = assemble_batch(one, opts, rng);
  ASSERT_EQ(b.episodes.size(), 1u);
  EXPECT_EQ(b.episodes[0].dataset, 0u);
}

TEST_F(BatcherCorpus, DeterministicForSeed) {
  BatchOptions opts;
  opts.batch_size = 8;
  opts.K = 32;
  opts.f_max = 16;
  const auto a = batch_for_step(corpus_, opts, 3, 17);
  const auto b = batch_for_step(corpus_, opts, 3, 17);
  ASSERT_EQ(a.episodes.size(), b.episodes.size());
  for (std::size_t i = 0; i < a.episodes.size(); ++i) {
    EXPECT_EQ(a.episodes[i].X, b.episodes[i].X);
    EXPECT_EQ(a.episodes[i].y, b.episodes[i].y);
    EXPECT_EQ(a.episodes[i].eval_pos, b.episodes[i].eval_pos);
  }
}

TEST_F(BatcherCorpus, EpisodeShapesAndUniformDatasets) {
  BatchOptions opts;
  opts.batch_size = 30;
  opts.K = 24;
  opts.f_max = 16;
  Rng rng(4);
  std::vector<double> counts(corpus_.size(), 0.0);
  double total = 0;
  for (int i = 0; i < 60; ++i) {
    const auto b = assemble_batch(corpus_, opts, rng);
    for (const auto& ep : b.episodes) {
      EXPECT_EQ(ep.X.rows(), 24);
      EXPECT_EQ(ep.X.cols(), 16);
      EXPECT_GE(ep.eval_pos, kMinContext);
      EXPECT_LT(ep.eval_pos, 24u);
      if (ep.task_kind == TaskKind::classification)
        for (double y : ep.y) EXPECT_LT(y, static_cast<double>(ep.num_classes));
      counts[ep.dataset] += 1;
      total += 1;
    }
  }
  const double expected = total / static_cast<double>(counts.size());
  double chi2 = 0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  EXPECT_LT(chi2, 15.086);  // df = 5, 1% level
}

TEST_F(BatcherCorpus, PrefetcherMatchesDirectBatches) {
  BatchOptions opts;
  opts.batch_size = 4;
  opts.K = 24;
  opts.f_max = 16;
  BatchPrefetcher pf(corpus_, opts, 9, 5, 3);
  for (std::size_t s = 5; s < 8; ++s) {
    const auto a = pf.next();
    const auto b = batch_for_step(corpus_, opts, 9, s);
    for (std::size_t i = 0; i < a.episodes.size(); ++i) EXPECT_EQ(a.episodes[i].X, b.episodes[i].X);
  }
}

TEST(BoundedQueue, CloseDrains) {
  BoundedQueue<int> q(2);
  EXPECT_TRUE(q.push(1));
  q.close();
  EXPECT_EQ(q.pop(), std::optional<int>(1));
  EXPECT_EQ(q.pop(), std::nullopt);
  EXPECT_FALSE(q.push(2));
}
