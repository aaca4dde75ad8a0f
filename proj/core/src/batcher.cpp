#include "tabdpt/batcher.hpp"

#include <cmath>
#include <string>

namespace tabdpt {

CorpusEntry make_corpus_entry(PreparedTable table) {
  auto index = NeighborIndex::build(table);
  return {std::move(table), std::move(index)};
}

MatrixXdR pad_features(const MatrixXdR& X, std::size_t f_max) {
  const auto f = static_cast<std::size_t>(X.cols());
  if (f > f_max)
    throw data_error("pad_features: " + std::to_string(f) + " features exceed F_max=" + std::to_string(f_max));
  MatrixXdR out = MatrixXdR::Zero(X.rows(), static_cast<Eigen::Index>(f_max));
  out.leftCols(X.cols()) = X;
  return out;
}

std::size_t split_context_query(std::size_t k, Rng& rng) {
  if (k <= kMinContext)
    throw data_error("split_context_query: K=" + std::to_string(k) + " must exceed " + std::to_string(kMinContext));
  return uniform_int<std::size_t>(rng, kMinContext, k - 1);
}

void standardize_by_context(MatrixXdR& X, std::size_t context_rows) {
  const auto n = static_cast<Eigen::Index>(context_rows);
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const auto ctx = X.col(j).head(n);
    const double mean = ctx.mean();
    const double sd = std::sqrt((ctx.array() - mean).square().mean());
    if (sd > 1e-12) {
      X.col(j) = (X.col(j).array() - mean) / sd;
    } else {
      X.col(j).setZero();
    }
  }
}

TrainBatch assemble_batch(const Corpus& corpus, const BatchOptions& opts, Rng& rng) {
  if (corpus.empty()) throw data_error("assemble_batch: empty corpus");
  if (opts.batch_size == 0) throw config_error("assemble_batch: batch size must be >= 1");
  TrainBatch batch;
  batch.K = opts.K;
  batch.episodes.reserve(opts.batch_size);
  for (std::size_t b = 0; b < opts.batch_size; ++b) {
    const std::size_t ds = uniform_int<std::size_t>(rng, 0, corpus.size() - 1);
    SslEpisode ep = make_episode(corpus[ds].table, corpus[ds].index, opts.K, rng, opts.episode);
    // The subset order is already random, so keeping a prefix is a uniform F_max-subsample.
    if (static_cast<std::size_t>(ep.features.cols()) > opts.f_max) {
      MatrixXdR kept = ep.features.leftCols(static_cast<Eigen::Index>(opts.f_max));
      ep.features = std::move(kept);
    }
    BatchEpisode out;
    out.eval_pos = split_context_query(opts.K, rng);
    standardize_by_context(ep.features, out.eval_pos);
    out.X = pad_features(ep.features, opts.f_max);
    out.y = std::move(ep.targets);
    out.task_kind = ep.task_kind;
    out.num_classes = ep.num_classes;
    out.dataset = ds;
    batch.episodes.push_back(std::move(out));
  }
  return batch;
}

TrainBatch batch_for_step(const Corpus& corpus, const BatchOptions& opts, std::uint64_t seed, std::size_t step) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(std::uint64_t{step} >> 32)};
  Rng rng(seq);
  return assemble_batch(corpus, opts, rng);
}

BatchPrefetcher::BatchPrefetcher(const Corpus& corpus, BatchOptions opts, std::uint64_t seed, std::size_t first_step,
                                 std::size_t count, std::size_t depth)
    : queue_(depth) {
  worker_ = std::jthread([this, &corpus, opts, seed, first_step, count](std::stop_token stop) {
    for (std::size_t i = 0; i < count && !stop.stop_requested(); ++i) {
      Item item;
      try {
        item.batch = batch_for_step(corpus, opts, seed, first_step + i);
      } catch (...) {
        item.error = std::current_exception();
      }
      const bool failed = item.error != nullptr;
      if (!queue_.push(std::move(item)) || failed) break;
    }
  });
}

BatchPrefetcher::~BatchPrefetcher() {
  worker_.request_stop();
  queue_.close();
}

TrainBatch BatchPrefetcher::next() {
  auto item = queue_.pop();
  if (!item) throw data_error("batch prefetcher exhausted");
  if (item->error) std::rethrow_exception(item->error);
  return std::move(*item->batch);
}

}  // namespace tabdpt
