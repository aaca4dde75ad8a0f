#pragma once

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "tabdpt/nn_index.hpp"
#include "tabdpt/ssl_tasks.hpp"
#include "tabdpt/table_store.hpp"

namespace tabdpt {

struct CorpusEntry {
  PreparedTable table;
  NeighborIndex index;
};
using Corpus = std::vector<CorpusEntry>;

CorpusEntry make_corpus_entry(PreparedTable table);

struct BatchEpisode {
  MatrixXdR X;               // K x F_max, zero padded
  std::vector<double> y;     // K
  TaskKind task_kind = TaskKind::regression;
  std::size_t num_classes = 0;
  std::size_t eval_pos = 0;  // rows [0, eval_pos) are context, the rest are queries
  std::size_t dataset = 0;
};

struct TrainBatch {
  std::vector<BatchEpisode> episodes;
  std::size_t K = 0;
};

inline constexpr std::size_t kMinContext = 10;

MatrixXdR pad_features(const MatrixXdR& X, std::size_t f_max);

/// Uniform on [10, K-1]: at least ten context rows and at least one query.
std::size_t split_context_query(std::size_t k, Rng& rng);

/// Re-standardizes every column with statistics of the first `context_rows` rows.
/// Zero-variance context columns become all zeros.
void standardize_by_context(MatrixXdR& X, std::size_t context_rows);

struct BatchOptions {
  std::size_t batch_size = 1;
  std::size_t K = 64;
  std::size_t f_max = 100;
  EpisodeOptions episode;
};

TrainBatch assemble_batch(const Corpus& corpus, const BatchOptions& opts, Rng& rng);

/// Batch for training step `step`, drawn from a generator keyed on (seed, step) so a resumed
/// run sees the same batches as an uninterrupted one.
TrainBatch batch_for_step(const Corpus& corpus, const BatchOptions& opts, std::uint64_t seed, std::size_t step);

/// Fixed-capacity FIFO between batch producers and the training step.
template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity) {}

  bool push(T item) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
    if (closed_) return false;
    items_.push_back(std::move(item));
    not_empty_.notify_one();
    return true;
  }

  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
    if (items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return item;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

 private:
  std::size_t capacity_;
  std::deque<T> items_;
  bool closed_ = false;
  std::mutex mu_;
  std::condition_variable not_empty_;
  std::condition_variable not_full_;
};

/// Produces batch_for_step(first_step + i) for i < count on a background thread.
class BatchPrefetcher {
 public:
  BatchPrefetcher(const Corpus& corpus, BatchOptions opts, std::uint64_t seed, std::size_t first_step,
                  std::size_t count, std::size_t depth = 4);
  ~BatchPrefetcher();
  BatchPrefetcher(const BatchPrefetcher&) = delete;
  BatchPrefetcher& operator=(const BatchPrefetcher&) = delete;

  /// Rethrows any producer-side exception.
  TrainBatch next();

 private:
  struct Item {
    std::optional<TrainBatch> batch;
    std::exception_ptr error;
  };
  BoundedQueue<Item> queue_;
  std::jthread worker_;
};

}  // namespace tabdpt
