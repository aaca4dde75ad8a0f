#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "tabdpt/table_store.hpp"

namespace tabdpt {

struct NeighborResult {
  std::vector<std::size_t> row_ids;
  std::vector<double> distances;  // L2, nondecreasing
};

/// Exact brute-force k-nearest-neighbour search under L2 distance.
/// Ties are broken by ascending row id, so answers are fully deterministic.
class NeighborIndex {
 public:
  static NeighborIndex build(const PreparedTable& table);
  static NeighborIndex build(const MatrixXdR& rows);

  std::size_t size() const { return size_; }
  std::size_t dim() const { return dim_; }
  std::span<const double> row(std::size_t i) const { return {data_->data() + i * dim_, dim_}; }

  NeighborResult query(std::span<const double> point, std::size_t k) const;

  /// Same as `query` with point[masked_col] replaced by 0 (the standardized column mean).
  NeighborResult query_masked(std::span<const double> point, std::size_t masked_col, std::size_t k) const;

 private:
  NeighborIndex(std::shared_ptr<const std::vector<double>> data, std::size_t size, std::size_t dim)
      : data_(std::move(data)), size_(size), dim_(dim) {}

  std::shared_ptr<const std::vector<double>> data_;
  std::size_t size_ = 0;
  std::size_t dim_ = 0;
};

}  // namespace tabdpt
