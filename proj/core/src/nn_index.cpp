#include "tabdpt/nn_index.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace tabdpt {

NeighborIndex NeighborIndex::build(const PreparedTable& table) { return build(table.data); }

NeighborIndex NeighborIndex::build(const MatrixXdR& rows) {
  if (rows.rows() == 0) throw data_error("nn_index: cannot build an index over an empty table");
  auto data = std::make_shared<std::vector<double>>(rows.data(), rows.data() + rows.size());
  return NeighborIndex(std::move(data), static_cast<std::size_t>(rows.rows()),
                       static_cast<std::size_t>(rows.cols()));
}

NeighborResult NeighborIndex::query(std::span<const double> point, std::size_t k) const {
  if (point.size() != dim_)
    throw data_error("nn_index: query has dimension " + std::to_string(point.size()) + ", index has " +
                     std::to_string(dim_));
  if (k == 0 || k > size_)
    throw data_error("nn_index: k=" + std::to_string(k) + " must lie in [1, N=" + std::to_string(size_) + "]");
  for (double v : point)
    if (!std::isfinite(v)) throw data_error("nn_index: query point is not finite");

  std::vector<double> d2(size_);
  const double* base = data_->data();
  for (std::size_t i = 0; i < size_; ++i) {
    const double* r = base + i * dim_;
    double s = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) {
      const double diff = r[j] - point[j];
      s += diff * diff;
    }
    d2[i] = s;
  }

  std::vector<std::size_t> ids(size_);
  std::iota(ids.begin(), ids.end(), 0);
  const auto closer = [&](std::size_t a, std::size_t b) { return d2[a] < d2[b] || (d2[a] == d2[b] && a < b); };
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end(), closer);
  ids.resize(k);

  NeighborResult out;
  out.row_ids = std::move(ids);
  out.distances.reserve(k);
  for (auto id : out.row_ids) out.distances.push_back(std::sqrt(d2[id]));
  return out;
}

NeighborResult NeighborIndex::query_masked(std::span<const double> point, std::size_t masked_col,
                                           std::size_t k) const {
  if (masked_col >= dim_) throw data_error("nn_index: masked column out of range");
  std::vector<double> masked(point.begin(), point.end());
  if (masked.size() == dim_) masked[masked_col] = 0.0;
  return query(masked, k);
}

}  // namespace tabdpt
