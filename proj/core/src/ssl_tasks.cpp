#include "tabdpt/ssl_tasks.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <string>

namespace tabdpt {

namespace {

std::vector<double> sorted_distinct(std::span<const double> values) {
  std::vector<double> d(values.begin(), values.end());
  std::sort(d.begin(), d.end());
  d.erase(std::unique(d.begin(), d.end()), d.end());
  return d;
}

// Maps labels onto [0, observed) keeping their order, then applies a random permutation.
std::vector<double> relabel(const std::vector<std::size_t>& labels, std::size_t& num_classes, Rng& rng) {
  std::vector<std::size_t> seen(labels);
  std::sort(seen.begin(), seen.end());
  seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
  num_classes = seen.size();
  std::vector<std::size_t> perm(num_classes);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<double> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto dense = static_cast<std::size_t>(std::lower_bound(seen.begin(), seen.end(), labels[i]) - seen.begin());
    out[i] = static_cast<double>(perm[dense]);
  }
  return out;
}

std::vector<double> standardize(std::span<const double> values) {
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / n);
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = sd > 0.0 ? (values[i] - mean) / sd : 0.0;
  return out;
}

std::size_t distinct_count(std::span<const double> values) { return sorted_distinct(values).size(); }

// Episode around one random anchor; empty when no candidate target varies in its neighbourhood.
std::optional<SslEpisode> episode_once(const PreparedTable& table, const NeighborIndex& index, std::size_t k, Rng& rng,
                                       const EpisodeOptions& opts) {
  const std::size_t n = table.n_rows();
  const std::size_t f = table.n_cols();
  const std::size_t anchor = uniform_int<std::size_t>(rng, 0, n - 1);
  const auto anchor_row = index.row(anchor);

  std::vector<std::size_t> candidates;
  if (opts.fixed_target) {
    candidates.push_back(*table.target_col);
  } else {
    candidates.resize(f);
    std::iota(candidates.begin(), candidates.end(), 0);
    std::shuffle(candidates.begin(), candidates.end(), rng);
  }

  for (const std::size_t target_col : candidates) {
    const NeighborResult nn = index.query_masked(anchor_row, target_col, k);
    std::vector<double> y(k);
    for (std::size_t i = 0; i < k; ++i)
      y[i] = opts.fixed_target ? table.target_values[nn.row_ids[i]]
                               : table.data(static_cast<Eigen::Index>(nn.row_ids[i]), static_cast<Eigen::Index>(target_col));
    // A fixed target keeps the table's class coding, so a single-label neighbourhood is still a valid task.
    if (!opts.fixed_target && distinct_count(y) < 2) continue;

    std::vector<std::size_t> others;
    for (std::size_t j = 0; j < f; ++j)
      if (j != target_col) others.push_back(j);
    const auto subset = choose_feature_subset(others.size(), rng);

    SslEpisode ep;
    ep.source_col = target_col;
    ep.row_ids = nn.row_ids;
    for (auto s : subset) ep.feature_perm.push_back(others[s]);
    ep.features.resize(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(subset.size()));
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t c = 0; c < ep.feature_perm.size(); ++c)
        ep.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
            table.data(static_cast<Eigen::Index>(nn.row_ids[i]), static_cast<Eigen::Index>(ep.feature_perm[c]));

    if (opts.fixed_target) {
      ep.task_kind = table.target_kind;
      if (ep.task_kind == TaskKind::regression) {
        ep.targets = standardize(y);
      } else {
        ep.num_classes = table.class_names.size();
        ep.targets = y;
      }
    } else {
      auto gen = generate_target(y, rng);
      ep.targets = std::move(gen.targets);
      ep.task_kind = gen.kind;
      ep.num_classes = gen.num_classes;
    }
    return ep;
  }
  return std::nullopt;
}

SslEpisode draw_episode(const PreparedTable& table, const NeighborIndex& index, std::size_t k, Rng& rng,
                        const EpisodeOptions& opts) {
  constexpr int kMaxAnchors = 32;
  for (int a = 0; a < kMaxAnchors; ++a)
    if (auto ep = episode_once(table, index, k, rng, opts)) return std::move(*ep);
  throw data_error("ssl: no column of '" + table.source + "' yields a target with >= 2 distinct values");
}

}  // namespace

std::vector<std::size_t> choose_feature_subset(std::size_t num_features, Rng& rng) {
  if (num_features == 0) return {};
  const std::size_t lo = std::max<std::size_t>(1, num_features / 2);
  const std::size_t size = uniform_int<std::size_t>(rng, lo, num_features);
  std::vector<std::size_t> idx(num_features);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(size);
  return idx;
}

std::vector<std::size_t> bin_by_boundaries(std::span<const double> values, std::span<const double> boundaries) {
  std::vector<double> sorted(boundaries.begin(), boundaries.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    out[i] = static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), values[i]) - sorted.begin());
  return out;
}

GeneratedTarget generate_target(std::span<const double> column, Rng& rng) {
  const auto distinct = sorted_distinct(column);
  if (distinct.size() < 2) throw data_error("ssl: target column needs at least 2 distinct values");

  GeneratedTarget out;
  out.kind = TaskKind::classification;
  if (distinct.size() > kClassThreshold) {
    if (uniform01(rng) > 1.0 - kRegressionProbability) {
      out.kind = TaskKind::regression;
      out.targets = standardize(column);
      return out;
    }
    const auto num_class = uniform_int<std::size_t>(rng, 2, kClassThreshold - 1);
    std::vector<double> interior(distinct.begin() + 1, distinct.end() - 1);
    std::shuffle(interior.begin(), interior.end(), rng);
    interior.resize(num_class - 1);
    out.ordinal_labels = bin_by_boundaries(column, interior);
  } else {
    out.ordinal_labels.resize(column.size());
    for (std::size_t i = 0; i < column.size(); ++i)
      out.ordinal_labels[i] =
          static_cast<std::size_t>(std::lower_bound(distinct.begin(), distinct.end(), column[i]) - distinct.begin());
  }
  out.targets = relabel(out.ordinal_labels, out.num_classes, rng);
  return out;
}

SslEpisode make_episode(const PreparedTable& table, const NeighborIndex& index, std::size_t k, Rng& rng,
                        const EpisodeOptions& opts) {
  if (table.n_cols() < 2) throw data_error("ssl: table '" + table.source + "' needs at least 2 columns");
  if (k == 0 || k > table.n_rows())
    throw data_error("ssl: episode length " + std::to_string(k) + " exceeds table rows " +
                     std::to_string(table.n_rows()));
  if (opts.fixed_target) {
    if (!table.target_col) throw data_error("ssl: fixed-target episodes need a designated target");
    for (double v : table.target_values)
      if (std::isnan(v)) throw data_error("ssl: fixed-target episodes need a fully observed target");
    if (table.target_kind == TaskKind::classification && table.class_names.size() < 2)
      throw data_error("ssl: fixed classification target of '" + table.source + "' has fewer than 2 classes");
  }
  if (opts.balance == TaskBalance::code || opts.fixed_target) return draw_episode(table, index, k, rng, opts);

  // Rejection-sample so classification and regression episodes are equally likely.
  constexpr int kMaxTries = 32;
  const TaskKind wanted = uniform01(rng) < 0.5 ? TaskKind::classification : TaskKind::regression;
  SslEpisode ep = draw_episode(table, index, k, rng, opts);
  for (int t = 1; t < kMaxTries && ep.task_kind != wanted; ++t) ep = draw_episode(table, index, k, rng, opts);
  return ep;
}

}  // namespace tabdpt
