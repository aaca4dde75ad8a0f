#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tabdpt/common.hpp"
#include "tabdpt/nn_index.hpp"
#include "tabdpt/table_store.hpp"

namespace tabdpt {

/// One self-supervised training task: a retrieved neighbourhood with one column held out as target.
struct SslEpisode {
  MatrixXdR features;                    // K x f
  std::vector<double> targets;           // K
  TaskKind task_kind = TaskKind::regression;
  std::size_t num_classes = 0;           // classification only
  std::size_t source_col = 0;
  std::vector<std::size_t> feature_perm; // retained source columns, in episode order
  std::vector<std::size_t> row_ids;      // retrieved table rows, nearest first
};

inline constexpr std::size_t kClassThreshold = 10;
inline constexpr double kRegressionProbability = 0.7;

/// Random column subset whose size is uniform on [max(1, F/2), F]; indices are distinct and shuffled.
std::vector<std::size_t> choose_feature_subset(std::size_t num_features, Rng& rng);

struct GeneratedTarget {
  std::vector<double> targets;
  TaskKind kind = TaskKind::regression;
  std::size_t num_classes = 0;
  // Classification: labels before the random relabelling (monotone in the source value).
  std::vector<std::size_t> ordinal_labels;
};

/// Turns a column into a regression or classification target.
/// Columns with more than 10 distinct values stay regression with probability 0.7,
/// otherwise they are binned at 1..8 random interior boundaries.
GeneratedTarget generate_target(std::span<const double> column, Rng& rng);

/// Class of each value = number of boundaries strictly below it.
std::vector<std::size_t> bin_by_boundaries(std::span<const double> values, std::span<const double> boundaries);

enum class TaskBalance { code, equal };

struct EpisodeOptions {
  TaskBalance balance = TaskBalance::code;
  // Use the table's designated target column instead of a random one (the no-SSL baseline).
  bool fixed_target = false;
};

SslEpisode make_episode(const PreparedTable& table, const NeighborIndex& index, std::size_t k, Rng& rng,
                        const EpisodeOptions& opts = {});

}  // namespace tabdpt
