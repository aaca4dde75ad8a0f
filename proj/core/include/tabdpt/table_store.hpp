#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tabdpt/common.hpp"

namespace tabdpt {

using MatrixXdR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class ColumnKind : std::uint8_t { numeric = 0, categorical = 1 };

struct RawColumn {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
  // Raw cell text; nullopt marks a missing (empty) field.
  std::vector<std::optional<std::string>> cells;
  // Parsed values for numeric columns (NaN where missing); empty for categorical ones.
  std::vector<double> numbers;
};

struct RawTable {
  std::string name;
  std::vector<RawColumn> columns;
  std::size_t n_rows = 0;
  std::optional<std::size_t> target;

  std::size_t n_cols() const { return columns.size(); }
  std::optional<std::size_t> column_index(const std::string& column) const;

  /// Builds an all-numeric table from a dense row-major matrix. NaN entries become missing cells.
  static RawTable from_matrix(std::string name, const std::vector<std::string>& column_names,
                              const MatrixXdR& values, std::optional<std::size_t> target = {});
};

/// Parses a comma-delimited file with a header line. Empty fields are missing.
/// A column is categorical as soon as one non-missing cell fails to parse as a finite number.
RawTable load_csv(const std::filesystem::path& path,
                  const std::optional<std::string>& target_column = std::nullopt);
RawTable parse_csv(const std::string& text, std::string name,
                   const std::optional<std::string>& target_column = std::nullopt);

struct ColumnEncoder {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
  // Lexicographically sorted categories; code i maps to categories[i].
  std::vector<std::string> categories;
};

/// Standardized numeric view of a table. Feature statistics are fit once and can be
/// re-applied to other tables with `transform`.
struct PreparedTable {
  std::string source;
  MatrixXdR data;                              // N x F, standardized, clipped, imputed
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> missing;
  std::vector<double> col_means;
  std::vector<double> col_stds;                // 0 marks a constant column
  std::vector<ColumnEncoder> encoders;

  // Supervised target (a column of `data` as well, so it takes part in self-supervised episodes).
  std::optional<std::size_t> target_col;
  TaskKind target_kind = TaskKind::regression;
  std::vector<double> target_values;           // raw value or class code; NaN where missing
  std::vector<std::string> class_names;        // classification targets only

  std::size_t n_rows() const { return static_cast<std::size_t>(data.rows()); }
  std::size_t n_cols() const { return static_cast<std::size_t>(data.cols()); }
};

inline constexpr double kClipValue = 10.0;

struct PrepareOptions {
  // Overrides the default (categorical -> classification, numeric -> regression).
  std::optional<TaskKind> target_kind;
};

PreparedTable prepare(const RawTable& raw, const PrepareOptions& opts = {});

/// Applies statistics and encoders fit on `fitted` to another raw table with the same header.
/// Unseen categories are treated as missing.
PreparedTable transform(const PreparedTable& fitted, const RawTable& raw);

struct FoldSplit {
  std::size_t fold_id = 0;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
  std::uint64_t seed = 0;
};

/// k-fold partition. Stratified by class label when the table has a classification target.
std::vector<FoldSplit> make_folds(const PreparedTable& table, std::size_t k, std::uint64_t seed);

/// Features (target column removed) and targets for supervised use; rows with a missing target are dropped.
struct SupervisedView {
  MatrixXdR X;
  std::vector<double> y;
  TaskKind kind = TaskKind::regression;
  std::size_t num_classes = 0;
  std::vector<std::size_t> row_ids;
};

SupervisedView supervised_view(const PreparedTable& table);
SupervisedView supervised_view(const PreparedTable& table, const std::vector<std::size_t>& rows);

/// Binary persistence: "TDPT-TBL1" magic, dimensions, column metadata, float32 row-major data,
/// bit-packed missing mask. Values round-trip at float32 precision.
void save_table(const PreparedTable& table, const std::filesystem::path& path);
PreparedTable load_table(const std::filesystem::path& path);

}  // namespace tabdpt
