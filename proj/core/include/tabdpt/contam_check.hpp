#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "tabdpt/table_store.hpp"

namespace tabdpt {

struct FeatureStats {
  double mean = 0.0;
  double variance = 0.0;  // population
  double skewness = 0.0;  // 0 for constant columns
  double kurtosis = 0.0;  // non-excess; 0 for constant columns
};

struct UnivariateFit {
  double slope = 0.0;
  double intercept = 0.0;
};

struct DatasetFingerprint {
  std::string name;
  std::string content_hash;  // hex SHA-256 of the canonical serialization
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  std::optional<double> target_mean;
  std::optional<double> target_var;
  std::vector<std::string> feature_names;
  std::vector<FeatureStats> features;            // target column excluded
  std::optional<std::vector<UnivariateFit>> fits;  // feature -> target least squares
};

FeatureStats feature_stats(const std::vector<double>& values);

/// Columns sorted by name, rows in file order, numbers printed with %.17g, missing cells empty.
std::string canonical_serialization(const RawTable& raw);

/// Numeric columns use their values, categorical ones their sorted-category codes. Missing cells are skipped.
DatasetFingerprint fingerprint(const RawTable& raw);
std::vector<DatasetFingerprint> fingerprint_all(const std::vector<RawTable>& tables, std::size_t workers = 1);

/// Static k-d tree over small fixed-width points.
template <std::size_t Dim>
class KdTree {
 public:
  using Point = std::array<double, Dim>;

  explicit KdTree(std::vector<Point> points);

  std::size_t size() const { return points_.size(); }
  const Point& point(std::size_t i) const { return points_[i]; }

  /// Index of the Euclidean-nearest point; ties go to the lower index.
  std::optional<std::size_t> nearest(const Point& q) const;
  /// Whether some point p satisfies |p_k - q_k| <= tol * max(|p_k|, |q_k|) in every coordinate.
  bool any_within_relative(const Point& q, double tol) const;

 private:
  struct Node {
    std::size_t point = 0;
    std::size_t axis = 0;
    std::ptrdiff_t left = -1, right = -1;
  };
  std::ptrdiff_t build(std::vector<std::size_t>& ids, std::size_t lo, std::size_t hi, std::size_t depth);
  void nearest_rec(std::ptrdiff_t node, const Point& q, std::size_t& best, double& best_d2) const;
  bool box_rec(std::ptrdiff_t node, const Point& lo, const Point& hi, const Point& q, double tol) const;

  std::vector<Point> points_;
  std::vector<Node> nodes_;
  std::ptrdiff_t root_ = -1;
};

bool within_relative(double a, double b, double tol);

struct CompareOptions {
  double tolerance = 1e-3;
  double flag_fraction = 0.8;
};

struct SimilarityReport {
  std::string train_name;
  std::string eval_name;
  bool hash_match = false;
  bool name_match = false;
  bool shape_match = false;
  std::size_t stat_matches = 0;    // eval features matched on all moments (and fits when both have them)
  std::size_t scaled_matches = 0;  // eval features matched on skewness and kurtosis only
  std::size_t eval_features = 0;
  double match_fraction = 0.0;     // larger of the two matched fractions
  bool flagged = false;
  std::vector<std::string> reasons;
};

/// Every train/eval pair. Matching counts eval features whose stats are within tolerance of some
/// train feature.
std::vector<SimilarityReport> compare_all(const std::vector<DatasetFingerprint>& train,
                                          const std::vector<DatasetFingerprint>& eval,
                                          const CompareOptions& opts = {});

/// `train_ds,eval_ds,flag_reason,match_fraction`; reasons joined by '+', "none" when clear.
std::string format_report_csv(const std::vector<SimilarityReport>& reports);

}  // namespace tabdpt
