#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tabdpt/table_store.hpp"

namespace tabdpt {

struct Metrics {
  std::optional<double> accuracy;
  std::optional<double> auc;
  std::optional<double> correlation;
  std::optional<double> r2;
};

/// Accuracy and macro one-vs-rest AUC. AUC is absent when only one class occurs in `targets`.
Metrics classification_metrics(const MatrixXdR& probs, std::span<const std::size_t> targets);
/// Pearson correlation and coefficient of determination.
Metrics regression_metrics(std::span<const double> pred, std::span<const double> targets);

/// P(score_pos > score_neg) + 0.5 P(tie) over all positive/negative pairs.
std::optional<double> binary_auc(std::span<const double> scores, std::span<const bool> positive);

double pearson(std::span<const double> x, std::span<const double> y);

/// Percentile with linear interpolation between order statistics (q in [0, 100]).
double percentile(std::vector<double> values, double q);

/// Scores of several methods on several datasets for one metric. NaN marks a missing result.
struct ScoreTable {
  std::string metric;
  std::vector<std::string> methods;
  std::vector<std::string> datasets;
  MatrixXdR scores;  // methods x datasets
  bool higher_is_better = true;

  double at(std::size_t method, std::size_t dataset) const {
    return scores(static_cast<Eigen::Index>(method), static_cast<Eigen::Index>(dataset));
  }
};

bool default_higher_is_better(const std::string& metric);

/// Parses `method,dataset,metric,value` lines into one table per metric.
std::map<std::string, ScoreTable> parse_score_csv(const std::string& text);
std::string format_score_csv(const std::vector<ScoreTable>& tables);

struct IntervalEstimate {
  std::string name;
  double estimate = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

/// Per-dataset ranks (1 = best, ties share the average rank) averaged over datasets scored by
/// every method; 95% interval from a bootstrap over datasets.
std::vector<IntervalEstimate> average_ranks(const ScoreTable& table, std::size_t bootstrap_iters, std::uint64_t seed);

/// Mean of the values lying between the 25th and 75th percentiles (inclusive), with a bootstrap 95% interval.
IntervalEstimate iqm(std::span<const double> scores, std::size_t bootstrap_iters, std::uint64_t seed);
double iqm_point(std::span<const double> scores);

/// W(i, j): share of common datasets where i beats j, ties counted as one half. NaN when no dataset is shared.
MatrixXdR win_rate_matrix(const ScoreTable& table);

struct EloOptions {
  double k_factor = 32.0;
  double initial = 1500.0;
};

/// Sequential Elo over all (pair, dataset) duels, repeated over random match orders.
std::vector<IntervalEstimate> elo_ratings(const ScoreTable& table, std::size_t permutations, std::uint64_t seed,
                                          const EloOptions& opts = {});

struct RatingState {
  double rating = 1500.0;
  double rd = 350.0;
  double volatility = 0.06;
};

struct GlickoGame {
  RatingState opponent;
  double score = 0.0;  // 1 win, 0.5 tie, 0 loss
};

inline constexpr double kGlickoTau = 0.5;

/// One Glicko-2 rating-period update. With no games only the deviation grows.
RatingState glicko2_update(const RatingState& player, std::span<const GlickoGame> games, double tau = kGlickoTau);

/// All duels of the table in a single rating period, every method starting from (1500, 350, 0.06).
std::vector<RatingState> glicko2_ratings(const ScoreTable& table, double tau = kGlickoTau);

std::string format_intervals_csv(const std::string& metric, const std::string& kind,
                                 const std::vector<IntervalEstimate>& rows);
std::string format_win_rate_csv(const ScoreTable& table, const MatrixXdR& w);
std::string format_glicko_csv(const ScoreTable& table, const std::vector<RatingState>& states);

}  // namespace tabdpt
