#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "tabdpt/net.hpp"
#include "tabdpt/table_store.hpp"

namespace tabdpt {

struct InferOptions {
  std::size_t context_size = 2048;
  std::size_t ensembles = 8;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Prediction {
  TaskKind kind = TaskKind::regression;
  MatrixXdR probs;             // M x C (classification)
  std::vector<double> values;  // M (regression)
  // Model evaluations per test row and ensemble member (> 1 only for the digit decomposition).
  std::size_t passes_per_member = 1;

  std::vector<std::size_t> argmax() const;
};

/// Retrieval-based prediction. For every test row the `context_size` nearest training rows form the
/// context; context features (and regression targets) are re-standardized with context statistics,
/// and predictions are averaged over ensemble members that permute features and rotate class codes.
Prediction predict(const ModelParams<float>& params, const SupervisedView& train, const MatrixXdR& test_X,
                   const InferOptions& opts);

/// Per-row digit labels for a C-class problem split into base-C_max digits.
struct DigitTaskPlan {
  std::size_t num_digits = 0;
  std::vector<std::vector<std::size_t>> digits;  // [digit][row], least significant digit first
  std::vector<std::size_t> digit_classes;        // admissible values per digit
};

/// Smallest D with C_max^D >= C.
std::size_t num_digit_passes(std::size_t num_classes, std::size_t c_max);

DigitTaskPlan plan_digit_tasks(const std::vector<std::size_t>& labels, std::size_t num_classes, std::size_t c_max);

/// P(label) = product over digits of P(digit_d(label)), renormalized over labels < C.
/// `per_digit[d]` is M x digit_classes[d]; the result is M x C.
MatrixXdR combine_digit_predictions(const std::vector<MatrixXdR>& per_digit, std::size_t num_classes,
                                    std::size_t c_max);

/// Principal-component projection fit on training rows.
class Pca {
 public:
  static Pca fit(const MatrixXdR& X, std::size_t components);

  MatrixXdR transform(const MatrixXdR& X) const;
  MatrixXdR inverse_transform(const MatrixXdR& Z) const;
  const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }
  const MatrixXdR& components() const { return components_; }

 private:
  Eigen::RowVectorXd mean_;
  MatrixXdR components_;  // k x F, rows ordered by descending eigenvalue
  Eigen::VectorXd eigenvalues_;
};

struct ReducedFeatures {
  MatrixXdR train;
  MatrixXdR test;
};

/// PCA to f_max columns when F > f_max; otherwise inputs are returned unchanged.
ReducedFeatures reduce_features(const MatrixXdR& train_X, const MatrixXdR& test_X, std::size_t f_max);

struct FewShotResult {
  Prediction stage1;   // test predictions with only the labeled shots as context
  Prediction final;    // test predictions with shots + pseudo-labeled pool rows as the retrieval corpus
  std::size_t pseudo_labeled = 0;
};

inline constexpr std::size_t kPseudoLabelCount = 1000;

/// Two-stage semi-supervised prediction: label the pool from the shots, keep the most confident
/// rows as pseudo-labeled context, then predict the test rows.
FewShotResult fewshot_predict(const ModelParams<float>& params, const SupervisedView& shots, const MatrixXdR& pool,
                              const MatrixXdR& test_X, const InferOptions& opts,
                              std::size_t pseudo_count = kPseudoLabelCount);

/// Feature columns of a prepared table (target removed), all rows kept.
MatrixXdR feature_matrix(const PreparedTable& table);

}  // namespace tabdpt
