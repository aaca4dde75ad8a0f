#include "tabdpt/infer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "tabdpt/batcher.hpp"
#include "tabdpt/nn_index.hpp"

namespace tabdpt {

namespace {

std::size_t ipow(std::size_t base, std::size_t exp) {
  std::size_t r = 1;
  for (std::size_t i = 0; i < exp; ++i) r *= base;
  return r;
}

std::size_t digit_of(std::size_t label, std::size_t d, std::size_t c_max) { return (label / ipow(c_max, d)) % c_max; }

// Softmax over the first `c` logits of row 0.
std::vector<double> active_softmax(const Mat<float>& logits, std::size_t c) {
  std::vector<double> p(c);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < c; ++k) mx = std::max(mx, static_cast<double>(logits(0, static_cast<Eigen::Index>(k))));
  double z = 0.0;
  for (std::size_t k = 0; k < c; ++k) {
    p[k] = std::exp(static_cast<double>(logits(0, static_cast<Eigen::Index>(k))) - mx);
    z += p[k];
  }
  for (auto& v : p) v /= z;
  return p;
}

struct Member {
  std::vector<std::size_t> perm;      // feature order
  std::vector<std::size_t> rotation;  // per digit (or a single entry) class-code shift
};

Member make_member(std::uint64_t seed, std::size_t e, std::size_t num_features,
                   const std::vector<std::size_t>& classes_per_pass) {
  Member m;
  m.perm.resize(num_features);
  std::iota(m.perm.begin(), m.perm.end(), 0);
  m.rotation.assign(classes_per_pass.size(), 0);
  if (e == 0) return m;  // the first member sees the data as given
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(e)};
  Rng rng(seq);
  std::shuffle(m.perm.begin(), m.perm.end(), rng);
  for (std::size_t d = 0; d < classes_per_pass.size(); ++d)
    m.rotation[d] = classes_per_pass[d] > 1 ? uniform_int<std::size_t>(rng, 0, classes_per_pass[d] - 1) : 0;
  return m;
}

}  // namespace

void InferOptions::validate() const {
  if (context_size == 0) throw config_error("infer: context_size must be >= 1");
  if (ensembles == 0) throw config_error("infer: ensembles must be >= 1");
}

std::vector<std::size_t> Prediction::argmax() const {
  std::vector<std::size_t> out;
  if (kind != TaskKind::classification) return out;
  out.reserve(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    Eigen::Index best = 0;
    probs.row(i).maxCoeff(&best);
    out.push_back(static_cast<std::size_t>(best));
  }
  return out;
}

MatrixXdR feature_matrix(const PreparedTable& table) {
  if (!table.target_col) return table.data;
  const auto tc = static_cast<Eigen::Index>(*table.target_col);
  MatrixXdR X(table.data.rows(), table.data.cols() - 1);
  Eigen::Index c = 0;
  for (Eigen::Index j = 0; j < table.data.cols(); ++j)
    if (j != tc) X.col(c++) = table.data.col(j);
  return X;
}

std::size_t num_digit_passes(std::size_t num_classes, std::size_t c_max) {
  if (c_max < 2) throw config_error("digit plan: C_max must be >= 2");
  std::size_t d = 0;
  std::size_t span = 1;
  while (span < num_classes) {
    span *= c_max;
    ++d;
  }
  return std::max<std::size_t>(d, 1);
}

DigitTaskPlan plan_digit_tasks(const std::vector<std::size_t>& labels, std::size_t num_classes, std::size_t c_max) {
  if (num_classes <= c_max)
    throw config_error("digit plan: C=" + std::to_string(num_classes) + " fits in one pass (C_max=" +
                       std::to_string(c_max) + ")");
  DigitTaskPlan plan;
  plan.num_digits = num_digit_passes(num_classes, c_max);
  plan.digits.assign(plan.num_digits, std::vector<std::size_t>(labels.size()));
  for (std::size_t d = 0; d < plan.num_digits; ++d) {
    const bool top = d + 1 == plan.num_digits;
    plan.digit_classes.push_back(top ? (num_classes - 1) / ipow(c_max, d) + 1 : c_max);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] >= num_classes) throw data_error("digit plan: label out of range");
      plan.digits[d][i] = digit_of(labels[i], d, c_max);
    }
  }
  return plan;
}

MatrixXdR combine_digit_predictions(const std::vector<MatrixXdR>& per_digit, std::size_t num_classes,
                                    std::size_t c_max) {
  if (per_digit.empty()) throw data_error("combine: no digit predictions");
  const auto m = per_digit.front().rows();
  MatrixXdR out = MatrixXdR::Zero(m, static_cast<Eigen::Index>(num_classes));
  for (Eigen::Index i = 0; i < m; ++i) {
    double total = 0.0;
    for (std::size_t label = 0; label < num_classes; ++label) {
      double p = 1.0;
      for (std::size_t d = 0; d < per_digit.size() && p > 0.0; ++d) {
        const auto dig = static_cast<Eigen::Index>(digit_of(label, d, c_max));
        p *= dig < per_digit[d].cols() ? per_digit[d](i, dig) : 0.0;
      }
      out(i, static_cast<Eigen::Index>(label)) = p;
      total += p;
    }
    if (total > 0.0) {
      out.row(i) /= total;
    } else {
      out.row(i).setConstant(1.0 / static_cast<double>(num_classes));
    }
  }
  return out;
}

Pca Pca::fit(const MatrixXdR& X, std::size_t components) {
  const auto n = X.rows();
  const auto f = X.cols();
  if (n == 0 || f == 0) throw data_error("pca: empty input");
  if (components == 0 || components > static_cast<std::size_t>(f))
    throw config_error("pca: component count must lie in [1, F]");
  Pca pca;
  pca.mean_ = X.colwise().mean();
  const MatrixXdR centered = X.rowwise() - pca.mean_;
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw numeric_error("pca: eigendecomposition failed");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(f));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return solver.eigenvalues()(a) > solver.eigenvalues()(b);
  });
  const auto k = static_cast<Eigen::Index>(components);
  pca.components_.resize(k, f);
  pca.eigenvalues_.resize(k);
  for (Eigen::Index c = 0; c < k; ++c) {
    Eigen::VectorXd v = solver.eigenvectors().col(order[static_cast<std::size_t>(c)]);
    Eigen::Index big = 0;
    v.cwiseAbs().maxCoeff(&big);
    if (v(big) < 0.0) v = -v;
    pca.components_.row(c) = v.transpose();
    pca.eigenvalues_(c) = std::max(0.0, solver.eigenvalues()(order[static_cast<std::size_t>(c)]));
  }
  return pca;
}

MatrixXdR Pca::transform(const MatrixXdR& X) const {
  if (X.cols() != components_.cols()) throw data_error("pca: feature count mismatch");
  return (X.rowwise() - mean_) * components_.transpose();
}

MatrixXdR Pca::inverse_transform(const MatrixXdR& Z) const {
  MatrixXdR X = Z * components_;
  X.rowwise() += mean_;
  return X;
}

ReducedFeatures reduce_features(const MatrixXdR& train_X, const MatrixXdR& test_X, std::size_t f_max) {
  if (static_cast<std::size_t>(train_X.cols()) <= f_max) return {train_X, test_X};
  const Pca pca = Pca::fit(train_X, f_max);
  return {pca.transform(train_X), pca.transform(test_X)};
}

Prediction predict(const ModelParams<float>& params, const SupervisedView& train, const MatrixXdR& test_X,
                   const InferOptions& opts) {
  opts.validate();
  const ModelConfig& cfg = params.config;
  const auto n_train = static_cast<std::size_t>(train.X.rows());
  const std::size_t k = opts.context_size;
  if (n_train == 0) throw data_error("predict: empty training set");
  if (k > n_train)
    throw data_error("predict: context_size K=" + std::to_string(k) + " exceeds N_train=" + std::to_string(n_train));
  if (test_X.cols() != train.X.cols()) throw data_error("predict: test and train feature counts differ");
  if (train.y.size() != n_train) throw data_error("predict: target length does not match training rows");

  const bool cls = train.kind == TaskKind::classification;
  const std::size_t c = train.num_classes;
  std::vector<std::size_t> labels;
  if (cls) {
    if (c == 0) throw data_error("predict: classification target without classes");
    for (double y : train.y) {
      if (!(y >= 0.0) || y >= static_cast<double>(c)) throw data_error("predict: class label out of range");
      labels.push_back(static_cast<std::size_t>(y));
    }
  }
  const bool digits = cls && c > cfg.c_max;
  std::optional<DigitTaskPlan> plan;
  std::vector<std::size_t> pass_classes;
  if (digits) {
    plan = plan_digit_tasks(labels, c, cfg.c_max);
    pass_classes = plan->digit_classes;
  } else if (cls) {
    pass_classes = {c};
  } else {
    pass_classes = {1};
  }

  const auto reduced = reduce_features(train.X, test_X, cfg.f_max);
  const auto index = NeighborIndex::build(train.X);
  const auto f = static_cast<std::size_t>(reduced.train.cols());
  const auto m = test_X.rows();

  Prediction pred;
  pred.kind = train.kind;
  pred.passes_per_member = pass_classes.size();
  if (cls) {
    pred.probs = MatrixXdR::Zero(m, static_cast<Eigen::Index>(c));
  } else {
    pred.values.assign(static_cast<std::size_t>(m), 0.0);
  }

  std::vector<Member> members;
  for (std::size_t e = 0; e < opts.ensembles; ++e) members.push_back(make_member(opts.seed, e, f, pass_classes));
  const double inv_e = 1.0 / static_cast<double>(opts.ensembles);
  const auto ki = static_cast<Eigen::Index>(k);

  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::RowVectorXd q = test_X.row(i);
    const NeighborResult nn = index.query(std::span<const double>(q.data(), static_cast<std::size_t>(q.size())), k);

    double y_mean = 0.0, y_sd = 0.0;
    std::vector<double> y_std(k, 0.0);
    if (!cls) {
      for (auto id : nn.row_ids) y_mean += train.y[id];
      y_mean /= static_cast<double>(k);
      for (auto id : nn.row_ids) y_sd += (train.y[id] - y_mean) * (train.y[id] - y_mean);
      y_sd = std::sqrt(y_sd / static_cast<double>(k));
      if (y_sd > 0.0)
        for (std::size_t r = 0; r < k; ++r) y_std[r] = (train.y[nn.row_ids[r]] - y_mean) / y_sd;
    }

    for (const Member& mem : members) {
      MatrixXdR rows(ki + 1, static_cast<Eigen::Index>(f));
      for (std::size_t r = 0; r < k; ++r)
        for (std::size_t j = 0; j < f; ++j)
          rows(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) =
              reduced.train(static_cast<Eigen::Index>(nn.row_ids[r]), static_cast<Eigen::Index>(mem.perm[j]));
      for (std::size_t j = 0; j < f; ++j)
        rows(ki, static_cast<Eigen::Index>(j)) = reduced.test(i, static_cast<Eigen::Index>(mem.perm[j]));
      standardize_by_context(rows, k);
      const MatrixXdR padded = pad_features(rows, cfg.f_max);
      const Mat<float> x_ctx = padded.topRows(ki).cast<float>();
      const Mat<float> x_qy = padded.bottomRows(1).cast<float>();
      Vec<float> y_ctx(ki);

      if (!cls) {
        for (std::size_t r = 0; r < k; ++r) y_ctx(static_cast<Eigen::Index>(r)) = static_cast<float>(y_std[r]);
        const auto out = forward(params, x_ctx, y_ctx, x_qy, TaskKind::regression);
        const double p = static_cast<double>(out.reg_values(0));
        pred.values[static_cast<std::size_t>(i)] += inv_e * (y_sd > 0.0 ? p * y_sd + y_mean : y_mean);
        continue;
      }

      std::vector<MatrixXdR> per_pass;
      for (std::size_t d = 0; d < pass_classes.size(); ++d) {
        const std::size_t nd = pass_classes[d];
        const std::size_t rot = mem.rotation[d];
        for (std::size_t r = 0; r < k; ++r) {
          const std::size_t lab = digits ? plan->digits[d][nn.row_ids[r]] : labels[nn.row_ids[r]];
          y_ctx(static_cast<Eigen::Index>(r)) = static_cast<float>((lab + rot) % nd);
        }
        const auto out = forward(params, x_ctx, y_ctx, x_qy, TaskKind::classification);
        const auto p = active_softmax(out.cls_logits, nd);
        MatrixXdR unrotated(1, static_cast<Eigen::Index>(nd));
        for (std::size_t cc = 0; cc < nd; ++cc) unrotated(0, static_cast<Eigen::Index>(cc)) = p[(cc + rot) % nd];
        per_pass.push_back(std::move(unrotated));
      }
      const MatrixXdR probs = digits ? combine_digit_predictions(per_pass, c, cfg.c_max) : per_pass.front();
      pred.probs.row(i) += inv_e * probs.row(0);
    }
  }
  return pred;
}

FewShotResult fewshot_predict(const ModelParams<float>& params, const SupervisedView& shots, const MatrixXdR& pool,
                              const MatrixXdR& test_X, const InferOptions& opts, std::size_t pseudo_count) {
  if (shots.kind != TaskKind::classification) throw data_error("fewshot: only classification is supported");
  const auto n_shots = static_cast<std::size_t>(shots.X.rows());
  if (n_shots == 0) throw data_error("fewshot: need at least one labeled shot");
  std::vector<bool> seen(shots.num_classes, false);
  for (double y : shots.y) seen[static_cast<std::size_t>(y)] = true;
  if (std::find(seen.begin(), seen.end(), false) != seen.end())
    throw data_error("fewshot: every class needs at least one labeled shot");

  InferOptions shot_opts = opts;
  shot_opts.context_size = std::min(opts.context_size, n_shots);
  FewShotResult res;
  res.stage1 = predict(params, shots, test_X, shot_opts);
  if (pool.rows() == 0) {
    res.final = res.stage1;
    return res;
  }

  const Prediction pool_pred = predict(params, shots, pool, shot_opts);
  std::vector<std::size_t> order(static_cast<std::size_t>(pool.rows()));
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> conf(order.size());
  for (std::size_t r = 0; r < order.size(); ++r) conf[r] = pool_pred.probs.row(static_cast<Eigen::Index>(r)).maxCoeff();
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return conf[a] > conf[b]; });
  order.resize(std::min(pseudo_count, order.size()));
  std::sort(order.begin(), order.end());
  const auto pool_labels = pool_pred.argmax();

  SupervisedView corpus;
  corpus.kind = TaskKind::classification;
  corpus.num_classes = shots.num_classes;
  corpus.X.resize(static_cast<Eigen::Index>(n_shots + order.size()), shots.X.cols());
  corpus.X.topRows(static_cast<Eigen::Index>(n_shots)) = shots.X;
  corpus.y = shots.y;
  for (std::size_t r = 0; r < order.size(); ++r) {
    corpus.X.row(static_cast<Eigen::Index>(n_shots + r)) = pool.row(static_cast<Eigen::Index>(order[r]));
    corpus.y.push_back(static_cast<double>(pool_labels[order[r]]));
  }
  res.pseudo_labeled = order.size();

  InferOptions final_opts = opts;
  final_opts.context_size = std::min(opts.context_size, n_shots + order.size());
  res.final = predict(params, corpus, test_X, final_opts);
  return res;
}

}  // namespace tabdpt
