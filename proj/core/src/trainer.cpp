#include "tabdpt/trainer.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "tabdpt/digest.hpp"

namespace tabdpt {

namespace {

template <typename T>
void add_into(ModelParams<T>& acc, const ModelParams<T>& g) {
  auto dst = acc.tensors();
  const auto src = g.tensors();
  for (std::size_t i = 0; i < dst.size(); ++i)
    for (std::size_t j = 0; j < dst[i].size; ++j) dst[i].data[j] += src[i].data[j];
}

// Splits an episode into model inputs at eval_pos.
struct EpisodeInputs {
  Mat<float> x_ctx;
  Vec<float> y_ctx;
  Mat<float> x_qy;
  std::vector<double> y_qy;
};

EpisodeInputs split_episode(const BatchEpisode& ep) {
  const auto k = ep.X.rows();
  const auto e = static_cast<Eigen::Index>(ep.eval_pos);
  EpisodeInputs in;
  in.x_ctx = ep.X.topRows(e).cast<float>();
  in.x_qy = ep.X.bottomRows(k - e).cast<float>();
  in.y_ctx.resize(e);
  for (Eigen::Index i = 0; i < e; ++i) in.y_ctx(i) = static_cast<float>(ep.y[static_cast<std::size_t>(i)]);
  in.y_qy.assign(ep.y.begin() + e, ep.y.end());
  return in;
}

BatchOptions batch_options(const ModelConfig& model, const TrainConfig& cfg) {
  BatchOptions opts;
  opts.batch_size = cfg.batch_size;
  opts.K = cfg.K;
  opts.f_max = model.f_max;
  opts.episode.balance = cfg.task_balance;
  opts.episode.fixed_target = !cfg.ssl;
  return opts;
}

HeldoutOptions heldout_options(const TrainConfig& cfg) {
  HeldoutOptions h;
  h.episodes = cfg.eval_episodes;
  h.K = cfg.K;
  h.seed = cfg.seed + 0x5eed;
  h.label_smoothing = cfg.label_smoothing;
  h.balance = cfg.task_balance;
  return h;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !(weight_decay >= 0.0) || !(label_smoothing >= 0.0 && label_smoothing < 1.0))
    throw config_error("train config: learning_rate > 0, weight_decay >= 0, label_smoothing in [0,1) required");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) || !(adam_eps > 0.0))
    throw config_error("train config: Adam betas must lie in [0,1) and eps > 0");
  if (K <= kMinContext) throw config_error("train config: K must be >= 11");
  if (batch_size == 0) throw config_error("train config: batch_size must be >= 1");
}

template <typename T>
LossResult<T> compute_loss(const ForwardOutput<T>& out, std::span<const double> y_qy, TaskKind task,
                           std::size_t num_classes, double label_smoothing) {
  LossResult<T> r;
  if (task != out.task) throw data_error("loss: task kind does not match the forward pass");
  if (task == TaskKind::classification) {
    const auto& logits = out.cls_logits;
    const auto nq = logits.rows();
    const auto cmax = static_cast<std::size_t>(logits.cols());
    if (static_cast<std::size_t>(nq) != y_qy.size()) throw data_error("loss: label count does not match queries");
    if (num_classes < 1 || num_classes > cmax)
      throw data_error("loss: num_classes=" + std::to_string(num_classes) + " outside [1, C_max]");
    const double eps = label_smoothing;
    const double off = eps / static_cast<double>(num_classes);
    r.grad.d_logits = Mat<T>::Zero(nq, logits.cols());
    double total = 0.0;
    for (Eigen::Index i = 0; i < nq; ++i) {
      const double yl = y_qy[static_cast<std::size_t>(i)];
      if (!(yl >= 0.0) || yl >= static_cast<double>(num_classes) || yl != std::floor(yl))
        throw data_error("loss: label " + std::to_string(yl) + " out of range [0, " + std::to_string(num_classes) + ")");
      const auto label = static_cast<Eigen::Index>(yl);
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < num_classes; ++c) mx = std::max(mx, static_cast<double>(logits(i, static_cast<Eigen::Index>(c))));
      double z = 0.0;
      for (std::size_t c = 0; c < num_classes; ++c) z += std::exp(static_cast<double>(logits(i, static_cast<Eigen::Index>(c))) - mx);
      const double log_z = mx + std::log(z);
      for (std::size_t c = 0; c < num_classes; ++c) {
        const auto ci = static_cast<Eigen::Index>(c);
        const double log_p = static_cast<double>(logits(i, ci)) - log_z;
        const double q = off + (ci == label ? 1.0 - eps : 0.0);
        total -= q * log_p;
        r.grad.d_logits(i, ci) = static_cast<T>((std::exp(log_p) - q) / static_cast<double>(nq));
      }
    }
    r.value = total / static_cast<double>(nq);
  } else {
    const auto& pred = out.reg_values;
    const auto nq = pred.size();
    if (static_cast<std::size_t>(nq) != y_qy.size()) throw data_error("loss: target count does not match queries");
    r.grad.d_values.resize(nq);
    double total = 0.0;
    for (Eigen::Index i = 0; i < nq; ++i) {
      const double diff = static_cast<double>(pred(i)) - y_qy[static_cast<std::size_t>(i)];
      total += diff * diff;
      r.grad.d_values(i) = static_cast<T>(2.0 * diff / static_cast<double>(nq));
    }
    r.value = total / static_cast<double>(nq);
  }
  return r;
}

AdamState init_adam(const ModelConfig& config) {
  return {ModelParams<float>::zeros(config), ModelParams<float>::zeros(config), 0};
}

template <typename T>
void adamw_step(ModelParams<T>& params, const ModelParams<T>& grads, AdamState& state, const TrainConfig& cfg) {
  auto p = params.tensors();
  const auto g = grads.tensors();
  auto m = state.m.tensors();
  auto v = state.v.tensors();
  if (p.size() != g.size() || p.size() != m.size()) throw data_error("adamw: parameter/gradient shape mismatch");
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i].size != g[i].size || p[i].size != m[i].size) throw data_error("adamw: tensor size mismatch in " + p[i].name);
    for (std::size_t j = 0; j < g[i].size; ++j)
      if (!std::isfinite(static_cast<double>(g[i].data[j])))
        throw numeric_error("adamw: non-finite gradient in " + g[i].name);
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double b1 = cfg.adam_beta1;
  const double b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, t);
  const double c2 = 1.0 - std::pow(b2, t);
  const double lr = cfg.learning_rate;
  const double decay = 1.0 - lr * cfg.weight_decay;
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = 0; j < p[i].size; ++j) {
      const double gj = static_cast<double>(g[i].data[j]);
      const double mj = b1 * static_cast<double>(m[i].data[j]) + (1.0 - b1) * gj;
      const double vj = b2 * static_cast<double>(v[i].data[j]) + (1.0 - b2) * gj * gj;
      m[i].data[j] = static_cast<float>(mj);
      v[i].data[j] = static_cast<float>(vj);
      double w = static_cast<double>(p[i].data[j]);
      if (p[i].decay) w *= decay;
      w -= lr * (mj / c1) / (std::sqrt(vj / c2) + cfg.adam_eps);
      p[i].data[j] = static_cast<T>(w);
    }
  }
}

std::string corpus_digest(const Corpus& corpus) {
  std::string bytes;
  for (const auto& entry : corpus) {
    const auto& t = entry.table;
    bytes += t.source;
    bytes.push_back('\0');
    const auto dims = std::to_string(t.n_rows()) + "x" + std::to_string(t.n_cols());
    bytes += dims;
    bytes.append(reinterpret_cast<const char*>(t.data.data()), static_cast<std::size_t>(t.data.size()) * sizeof(double));
  }
  return sha256_hex(bytes);
}

std::string format_loss_log(const std::vector<LossRecord>& log) {
  std::ostringstream os;
  os.precision(9);
  os << "step,split,task,loss\n";
  for (const auto& r : log) os << r.step << ',' << r.split << ',' << r.task << ',' << r.loss << '\n';
  return os.str();
}

double one_minus_rho(std::span<const double> pred, std::span<const double> target) {
  const std::size_t n = pred.size();
  if (n != target.size() || n == 0) throw data_error("one_minus_rho: length mismatch");
  const double mp = std::accumulate(pred.begin(), pred.end(), 0.0) / static_cast<double>(n);
  const double mt = std::accumulate(target.begin(), target.end(), 0.0) / static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (pred[i] - mp) * (target[i] - mt);
    sxx += (pred[i] - mp) * (pred[i] - mp);
    syy += (target[i] - mt) * (target[i] - mt);
  }
  if (sxx <= 0.0 || syy <= 0.0) return 1.0;
  return 1.0 - sxy / std::sqrt(sxx * syy);
}

HeldoutLoss heldout_loss(const ModelParams<float>& params, const Corpus& eval_corpus, const HeldoutOptions& opts) {
  BatchOptions bo;
  bo.batch_size = opts.episodes;
  bo.K = opts.K;
  bo.f_max = params.config.f_max;
  bo.episode.balance = opts.balance;
  bo.episode.fixed_target = opts.fixed_target;
  Rng rng(opts.seed);
  const TrainBatch batch = assemble_batch(eval_corpus, bo, rng);

  HeldoutLoss h;
  double total = 0.0;
  for (const auto& ep : batch.episodes) {
    const auto in = split_episode(ep);
    const auto out = forward(params, in.x_ctx, in.y_ctx, in.x_qy, ep.task_kind);
    double value = 0.0;
    if (ep.task_kind == TaskKind::classification) {
      value = loss(out, in.y_qy, ep.task_kind, ep.num_classes, opts.label_smoothing);
      h.classification += value;
      ++h.n_classification;
    } else {
      std::vector<double> pred(out.reg_values.data(), out.reg_values.data() + out.reg_values.size());
      value = one_minus_rho(pred, in.y_qy);
      h.regression += value;
      ++h.n_regression;
    }
    total += value;
  }
  h.mean = total / static_cast<double>(batch.episodes.size());
  if (h.n_classification) h.classification /= static_cast<double>(h.n_classification);
  if (h.n_regression) h.regression /= static_cast<double>(h.n_regression);
  return h;
}

TrainResult train(const Corpus& corpus, const ModelConfig& model, const TrainConfig& cfg, const Corpus* eval_corpus,
                  const StepCallback& on_record) {
  model.validate();
  Checkpoint ckpt;
  ckpt.config = model;
  ckpt.params = init_params<float>(model, cfg.seed);
  ckpt.optimizer = init_adam(model);
  ckpt.corpus_digest = corpus_digest(corpus);
  return resume(std::move(ckpt), corpus, cfg, eval_corpus, on_record);
}

TrainResult resume(Checkpoint ckpt, const Corpus& corpus, const TrainConfig& cfg, const Corpus* eval_corpus,
                   const StepCallback& on_record) {
  cfg.validate();
  if (corpus.empty()) throw data_error("train: empty corpus");
  for (const auto& entry : corpus)
    if (entry.table.n_rows() < cfg.K)
      throw data_error("train: table '" + entry.table.source + "' has fewer than K=" + std::to_string(cfg.K) + " rows");

  TrainResult result;
  auto record = [&](LossRecord r) {
    if (on_record) on_record(r);
    result.log.push_back(std::move(r));
  };
  auto evaluate = [&](std::size_t step) {
    if (!eval_corpus || eval_corpus->empty()) return;
    const auto h = heldout_loss(ckpt.params, *eval_corpus, heldout_options(cfg));
    record({step, "heldout", "all", h.mean});
    if (h.n_classification) record({step, "heldout", "classification", h.classification});
    if (h.n_regression) record({step, "heldout", "regression", h.regression});
  };

  const BatchOptions bo = batch_options(ckpt.config, cfg);
  const std::size_t first = ckpt.train_step;
  std::optional<BatchPrefetcher> prefetch;
  if (cfg.prefetch && cfg.steps > 0) prefetch.emplace(corpus, bo, cfg.seed, first, cfg.steps);

  for (std::size_t s = 0; s < cfg.steps; ++s) {
    const std::size_t step = first + s;
    const TrainBatch batch = prefetch ? prefetch->next() : batch_for_step(corpus, bo, cfg.seed, step);
    ModelParams<float> grads = ModelParams<float>::zeros(ckpt.config);
    const float inv_b = 1.0f / static_cast<float>(batch.episodes.size());
    double batch_loss = 0.0;
    for (const auto& ep : batch.episodes) {
      const auto in = split_episode(ep);
      Tape<float> tape;
      const auto out = forward(ckpt.params, in.x_ctx, in.y_ctx, in.x_qy, ep.task_kind, &tape);
      auto lr = compute_loss(out, in.y_qy, ep.task_kind, ep.num_classes, cfg.label_smoothing);
      if (!std::isfinite(lr.value)) throw numeric_error("train: non-finite loss at step " + std::to_string(step));
      batch_loss += lr.value;
      lr.grad.d_logits *= inv_b;
      lr.grad.d_values *= inv_b;
      add_into(grads, backward(ckpt.params, tape, lr.grad));
    }
    adamw_step(ckpt.params, grads, ckpt.optimizer, cfg);
    ckpt.train_step = step + 1;
    record({step + 1, "train", "all", batch_loss / static_cast<double>(batch.episodes.size())});
    if (cfg.eval_every && (step + 1) % cfg.eval_every == 0) evaluate(step + 1);
  }
  if (cfg.steps > 0 && (!cfg.eval_every || ckpt.train_step % cfg.eval_every != 0)) evaluate(ckpt.train_step);
  result.checkpoint = std::move(ckpt);
  return result;
}

template LossResult<float> compute_loss<float>(const ForwardOutput<float>&, std::span<const double>, TaskKind,
                                               std::size_t, double);
template LossResult<double> compute_loss<double>(const ForwardOutput<double>&, std::span<const double>, TaskKind,
                                                 std::size_t, double);
template void adamw_step<float>(ModelParams<float>&, const ModelParams<float>&, AdamState&, const TrainConfig&);

}  // namespace tabdpt
