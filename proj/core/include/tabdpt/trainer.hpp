#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tabdpt/batcher.hpp"
#include "tabdpt/net.hpp"

namespace tabdpt {

struct TrainConfig {
  double learning_rate = 5e-4;
  double weight_decay = 5e-2;
  double label_smoothing = 0.1;
  std::size_t batch_size = 16;
  std::size_t K = 64;
  std::size_t steps = 1000;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  TaskBalance task_balance = TaskBalance::equal;
  // false trains on each table's designated target only (no self-supervised columns).
  bool ssl = true;
  // Held-out evaluation cadence in steps ("epoch"); 0 disables periodic evaluation.
  std::size_t eval_every = 0;
  std::size_t eval_episodes = 64;
  bool prefetch = true;

  void validate() const;
};

template <typename T>
struct LossResult {
  double value = 0.0;
  OutputGrad<T> grad;
};

/// Classification: label-smoothed cross-entropy over the first `num_classes` logits (the rest are
/// masked out). Regression: mean squared error. Both averaged over queries.
template <typename T>
LossResult<T> compute_loss(const ForwardOutput<T>& out, std::span<const double> y_qy, TaskKind task,
                           std::size_t num_classes, double label_smoothing);

template <typename T>
double loss(const ForwardOutput<T>& out, std::span<const double> y_qy, TaskKind task, std::size_t num_classes,
            double label_smoothing) {
  return compute_loss(out, y_qy, task, num_classes, label_smoothing).value;
}

struct AdamState {
  ModelParams<float> m;
  ModelParams<float> v;
  std::uint64_t step = 0;
};

AdamState init_adam(const ModelConfig& config);

/// Adam with decoupled weight decay on weight matrices. Non-finite gradients reject the step.
template <typename T>
void adamw_step(ModelParams<T>& params, const ModelParams<T>& grads, AdamState& state, const TrainConfig& cfg);

struct Checkpoint {
  ModelConfig config;
  ModelParams<float> params;
  AdamState optimizer;
  std::uint64_t train_step = 0;
  std::string corpus_digest;
};

/// "TDPT-CKPT1" binary format; tensors are stored as float32 and round-trip bit-exactly.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string corpus_digest(const Corpus& corpus);

struct LossRecord {
  std::size_t step = 0;
  std::string split;  // train | heldout
  std::string task;   // all | classification | regression
  double loss = 0.0;
};

/// Writes `step,split,task,loss` lines.
std::string format_loss_log(const std::vector<LossRecord>& log);

struct HeldoutOptions {
  std::size_t episodes = 64;
  std::size_t K = 64;
  std::uint64_t seed = 12345;
  double label_smoothing = 0.1;
  TaskBalance balance = TaskBalance::equal;
  bool fixed_target = false;
};

struct HeldoutLoss {
  double mean = 0.0;            // mean over episodes of CE or 1 - rho
  double classification = 0.0; // mean over classification episodes (0 if none)
  double regression = 0.0;      // mean over regression episodes (0 if none)
  std::size_t n_classification = 0;
  std::size_t n_regression = 0;
};

/// 1 - Pearson correlation; constant predictions count as rho = 0.
double one_minus_rho(std::span<const double> pred, std::span<const double> target);

HeldoutLoss heldout_loss(const ModelParams<float>& params, const Corpus& eval_corpus, const HeldoutOptions& opts);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<LossRecord> log;
};

using StepCallback = std::function<void(const LossRecord&)>;

/// Self-supervised training loop: assemble batch, forward each episode, mean loss, AdamW update.
TrainResult train(const Corpus& corpus, const ModelConfig& model, const TrainConfig& cfg,
                  const Corpus* eval_corpus = nullptr, const StepCallback& on_record = {});

/// Continues from an existing checkpoint (optimizer state included).
TrainResult resume(Checkpoint ckpt, const Corpus& corpus, const TrainConfig& cfg, const Corpus* eval_corpus = nullptr,
                   const StepCallback& on_record = {});

}  // namespace tabdpt
