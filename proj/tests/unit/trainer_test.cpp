// trainer_test.cpp - losses, AdamW, checkpoints and the training loop.

#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"
#include "tabdpt/trainer.hpp"

using namespace tabdpt;

namespace {

ModelConfig tiny_model() {
  ModelConfig c;
  c.f_max = 16;
  return c;
}

TrainConfig tiny_train(std::size_t steps) {
  TrainConfig t;
  t.steps = steps;
  t.batch_size = 2;
  t.K = 24;
  t.seed = 5;
  t.learning_rate = 1e-3;
  return t;
}

bool same_params(const ModelParams<float>& a, const ModelParams<float>& b) {
  const auto ta = a.tensors();
  const auto tb = b.tensors();
  for (std::size_t t = 0; t < ta.size(); ++t)
    for (std::size_t i = 0; i < ta[t].size; ++i)
      if (ta[t].data[i] != tb[t].data[i]) return false;
  return true;
}

}  // namespace

TEST(Loss, UniformLogitsGiveLogC) {
  ForwardOutput<double> out;
  out.task = TaskKind::classification;
  out.cls_logits = Mat<double>::Zero(3, 10);
  const std::vector<double> y{0, 4, 9};
  EXPECT_NEAR(loss(out, y, TaskKind::classification, 10, 0.1), std::log(10.0), 1e-12);
}

TEST(Loss, PerfectRegressionIsZero) {
  ForwardOutput<double> out;
  out.task = TaskKind::regression;
  out.reg_values.resize(3);
  out.reg_values << 0.5, -1, 2;
  const std::vector<double> y{0.5, -1, 2};
  EXPECT_EQ(loss(out, y, TaskKind::regression, 0, 0.1), 0.0);
}

TEST(Loss, SmoothedCrossEntropyFormula) {
  // Confident correct logits over 3 active classes; inactive logits must be ignored.
  ForwardOutput<double> out;
  out.task = TaskKind::classification;
  out.cls_logits = Mat<double>::Zero(1, 10);
  out.cls_logits(0, 1) = 12.0;
  out.cls_logits(0, 7) = 50.0;
  const std::vector<double> y{1};
  const double eps = 0.1;
  const double z = std::exp(12.0) + 2.0;
  const double logp_hit = 12.0 - std::log(z);
  const double logp_miss = -std::log(z);
  const double want = -((1 - eps + eps / 3) * logp_hit + 2 * (eps / 3) * logp_miss);
  const double got = loss(out, y, TaskKind::classification, 3, eps);
  EXPECT_NEAR(got, want, 1e-12);
  EXPECT_GT(got, 0.0);
}

TEST(Loss, GradientMatchesDifferences) {
  ForwardOutput<double> out;
  out.task = TaskKind::classification;
  out.cls_logits = Mat<double>::Random(2, 10);
  const std::vector<double> y{1, 3};
  const auto r = compute_loss(out, y, TaskKind::classification, 4, 0.1);
  for (Eigen::Index i = 0; i < 2; ++i)
    for (Eigen::Index c = 0; c < 10; ++c) {
      auto up = out, dn = out;
      up.cls_logits(i, c) += 1e-6;
      dn.cls_logits(i, c) -= 1e-6;
      const double fd = (loss(up, y, TaskKind::classification, 4, 0.1) - loss(dn, y, TaskKind::classification, 4, 0.1)) / 2e-6;
      EXPECT_NEAR(r.grad.d_logits(i, c), fd, 1e-7);
    }
}

TEST(AdamW, ZeroGradientOnlyDecays) {
  const ModelConfig mc = tiny_model();
  auto p = init_params<float>(mc, 1);
  const auto before = p;
  auto state = init_adam(mc);
  TrainConfig cfg;
  cfg.learning_rate = 1e-2;
  cfg.weight_decay = 0.5;
  adamw_step(p, ModelParams<float>::zeros(mc), state, cfg);
  const float factor = static_cast<float>(1.0 - 1e-2 * 0.5);
  const auto ta = before.tensors();
  const auto tb = p.tensors();
  for (std::size_t t = 0; t < ta.size(); ++t)
    for (std::size_t i = 0; i < ta[t].size; ++i) {
      const float want = ta[t].decay ? ta[t].data[i] * factor : ta[t].data[i];
      ASSERT_NEAR(tb[t].data[i], want, 1e-7f) << ta[t].name;
    }
}

TEST(AdamW, ConstantGradientStepApproachesLr) {
  const ModelConfig mc = tiny_model();
  auto p = init_params<float>(mc, 2);
  auto g = ModelParams<float>::zeros(mc);
  g.cls_out.w.setConstant(0.3f);
  auto state = init_adam(mc);
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.weight_decay = 0.0;
  for (int i = 0; i < 200; ++i) adamw_step(p, g, state, cfg);
  const float w0 = p.cls_out.w(0, 0);
  adamw_step(p, g, state, cfg);
  EXPECT_NEAR(w0 - p.cls_out.w(0, 0), 1e-3, 1e-5);
}

TEST(AdamW, NonFiniteGradientRejected) {
  const ModelConfig mc = tiny_model();
  auto p = init_params<float>(mc, 3);
  auto g = ModelParams<float>::zeros(mc);
  g.phi_x.w(0, 0) = std::nanf("");
  auto state = init_adam(mc);
  EXPECT_THROW(adamw_step(p, g, state, TrainConfig{}), Error);
}

TEST(HeldoutMetric, RhoRules) {
  const std::vector<double> t{1, 2, 3, 4};
  EXPECT_NEAR(one_minus_rho(t, t), 0.0, 1e-12);
  const std::vector<double> c{2, 2, 2, 2};
  EXPECT_EQ(one_minus_rho(c, t), 1.0);
}

class TrainerCorpus : public ::testing::Test {
 protected:
  void SetUp() override { corpus_ = tabdpt::testing::corpus_from(synthetic::desk_corpus(21, 150)); }
  Corpus corpus_;
};

TEST_F(TrainerCorpus, ZeroStepsKeepsInit) {
  const auto r = train(corpus_, tiny_model(), tiny_train(0));
  EXPECT_EQ(r.checkpoint.train_step, 0u);
  EXPECT_TRUE(same_params(r.checkpoint.params, init_params<float>(tiny_model(), 5)));
}

TEST_F(TrainerCorpus, BitDeterministic) {
  const auto a = train(corpus_, tiny_model(), tiny_train(4));
  const auto b = train(corpus_, tiny_model(), tiny_train(4));
  EXPECT_TRUE(same_params(a.checkpoint.params, b.checkpoint.params));
  EXPECT_EQ(format_loss_log(a.log), format_loss_log(b.log));
}

TEST_F(TrainerCorpus, ResumeMatchesUninterruptedRun) {
  const auto full = train(corpus_, tiny_model(), tiny_train(6));
  const auto half = train(corpus_, tiny_model(), tiny_train(3));
  const auto dir = tabdpt::testing::scratch_dir("resume");
  save_checkpoint(half.checkpoint, dir / "half.ckpt");
  const auto rest = resume(load_checkpoint(dir / "half.ckpt"), corpus_, tiny_train(3));
  EXPECT_EQ(rest.checkpoint.train_step, 6u);
  EXPECT_TRUE(same_params(rest.checkpoint.params, full.checkpoint.params));
}

TEST_F(TrainerCorpus, CheckpointRoundTrip) {
  const auto r = train(corpus_, tiny_model(), tiny_train(2));
  const auto dir = tabdpt::testing::scratch_dir("ckpt");
  save_checkpoint(r.checkpoint, dir / "m.ckpt");
  const auto c = load_checkpoint(dir / "m.ckpt");
  EXPECT_EQ(c.config, r.checkpoint.config);
  EXPECT_EQ(c.train_step, 2u);
  EXPECT_EQ(c.corpus_digest, corpus_digest(corpus_));
  EXPECT_TRUE(same_params(c.params, r.checkpoint.params));
  EXPECT_TRUE(same_params(c.optimizer.v, r.checkpoint.optimizer.v));
}

TEST_F(TrainerCorpus, OverfitsARepeatedBatch) {
  BatchOptions bo;
  bo.K = 32;
  bo.f_max = 16;
  bo.batch_size = 1;
  TrainBatch batch;
  for (std::uint64_t s = 0; batch.episodes.empty() || batch.episodes[0].task_kind != TaskKind::regression; ++s)
    batch = batch_for_step(corpus_, bo, 100 + s, 0);
  const auto& ep = batch.episodes[0];
  const Mat<float> xc = ep.X.topRows(static_cast<Eigen::Index>(ep.eval_pos)).cast<float>();
  const Mat<float> xq = ep.X.bottomRows(ep.X.rows() - static_cast<Eigen::Index>(ep.eval_pos)).cast<float>();
  Vec<float> yc(static_cast<Eigen::Index>(ep.eval_pos));
  for (Eigen::Index i = 0; i < yc.size(); ++i) yc(i) = static_cast<float>(ep.y[static_cast<std::size_t>(i)]);
  const std::vector<double> yq(ep.y.begin() + static_cast<std::ptrdiff_t>(ep.eval_pos), ep.y.end());

  auto p = init_params<float>(tiny_model(), 9);
  auto state = init_adam(tiny_model());
  TrainConfig cfg;
  cfg.learning_rate = 3e-3;
  cfg.weight_decay = 0.0;
  double first = 0, last = 0;
  for (int s = 0; s < 400; ++s) {
    Tape<float> tape;
    const auto out = forward(p, xc, yc, xq, TaskKind::regression, &tape);
    const auto l = compute_loss(out, yq, TaskKind::regression, 0, 0.0);
    if (s == 0) first = l.value;
    last = l.value;
    adamw_step(p, backward(p, tape, l.grad), state, cfg);
  }
  EXPECT_LT(last, 0.1 * first);
}

TEST_F(TrainerCorpus, HeldoutLossIsFinite) {
  HeldoutOptions ho;
  ho.episodes = 8;
  ho.K = 24;
  const auto h = heldout_loss(init_params<float>(tiny_model(), 1), corpus_, ho);
  EXPECT_TRUE(std::isfinite(h.mean));
  EXPECT_EQ(h.n_classification + h.n_regression, 8u);
}
