#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "tabdpt/common.hpp"

namespace tabdpt {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

struct ModelConfig {
  std::size_t num_layers = 3;
  std::size_t dim = 32;
  std::size_t num_heads = 4;
  std::size_t ffn_factor = 2;
  std::size_t c_max = 10;
  std::size_t f_max = 100;
  double dropout = 0.0;
  bool prenorm = true;

  std::size_t head_dim() const { return dim / num_heads; }
  void validate() const;
  /// Closed-form count of learnable scalars.
  std::size_t parameter_count() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// (layers, dim) pairs of the published model-size grid.
inline constexpr std::pair<std::size_t, std::size_t> kModelGrid[] = {
    {3, 32}, {4, 64}, {5, 96}, {6, 256}, {10, 384}, {12, 512}, {16, 768}};

template <typename T>
struct Linear {
  Mat<T> w;  // out x in
  Vec<T> b;  // out
};

template <typename T>
struct LayerNormParams {
  Vec<T> gain;
  Vec<T> bias;
};

template <typename T>
struct EncoderLayer {
  LayerNormParams<T> ln1;
  Linear<T> qkv;  // 3d x d, rows ordered [Q; K; V]
  Linear<T> out;  // d x d
  LayerNormParams<T> ln2;
  Linear<T> ffn1;  // (ffn_factor * d) x d
  Linear<T> ffn2;  // d x (ffn_factor * d)
};

/// Non-owning view of one parameter tensor.
template <typename T>
struct TensorRef {
  std::string name;
  T* data = nullptr;
  std::size_t size = 0;
  std::vector<std::size_t> shape;
  bool decay = false;  // weight matrices only
};

template <typename T>
struct ModelParams {
  ModelConfig config;
  Linear<T> phi_x;  // d x F_max
  Linear<T> phi_y;  // d x 1
  std::vector<EncoderLayer<T>> layers;
  LayerNormParams<T> final_norm;
  Linear<T> cls_hidden;  // d x d
  Linear<T> cls_out;     // C_max x d
  Linear<T> reg_hidden;  // d x d
  Linear<T> reg_out;     // 1 x d

  /// Every tensor in a fixed order; names are stable and used by the checkpoint format.
  std::vector<TensorRef<T>> tensors();
  std::vector<TensorRef<const T>> tensors() const;
  std::size_t parameter_count() const;

  static ModelParams zeros(const ModelConfig& config);

  template <typename U>
  ModelParams<U> cast() const;
};

/// Glorot-uniform weights, zero biases, unit LayerNorm gains. Deterministic in `seed`.
template <typename T>
ModelParams<T> init_params(const ModelConfig& config, std::uint64_t seed);

/// Activations recorded by a forward pass, consumed by `backward`.
template <typename T>
struct Tape {
  struct LayerCache {
    Mat<T> input;                // N x d
    Mat<T> ln1_hat;              // normalized, before gain/bias
    Vec<T> ln1_rstd;
    Mat<T> a;                    // LN1 output
    Mat<T> qkv;                  // N x 3d
    std::vector<Mat<T>> p_ctx;   // per head: N x Nc attention onto context keys
    std::vector<Vec<T>> p_self;  // per head: Nq weights of each query onto itself
    Mat<T> attn;                 // N x d concatenated head outputs
    Mat<T> mid;                  // residual after attention
    Mat<T> ln2_hat;
    Vec<T> ln2_rstd;
    Mat<T> b;
    Mat<T> f1;                   // pre-activation
    Mat<T> g;                    // GELU(f1)
  };
  bool recorded = false;
  TaskKind task = TaskKind::classification;
  std::size_t n_ctx = 0;
  std::size_t n_qy = 0;
  Mat<T> x_all;  // N x F_max
  Vec<T> y_ctx;
  std::vector<LayerCache> layers;
  Mat<T> final_in;    // Nq x d (query rows of the last residual stream)
  Mat<T> final_hat;
  Vec<T> final_rstd;
  Mat<T> z;           // Nq x d
  Mat<T> head_pre;    // Nq x d
  Mat<T> head_act;    // Nq x d
};

template <typename T>
struct ForwardOutput {
  TaskKind task = TaskKind::classification;
  Mat<T> cls_logits;  // Nq x C_max
  Vec<T> reg_values;  // Nq
};

/// Row-token transformer forward pass. Context tokens carry phi_x(x) + phi_y(y); query tokens phi_x(x).
/// Context attends to context; each query attends to the context and to itself.
template <typename T>
ForwardOutput<T> forward(const ModelParams<T>& params, const Mat<T>& x_ctx, const Vec<T>& y_ctx, const Mat<T>& x_qy,
                         TaskKind task, Tape<T>* tape = nullptr);

/// dLoss/dOutput for the active head: Nq x C_max logits gradient or Nq regression gradient.
template <typename T>
struct OutputGrad {
  Mat<T> d_logits;
  Vec<T> d_values;
};

/// Exact reverse-mode gradients of the loss with respect to every parameter.
template <typename T>
ModelParams<T> backward(const ModelParams<T>& params, const Tape<T>& tape, const OutputGrad<T>& grad);

template <typename T>
T gelu(T x);

}  // namespace tabdpt
