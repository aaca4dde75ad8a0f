#include "tabdpt/net.hpp"

#include <cmath>
#include <numbers>

namespace tabdpt {

namespace {

template <typename T>
constexpr T kLayerNormEps = T(1e-5);

template <typename T>
Linear<T> zero_linear(std::size_t out, std::size_t in) {
  return {Mat<T>::Zero(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in)),
          Vec<T>::Zero(static_cast<Eigen::Index>(out))};
}

template <typename T>
LayerNormParams<T> unit_norm(std::size_t d) {
  return {Vec<T>::Ones(static_cast<Eigen::Index>(d)), Vec<T>::Zero(static_cast<Eigen::Index>(d))};
}

template <typename T>
void glorot(Linear<T>& lin, Rng& rng) {
  const double fan_out = static_cast<double>(lin.w.rows());
  const double fan_in = static_cast<double>(lin.w.cols());
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (Eigen::Index i = 0; i < lin.w.size(); ++i) lin.w.data()[i] = static_cast<T>(dist(rng));
}

// Collects tensor views in a fixed order for both const and mutable parameter sets.
template <typename P, typename R>
std::vector<R> collect(P& p) {
  std::vector<R> out;
  auto mat = [&](const std::string& name, auto& m, bool decay) {
    out.push_back({name, m.data(), static_cast<std::size_t>(m.size()),
                   {static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())}, decay});
  };
  auto vec = [&](const std::string& name, auto& v) {
    out.push_back({name, v.data(), static_cast<std::size_t>(v.size()), {static_cast<std::size_t>(v.size())}, false});
  };
  auto lin = [&](const std::string& name, auto& l) {
    mat(name + ".weight", l.w, true);
    vec(name + ".bias", l.b);
  };
  auto norm = [&](const std::string& name, auto& n) {
    vec(name + ".gain", n.gain);
    vec(name + ".bias", n.bias);
  };
  lin("phi_x", p.phi_x);
  lin("phi_y", p.phi_y);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const std::string pre = "layers." + std::to_string(l) + ".";
    auto& layer = p.layers[l];
    norm(pre + "ln1", layer.ln1);
    lin(pre + "qkv", layer.qkv);
    lin(pre + "out", layer.out);
    norm(pre + "ln2", layer.ln2);
    lin(pre + "ffn1", layer.ffn1);
    lin(pre + "ffn2", layer.ffn2);
  }
  norm("final_norm", p.final_norm);
  lin("cls_hidden", p.cls_hidden);
  lin("cls_out", p.cls_out);
  lin("reg_hidden", p.reg_hidden);
  lin("reg_out", p.reg_out);
  return out;
}

template <typename T>
Mat<T> affine(const Mat<T>& x, const Linear<T>& lin) {
  Mat<T> y = x * lin.w.transpose();
  y.rowwise() += lin.b.transpose();
  return y;
}

template <typename T>
void affine_backward(const Mat<T>& x, const Mat<T>& dy, const Linear<T>& lin, Linear<T>& grad, Mat<T>* dx) {
  grad.w.noalias() += dy.transpose() * x;
  grad.b.noalias() += dy.colwise().sum().transpose();
  if (dx) dx->noalias() = dy * lin.w;
}

template <typename T>
Mat<T> layer_norm(const Mat<T>& x, const LayerNormParams<T>& p, Mat<T>& hat, Vec<T>& rstd) {
  const Eigen::Index n = x.rows();
  const T d = static_cast<T>(x.cols());
  hat.resize(n, x.cols());
  rstd.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const T mean = x.row(i).sum() / d;
    const T var = (x.row(i).array() - mean).square().sum() / d;
    rstd(i) = T(1) / std::sqrt(var + kLayerNormEps<T>);
    hat.row(i) = (x.row(i).array() - mean) * rstd(i);
  }
  Mat<T> y = hat.array().rowwise() * p.gain.transpose().array();
  y.rowwise() += p.bias.transpose();
  return y;
}

template <typename T>
Mat<T> layer_norm_backward(const Mat<T>& dy, const Mat<T>& hat, const Vec<T>& rstd, const LayerNormParams<T>& p,
                           LayerNormParams<T>& grad) {
  grad.gain.noalias() += (dy.array() * hat.array()).colwise().sum().matrix().transpose();
  grad.bias.noalias() += dy.colwise().sum().transpose();
  const T d = static_cast<T>(dy.cols());
  Mat<T> dhat = dy.array().rowwise() * p.gain.transpose().array();
  Mat<T> dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const T m1 = dhat.row(i).sum() / d;
    const T m2 = dhat.row(i).dot(hat.row(i)) / d;
    dx.row(i) = rstd(i) * (dhat.row(i).array() - m1 - hat.row(i).array() * m2);
  }
  return dx;
}

template <typename T>
T gelu_grad(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x * T(0.5 * std::numbers::sqrt2)));
  const T pdf = std::exp(T(-0.5) * x * x) * T(0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
  return cdf + x * pdf;
}

template <typename T>
Mat<T> gelu_mat(const Mat<T>& x) {
  return x.unaryExpr([](T v) { return gelu(v); });
}

template <typename T>
void check_finite(const Mat<T>& m, const char* what) {
  if (!m.allFinite()) throw numeric_error(std::string("forward: non-finite values in ") + what);
}

}  // namespace

template <typename T>
T gelu(T x) {
  return T(0.5) * x * (T(1) + std::erf(x * T(0.5 * std::numbers::sqrt2)));
}

void ModelConfig::validate() const {
  if (num_layers == 0 || dim == 0 || num_heads == 0 || ffn_factor == 0 || c_max < 2 || f_max == 0)
    throw config_error("model config: sizes must be positive (c_max >= 2)");
  if (dim % num_heads != 0)
    throw config_error("model config: dim=" + std::to_string(dim) + " is not divisible by num_heads=" +
                       std::to_string(num_heads));
  if (dropout != 0.0) throw config_error("model config: only dropout = 0 is supported");
  if (!prenorm) throw config_error("model config: only pre-norm layers are supported");
}

std::size_t ModelConfig::parameter_count() const {
  const std::size_t d = dim;
  const std::size_t h = ffn_factor * d;
  const std::size_t per_layer = 2 * d + (3 * d * d + 3 * d) + (d * d + d) + 2 * d + (h * d + h) + (d * h + d);
  return (d * f_max + d) + (d + d) + num_layers * per_layer + 2 * d + (d * d + d) + (c_max * d + c_max) +
         (d * d + d) + (d + 1);
}

template <typename T>
std::vector<TensorRef<T>> ModelParams<T>::tensors() {
  return collect<ModelParams<T>, TensorRef<T>>(*this);
}

template <typename T>
std::vector<TensorRef<const T>> ModelParams<T>::tensors() const {
  return collect<const ModelParams<T>, TensorRef<const T>>(*this);
}

template <typename T>
std::size_t ModelParams<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors()) n += t.size;
  return n;
}

template <typename T>
ModelParams<T> ModelParams<T>::zeros(const ModelConfig& c) {
  c.validate();
  const std::size_t d = c.dim;
  ModelParams<T> p;
  p.config = c;
  p.phi_x = zero_linear<T>(d, c.f_max);
  p.phi_y = zero_linear<T>(d, 1);
  for (std::size_t l = 0; l < c.num_layers; ++l) {
    EncoderLayer<T> layer;
    layer.ln1 = unit_norm<T>(d);
    layer.qkv = zero_linear<T>(3 * d, d);
    layer.out = zero_linear<T>(d, d);
    layer.ln2 = unit_norm<T>(d);
    layer.ffn1 = zero_linear<T>(c.ffn_factor * d, d);
    layer.ffn2 = zero_linear<T>(d, c.ffn_factor * d);
    p.layers.push_back(std::move(layer));
  }
  p.final_norm = unit_norm<T>(d);
  p.cls_hidden = zero_linear<T>(d, d);
  p.cls_out = zero_linear<T>(c.c_max, d);
  p.reg_hidden = zero_linear<T>(d, d);
  p.reg_out = zero_linear<T>(1, d);
  // Gradients and optimizer moments start from all-zero, including the LayerNorm gains.
  for (auto& t : p.tensors()) std::fill(t.data, t.data + t.size, T(0));
  return p;
}

template <typename T>
template <typename U>
ModelParams<U> ModelParams<T>::cast() const {
  ModelParams<U> out = ModelParams<U>::zeros(config);
  const auto src = tensors();
  auto dst = out.tensors();
  for (std::size_t i = 0; i < src.size(); ++i)
    for (std::size_t j = 0; j < src[i].size; ++j) dst[i].data[j] = static_cast<U>(src[i].data[j]);
  return out;
}

template <typename T>
ModelParams<T> init_params(const ModelConfig& config, std::uint64_t seed) {
  ModelParams<T> p = ModelParams<T>::zeros(config);
  Rng rng(seed);
  glorot(p.phi_x, rng);
  glorot(p.phi_y, rng);
  for (auto& layer : p.layers) {
    layer.ln1.gain.setOnes();
    layer.ln2.gain.setOnes();
    glorot(layer.qkv, rng);
    glorot(layer.out, rng);
    glorot(layer.ffn1, rng);
    glorot(layer.ffn2, rng);
  }
  p.final_norm.gain.setOnes();
  glorot(p.cls_hidden, rng);
  glorot(p.cls_out, rng);
  glorot(p.reg_hidden, rng);
  glorot(p.reg_out, rng);
  return p;
}

template <typename T>
ForwardOutput<T> forward(const ModelParams<T>& params, const Mat<T>& x_ctx, const Vec<T>& y_ctx, const Mat<T>& x_qy,
                         TaskKind task, Tape<T>* tape) {
  const ModelConfig& cfg = params.config;
  const auto nc = x_ctx.rows();
  const auto nq = x_qy.rows();
  const auto fm = static_cast<Eigen::Index>(cfg.f_max);
  if (nc < 1 || nq < 1) throw data_error("forward: need at least one context and one query row");
  if (x_ctx.cols() != fm || x_qy.cols() != fm)
    throw data_error("forward: feature width must equal F_max=" + std::to_string(cfg.f_max));
  if (y_ctx.size() != nc) throw data_error("forward: y_ctx length does not match context rows");
  check_finite(x_ctx, "x_ctx");
  check_finite(x_qy, "x_qy");
  if (!y_ctx.allFinite()) throw numeric_error("forward: non-finite values in y_ctx");

  Tape<T> local;
  Tape<T>& tp = tape ? *tape : local;
  tp = Tape<T>{};
  tp.task = task;
  tp.n_ctx = static_cast<std::size_t>(nc);
  tp.n_qy = static_cast<std::size_t>(nq);
  const auto n = nc + nq;
  const auto d = static_cast<Eigen::Index>(cfg.dim);
  const auto hd = static_cast<Eigen::Index>(cfg.head_dim());
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));

  tp.x_all.resize(n, fm);
  tp.x_all.topRows(nc) = x_ctx;
  tp.x_all.bottomRows(nq) = x_qy;
  tp.y_ctx = y_ctx;

  Mat<T> h = affine(tp.x_all, params.phi_x);
  h.topRows(nc).noalias() += y_ctx * params.phi_y.w.col(0).transpose();
  h.topRows(nc).rowwise() += params.phi_y.b.transpose();

  tp.layers.resize(params.layers.size());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    auto& c = tp.layers[l];
    c.input = h;
    c.a = layer_norm(h, layer.ln1, c.ln1_hat, c.ln1_rstd);
    c.qkv = affine(c.a, layer.qkv);
    c.attn.resize(n, d);
    c.p_ctx.resize(cfg.num_heads);
    c.p_self.resize(cfg.num_heads);
    for (std::size_t head = 0; head < cfg.num_heads; ++head) {
      const auto off = static_cast<Eigen::Index>(head) * hd;
      const auto q = c.qkv.middleCols(off, hd);
      const auto k = c.qkv.middleCols(d + off, hd);
      const auto v = c.qkv.middleCols(2 * d + off, hd);
      Mat<T> s = (q * k.topRows(nc).transpose()) * scale;  // N x Nc
      Vec<T> s_self = (q.bottomRows(nq).array() * k.bottomRows(nq).array()).rowwise().sum() * scale;
      Vec<T> p_self(nq);
      for (Eigen::Index i = 0; i < n; ++i) {
        const bool is_query = i >= nc;
        T mx = s.row(i).maxCoeff();
        if (is_query) mx = std::max(mx, s_self(i - nc));
        s.row(i) = (s.row(i).array() - mx).exp();
        T denom = s.row(i).sum();
        T self = T(0);
        if (is_query) {
          self = std::exp(s_self(i - nc) - mx);
          denom += self;
        }
        s.row(i) /= denom;
        if (is_query) p_self(i - nc) = self / denom;
      }
      Mat<T> o = s * v.topRows(nc);
      o.bottomRows(nq).array() += v.bottomRows(nq).array().colwise() * p_self.array();
      c.attn.middleCols(off, hd) = o;
      c.p_ctx[head] = std::move(s);
      c.p_self[head] = std::move(p_self);
    }
    c.mid = h + affine(c.attn, layer.out);
    c.b = layer_norm(c.mid, layer.ln2, c.ln2_hat, c.ln2_rstd);
    c.f1 = affine(c.b, layer.ffn1);
    c.g = gelu_mat(c.f1);
    h = c.mid + affine(c.g, layer.ffn2);
  }

  tp.final_in = h.bottomRows(nq);
  tp.z = layer_norm(tp.final_in, params.final_norm, tp.final_hat, tp.final_rstd);
  const auto& hidden = task == TaskKind::classification ? params.cls_hidden : params.reg_hidden;
  const auto& head_out = task == TaskKind::classification ? params.cls_out : params.reg_out;
  tp.head_pre = affine(tp.z, hidden);
  tp.head_act = gelu_mat(tp.head_pre);
  Mat<T> y = affine(tp.head_act, head_out);
  tp.recorded = true;

  ForwardOutput<T> out;
  out.task = task;
  if (task == TaskKind::classification) {
    out.cls_logits = std::move(y);
    check_finite(out.cls_logits, "logits");
  } else {
    out.reg_values = y.col(0);
    if (!out.reg_values.allFinite()) throw numeric_error("forward: non-finite regression output");
  }
  return out;
}

template <typename T>
ModelParams<T> backward(const ModelParams<T>& params, const Tape<T>& tp, const OutputGrad<T>& grad) {
  if (!tp.recorded) throw numeric_error("backward: no recorded forward pass");
  const ModelConfig& cfg = params.config;
  ModelParams<T> g = ModelParams<T>::zeros(cfg);
  const auto nc = static_cast<Eigen::Index>(tp.n_ctx);
  const auto nq = static_cast<Eigen::Index>(tp.n_qy);
  const auto n = nc + nq;
  const auto d = static_cast<Eigen::Index>(cfg.dim);
  const auto hd = static_cast<Eigen::Index>(cfg.head_dim());
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));

  Mat<T> dy;
  if (tp.task == TaskKind::classification) {
    if (grad.d_logits.rows() != nq || grad.d_logits.cols() != static_cast<Eigen::Index>(cfg.c_max))
      throw data_error("backward: logits gradient has the wrong shape");
    dy = grad.d_logits;
  } else {
    if (grad.d_values.size() != nq) throw data_error("backward: regression gradient has the wrong shape");
    dy = grad.d_values;
  }
  const bool cls = tp.task == TaskKind::classification;
  const auto& hidden = cls ? params.cls_hidden : params.reg_hidden;
  const auto& head_out = cls ? params.cls_out : params.reg_out;
  auto& g_hidden = cls ? g.cls_hidden : g.reg_hidden;
  auto& g_out = cls ? g.cls_out : g.reg_out;

  Mat<T> d_act;
  affine_backward(tp.head_act, dy, head_out, g_out, &d_act);
  Mat<T> d_pre = d_act.array() * tp.head_pre.unaryExpr([](T v) { return gelu_grad(v); }).array();
  Mat<T> dz;
  affine_backward(tp.z, d_pre, hidden, g_hidden, &dz);
  Mat<T> dh = Mat<T>::Zero(n, d);
  dh.bottomRows(nq) = layer_norm_backward(dz, tp.final_hat, tp.final_rstd, params.final_norm, g.final_norm);

  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const auto& layer = params.layers[li];
    auto& gl = g.layers[li];
    const auto& c = tp.layers[li];

    // h_out = mid + ffn2(gelu(ffn1(ln2(mid))))
    Mat<T> dg;
    affine_backward(c.g, dh, layer.ffn2, gl.ffn2, &dg);
    Mat<T> df1 = dg.array() * c.f1.unaryExpr([](T v) { return gelu_grad(v); }).array();
    Mat<T> db;
    affine_backward(c.b, df1, layer.ffn1, gl.ffn1, &db);
    Mat<T> dmid = dh + layer_norm_backward(db, c.ln2_hat, c.ln2_rstd, layer.ln2, gl.ln2);

    // mid = input + out(attn)
    Mat<T> dattn;
    affine_backward(c.attn, dmid, layer.out, gl.out, &dattn);
    Mat<T> dqkv = Mat<T>::Zero(n, 3 * d);
    for (std::size_t head = 0; head < cfg.num_heads; ++head) {
      const auto off = static_cast<Eigen::Index>(head) * hd;
      const auto q = c.qkv.middleCols(off, hd);
      const auto k = c.qkv.middleCols(d + off, hd);
      const auto v = c.qkv.middleCols(2 * d + off, hd);
      const Mat<T>& p = c.p_ctx[head];
      const Vec<T>& p_self = c.p_self[head];
      const Mat<T> dout = dattn.middleCols(off, hd);

      Mat<T> dp = dout * v.topRows(nc).transpose();  // N x Nc
      Vec<T> dp_self = (dout.bottomRows(nq).array() * v.bottomRows(nq).array()).rowwise().sum();
      auto dv = dqkv.middleCols(2 * d + off, hd);
      dv.topRows(nc).noalias() += p.transpose() * dout;
      dv.bottomRows(nq).array() += dout.bottomRows(nq).array().colwise() * p_self.array();

      // Softmax backward: ds = p * (dp - sum_j p_j dp_j), the self weight included for queries.
      Vec<T> inner = (p.array() * dp.array()).rowwise().sum();
      inner.tail(nq).array() += p_self.array() * dp_self.array();
      Mat<T> ds = p.array() * (dp.colwise() - inner).array();
      Vec<T> ds_self = p_self.array() * (dp_self - inner.tail(nq)).array();

      auto dq = dqkv.middleCols(off, hd);
      auto dk = dqkv.middleCols(d + off, hd);
      dq.noalias() += (ds * k.topRows(nc)) * scale;
      dq.bottomRows(nq).array() += (k.bottomRows(nq).array().colwise() * ds_self.array()) * scale;
      dk.topRows(nc).noalias() += (ds.transpose() * q) * scale;
      dk.bottomRows(nq).array() += (q.bottomRows(nq).array().colwise() * ds_self.array()) * scale;
    }
    Mat<T> da;
    affine_backward(c.a, dqkv, layer.qkv, gl.qkv, &da);
    dh = dmid + layer_norm_backward(da, c.ln1_hat, c.ln1_rstd, layer.ln1, gl.ln1);
  }

  // h0 = phi_x(x) + [phi_y(y_ctx); 0]
  affine_backward<T>(tp.x_all, dh, params.phi_x, g.phi_x, nullptr);
  const auto dctx = dh.topRows(nc);
  g.phi_y.w.col(0).noalias() += dctx.transpose() * tp.y_ctx;
  g.phi_y.b.noalias() += dctx.colwise().sum().transpose();
  return g;
}

template float gelu<float>(float);
template double gelu<double>(double);
template struct ModelParams<float>;
template struct ModelParams<double>;
template ModelParams<double> ModelParams<float>::cast<double>() const;
template ModelParams<float> ModelParams<double>::cast<float>() const;
template ModelParams<float> ModelParams<float>::cast<float>() const;
template ModelParams<double> ModelParams<double>::cast<double>() const;
template ModelParams<float> init_params<float>(const ModelConfig&, std::uint64_t);
template ModelParams<double> init_params<double>(const ModelConfig&, std::uint64_t);
template ForwardOutput<float> forward<float>(const ModelParams<float>&, const Mat<float>&, const Vec<float>&,
                                             const Mat<float>&, TaskKind, Tape<float>*);
template ForwardOutput<double> forward<double>(const ModelParams<double>&, const Mat<double>&, const Vec<double>&,
                                               const Mat<double>&, TaskKind, Tape<double>*);
template ModelParams<float> backward<float>(const ModelParams<float>&, const Tape<float>&, const OutputGrad<float>&);
template ModelParams<double> backward<double>(const ModelParams<double>&, const Tape<double>&,
                                              const OutputGrad<double>&);

}  // namespace tabdpt
