#include "f2s/seqmodel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "f2s/error.hpp"
#include "f2s/kernels.hpp"

namespace f2s::model {

std::string_view head_type_name(HeadType t) { return t == HeadType::f2 ? "f2" : "mle"; }

HeadType parse_head_type(std::string_view name) {
  if (name == "mle") return HeadType::mle;
  if (name == "f2") return HeadType::f2;
  throw ConfigError("unknown head type: " + std::string(name));
}

void ModelConfig::validate() const {
  if (layers == 0 || hidden_dim == 0 || ffn_dim == 0 || heads == 0 || head_dim == 0 || vocab_size == 0) {
    throw ConfigError("model sizes must be positive");
  }
  if (hidden_dim != heads * head_dim) throw ConfigError("hidden_dim must equal heads * head_dim");
  if (sequence_length < 2) throw ConfigError("sequence_length must be at least 2");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
  if (tie_embeddings && head_type == HeadType::f2) {
    throw ConfigError("tie_embeddings is only supported for the mle head");
  }
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"layers", c.layers},
                     {"hidden_dim", c.hidden_dim},
                     {"ffn_dim", c.ffn_dim},
                     {"heads", c.heads},
                     {"head_dim", c.head_dim},
                     {"dropout", c.dropout},
                     {"sequence_length", c.sequence_length},
                     {"vocab_size", c.vocab_size},
                     {"head_type", head_type_name(c.head_type)},
                     {"head_bias", c.head_bias},
                     {"tie_embeddings", c.tie_embeddings},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.layers = j.value("layers", d.layers);
  c.hidden_dim = j.value("hidden_dim", d.hidden_dim);
  c.ffn_dim = j.value("ffn_dim", d.ffn_dim);
  c.heads = j.value("heads", d.heads);
  c.head_dim = j.value("head_dim", d.head_dim);
  c.dropout = j.value("dropout", d.dropout);
  c.sequence_length = j.value("sequence_length", d.sequence_length);
  c.vocab_size = j.value("vocab_size", d.vocab_size);
  c.head_type = parse_head_type(j.value("head_type", std::string("mle")));
  c.head_bias = j.value("head_bias", d.head_bias);
  c.tie_embeddings = j.value("tie_embeddings", d.tie_embeddings);
  c.seed = j.value("seed", d.seed);
}

namespace {

constexpr double kLayerNormEps = 1e-5;

template <class T>
using Vec = std::vector<T>;

// Y[n x out] = X[n x in] W[in x out] + b
template <class T>
void linear_forward(const T* x, std::size_t n, std::size_t in, const Tensor<T>& w, const Tensor<T>& b, T* y) {
  const std::size_t out = w.cols();
  for (std::size_t i = 0; i < n; ++i) {
    T* yi = y + i * out;
    std::copy(b.data.begin(), b.data.end(), yi);
    const T* xi = x + i * in;
    for (std::size_t k = 0; k < in; ++k) {
      kernels::axpy<T>(xi[k], std::span<const T>(w.data.data() + k * out, out), std::span<T>(yi, out));
    }
  }
}

// dX = dY W^T (overwrites), dW += X^T dY, db += sum dY
template <class T>
void linear_backward(const T* x, std::size_t n, std::size_t in, const Tensor<T>& w, const T* dy, T* dx,
                     Tensor<T>& dw, Tensor<T>& db) {
  const std::size_t out = w.cols();
  for (std::size_t i = 0; i < n; ++i) {
    const std::span<const T> dyi(dy + i * out, out);
    const T* xi = x + i * in;
    if (dx != nullptr) {
      kernels::gemv<T>(std::span<const T>(w.data), in, out, dyi, std::span<T>(dx + i * in, in));
    }
    for (std::size_t k = 0; k < in; ++k) {
      kernels::axpy<T>(xi[k], dyi, std::span<T>(dw.data.data() + k * out, out));
    }
    kernels::axpy<T>(T(1), dyi, std::span<T>(db.data));
  }
}

template <class T>
void layer_norm_forward(const T* x, std::size_t n, std::size_t d, const Tensor<T>& g, const Tensor<T>& b, T* y,
                        T* xhat, T* rstd) {
  for (std::size_t i = 0; i < n; ++i) {
    const T* xi = x + i * d;
    double mean = 0.0;
    for (std::size_t k = 0; k < d; ++k) mean += xi[k];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t k = 0; k < d; ++k) var += (xi[k] - mean) * (xi[k] - mean);
    var /= static_cast<double>(d);
    const T rs = static_cast<T>(1.0 / std::sqrt(var + kLayerNormEps));
    rstd[i] = rs;
    for (std::size_t k = 0; k < d; ++k) {
      const T xh = static_cast<T>(xi[k] - mean) * rs;
      xhat[i * d + k] = xh;
      y[i * d + k] = g.data[k] * xh + b.data[k];
    }
  }
}

// dx += LayerNorm backward of dy.
template <class T>
void layer_norm_backward(const T* dy, const T* xhat, const T* rstd, std::size_t n, std::size_t d,
                         const Tensor<T>& g, Tensor<T>& dg, Tensor<T>& db, T* dx) {
  Vec<T> dxhat(d);
  for (std::size_t i = 0; i < n; ++i) {
    const T* dyi = dy + i * d;
    const T* xh = xhat + i * d;
    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      dxhat[k] = dyi[k] * g.data[k];
      dg.data[k] += dyi[k] * xh[k];
      db.data[k] += dyi[k];
      mean_dxhat += dxhat[k];
      mean_dxhat_xhat += dxhat[k] * xh[k];
    }
    mean_dxhat /= static_cast<double>(d);
    mean_dxhat_xhat /= static_cast<double>(d);
    for (std::size_t k = 0; k < d; ++k) {
      dx[i * d + k] += rstd[i] * static_cast<T>(dxhat[k] - mean_dxhat - xh[k] * mean_dxhat_xhat);
    }
  }
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)

template <class T>
T gelu(T u) {
  const double x = u;
  return static_cast<T>(0.5 * x * (1.0 + std::tanh(kGeluC * (x + 0.044715 * x * x * x))));
}

template <class T>
T gelu_grad(T u) {
  const double x = u;
  const double t = std::tanh(kGeluC * (x + 0.044715 * x * x * x));
  return static_cast<T>(0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * 0.044715 * x * x));
}

// Inverted dropout mask: 0 or 1 / (1 - p).
template <class T>
void make_mask(Vec<T>& mask, std::size_t size, double p, Rng* rng) {
  mask.assign(size, T(1));
  if (rng == nullptr || p <= 0.0) return;
  const T keep = static_cast<T>(1.0 / (1.0 - p));
  for (auto& m : mask) m = rng->uniform() < p ? T(0) : keep;
}

}  // namespace

template <class T>
struct Transformer<T>::Cache {
  struct Layer {
    Vec<T> x_in, ln1_out, ln1_xhat, ln1_rstd, qkv, probs, attn_cat, attn_mask, x_mid;
    Vec<T> ln2_out, ln2_xhat, ln2_rstd, pre_act, act, mlp_mask;
  };
  std::size_t n = 0;
  Vec<T> emb_mask;
  std::vector<Layer> layers;
  Vec<T> x_final, hidden, lnf_xhat, lnf_rstd;
};

template <class T>
Transformer<T>::Transformer(ModelConfig config, ClassPartition partition)
    : config_(std::move(config)), partition_(std::move(partition)) {
  config_.validate();
  const std::size_t v = config_.vocab_size;
  const std::size_t d = config_.hidden_dim;
  if (config_.head_type == HeadType::mle) {
    partition_ = ClassPartition::single_class(v);
  } else if (partition_.vocab_size() != v) {
    throw ConfigError("partition vocabulary (" + std::to_string(partition_.vocab_size()) +
                      ") does not match model vocabulary (" + std::to_string(v) + ")");
  }
  tok_emb_ = add_param("tok_emb", {v, d});
  pos_emb_ = add_param("pos_emb", {config_.sequence_length, d});
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::string p = "h" + std::to_string(l) + ".";
    LayerIndex li{};
    li.ln1_g = add_param(p + "ln1.g", {d});
    li.ln1_b = add_param(p + "ln1.b", {d});
    li.w_qkv = add_param(p + "attn.w_qkv", {d, 3 * d});
    li.b_qkv = add_param(p + "attn.b_qkv", {3 * d});
    li.w_out = add_param(p + "attn.w_out", {d, d});
    li.b_out = add_param(p + "attn.b_out", {d});
    li.ln2_g = add_param(p + "ln2.g", {d});
    li.ln2_b = add_param(p + "ln2.b", {d});
    li.w_in = add_param(p + "mlp.w_in", {d, config_.ffn_dim});
    li.b_in = add_param(p + "mlp.b_in", {config_.ffn_dim});
    li.w_mlp_out = add_param(p + "mlp.w_out", {config_.ffn_dim, d});
    li.b_mlp_out = add_param(p + "mlp.b_out", {d});
    layers_.push_back(li);
  }
  lnf_g_ = add_param("ln_f.g", {d});
  lnf_b_ = add_param("ln_f.b", {d});
  has_head_token_ = !config_.tie_embeddings;
  if (has_head_token_) head_token_ = add_param("head.token_emb", {v, d});
  has_class_ = config_.head_type == HeadType::f2;
  if (has_class_) head_class_ = add_param("head.class_emb", {partition_.num_classes(), d});
  has_bias_ = config_.head_bias;
  if (has_bias_) {
    head_token_bias_ = add_param("head.token_bias", {v});
    if (has_class_) head_class_bias_ = add_param("head.class_bias", {partition_.num_classes()});
  }
  init_params();
}

template <class T>
std::size_t Transformer<T>::add_param(std::string name, std::vector<std::size_t> shape) {
  params_.emplace_back(name, shape);
  grads_.emplace_back(std::move(name), std::move(shape));
  return params_.size() - 1;
}

template <class T>
void Transformer<T>::init_params() {
  Rng rng(config_.seed, Rng::stream_id(0x1A17));
  const double std_w = 0.02;
  const double std_resid = 0.02 / std::sqrt(2.0 * static_cast<double>(config_.layers));
  for (auto& p : params_) {
    const std::string_view name = p.name;
    if (name.ends_with(".g")) {
      std::fill(p.data.begin(), p.data.end(), T(1));
    } else if (p.shape.size() == 1) {
      std::fill(p.data.begin(), p.data.end(), T(0));
    } else {
      const double s = (name.ends_with("attn.w_out") || name.ends_with("mlp.w_out")) ? std_resid : std_w;
      for (auto& x : p.data) x = static_cast<T>(rng.normal() * s);
    }
  }
}

template <class T>
Tensor<T>* Transformer<T>::find_param(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

template <class T>
void Transformer<T>::zero_grads() {
  for (auto& g : grads_) std::fill(g.data.begin(), g.data.end(), T(0));
}

template <class T>
std::size_t Transformer<T>::num_parameters() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.data.size();
  return n;
}

template <class T>
head::HeadWeights<T> Transformer<T>::head_weights() const {
  head::HeadWeights<T> w;
  w.token_emb = params_[has_head_token_ ? head_token_ : tok_emb_].view();
  if (has_class_) w.class_emb = params_[head_class_].view();
  if (has_bias_) {
    w.token_bias = params_[head_token_bias_].span();
    if (has_class_) w.class_bias = params_[head_class_bias_].span();
  }
  return w;
}

template <class T>
void Transformer<T>::forward(std::span<const TokenId> ids, Cache& c, Rng* rng, AttentionTrace* trace) const {
  const std::size_t n = ids.size();
  const std::size_t d = config_.hidden_dim;
  const std::size_t f = config_.ffn_dim;
  const std::size_t nh = config_.heads;
  const std::size_t hd = config_.head_dim;
  if (n == 0) throw std::invalid_argument("empty context");
  if (n > config_.sequence_length) {
    throw std::invalid_argument("context length " + std::to_string(n) + " exceeds sequence_length " +
                                std::to_string(config_.sequence_length));
  }
  c.n = n;
  c.layers.resize(config_.layers);
  if (trace != nullptr) {
    trace->length = n;
    trace->probs.assign(config_.layers * nh, std::vector<double>(n * n, 0.0));
  }

  Vec<T> x(n * d);
  const auto& tok = params_[tok_emb_];
  const auto& pos = params_[pos_emb_];
  make_mask(c.emb_mask, n * d, config_.dropout, rng);
  for (std::size_t t = 0; t < n; ++t) {
    const auto id = static_cast<std::size_t>(ids[t]);
    if (id >= config_.vocab_size) throw std::invalid_argument("token id outside vocabulary");
    for (std::size_t k = 0; k < d; ++k) {
      x[t * d + k] = (tok.data[id * d + k] + pos.data[t * d + k]) * c.emb_mask[t * d + k];
    }
  }

  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  Vec<double> scores(n);
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const auto& li = layers_[l];
    auto& L = c.layers[l];
    L.x_in = x;
    L.ln1_out.resize(n * d);
    L.ln1_xhat.resize(n * d);
    L.ln1_rstd.resize(n);
    layer_norm_forward(x.data(), n, d, params_[li.ln1_g], params_[li.ln1_b], L.ln1_out.data(), L.ln1_xhat.data(),
                       L.ln1_rstd.data());
    L.qkv.resize(n * 3 * d);
    linear_forward(L.ln1_out.data(), n, d, params_[li.w_qkv], params_[li.b_qkv], L.qkv.data());

    L.probs.assign(nh * n * n, T(0));
    L.attn_cat.assign(n * d, T(0));
    for (std::size_t h = 0; h < nh; ++h) {
      for (std::size_t t = 0; t < n; ++t) {
        const std::span<const T> q(L.qkv.data() + t * 3 * d + h * hd, hd);
        double m = -INFINITY;
        for (std::size_t s = 0; s <= t; ++s) {
          const std::span<const T> k(L.qkv.data() + s * 3 * d + d + h * hd, hd);
          scores[s] = static_cast<double>(kernels::dot<T>(q, k)) * inv_sqrt;
          m = std::max(m, scores[s]);
        }
        double sum = 0.0;
        for (std::size_t s = 0; s <= t; ++s) {
          scores[s] = std::exp(scores[s] - m);
          sum += scores[s];
        }
        T* prow = L.probs.data() + (h * n + t) * n;
        const std::span<T> out(L.attn_cat.data() + t * d + h * hd, hd);
        for (std::size_t s = 0; s <= t; ++s) {
          const double p = scores[s] / sum;
          prow[s] = static_cast<T>(p);
          if (trace != nullptr) trace->probs[l * nh + h][t * n + s] = p;
          kernels::axpy<T>(prow[s], std::span<const T>(L.qkv.data() + s * 3 * d + 2 * d + h * hd, hd), out);
        }
      }
    }
    Vec<T> proj(n * d);
    linear_forward(L.attn_cat.data(), n, d, params_[li.w_out], params_[li.b_out], proj.data());
    make_mask(L.attn_mask, n * d, config_.dropout, rng);
    for (std::size_t i = 0; i < n * d; ++i) x[i] += proj[i] * L.attn_mask[i];
    L.x_mid = x;

    L.ln2_out.resize(n * d);
    L.ln2_xhat.resize(n * d);
    L.ln2_rstd.resize(n);
    layer_norm_forward(x.data(), n, d, params_[li.ln2_g], params_[li.ln2_b], L.ln2_out.data(), L.ln2_xhat.data(),
                       L.ln2_rstd.data());
    L.pre_act.resize(n * f);
    linear_forward(L.ln2_out.data(), n, d, params_[li.w_in], params_[li.b_in], L.pre_act.data());
    L.act.resize(n * f);
    for (std::size_t i = 0; i < n * f; ++i) L.act[i] = gelu(L.pre_act[i]);
    Vec<T> mlp(n * d);
    linear_forward(L.act.data(), n, f, params_[li.w_mlp_out], params_[li.b_mlp_out], mlp.data());
    make_mask(L.mlp_mask, n * d, config_.dropout, rng);
    for (std::size_t i = 0; i < n * d; ++i) x[i] += mlp[i] * L.mlp_mask[i];
  }
  c.x_final = x;
  c.hidden.resize(n * d);
  c.lnf_xhat.resize(n * d);
  c.lnf_rstd.resize(n);
  layer_norm_forward(x.data(), n, d, params_[lnf_g_], params_[lnf_b_], c.hidden.data(), c.lnf_xhat.data(),
                     c.lnf_rstd.data());
}

template <class T>
void Transformer<T>::backward(std::span<const TokenId> ids, Cache& c, std::span<const T> d_hidden) {
  const std::size_t n = c.n;
  const std::size_t d = config_.hidden_dim;
  const std::size_t f = config_.ffn_dim;
  const std::size_t nh = config_.heads;
  const std::size_t hd = config_.head_dim;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));

  Vec<T> dx(n * d, T(0));
  layer_norm_backward(d_hidden.data(), c.lnf_xhat.data(), c.lnf_rstd.data(), n, d, params_[lnf_g_], grads_[lnf_g_],
                      grads_[lnf_b_], dx.data());

  Vec<T> dbranch(n * d), dact(n * f), dln(n * d), dcat(n * d), dqkv(n * 3 * d);
  Vec<double> dp(n);
  for (std::size_t l = config_.layers; l-- > 0;) {
    const auto& li = layers_[l];
    auto& L = c.layers[l];

    // MLP branch: x_out = x_mid + mask * (gelu(ln2(x_mid) W_in + b_in) W_out + b_out)
    for (std::size_t i = 0; i < n * d; ++i) dbranch[i] = dx[i] * L.mlp_mask[i];
    linear_backward(L.act.data(), n, f, params_[li.w_mlp_out], dbranch.data(), dact.data(), grads_[li.w_mlp_out],
                    grads_[li.b_mlp_out]);
    for (std::size_t i = 0; i < n * f; ++i) dact[i] *= gelu_grad(L.pre_act[i]);
    linear_backward(L.ln2_out.data(), n, d, params_[li.w_in], dact.data(), dln.data(), grads_[li.w_in],
                    grads_[li.b_in]);
    layer_norm_backward(dln.data(), L.ln2_xhat.data(), L.ln2_rstd.data(), n, d, params_[li.ln2_g], grads_[li.ln2_g],
                        grads_[li.ln2_b], dx.data());

    // Attention branch: x_mid = x_in + mask * (attn(ln1(x_in)) W_o + b_o)
    for (std::size_t i = 0; i < n * d; ++i) dbranch[i] = dx[i] * L.attn_mask[i];
    linear_backward(L.attn_cat.data(), n, d, params_[li.w_out], dbranch.data(), dcat.data(), grads_[li.w_out],
                    grads_[li.b_out]);
    std::fill(dqkv.begin(), dqkv.end(), T(0));
    for (std::size_t h = 0; h < nh; ++h) {
      for (std::size_t t = 0; t < n; ++t) {
        const T* prow = L.probs.data() + (h * n + t) * n;
        const std::span<const T> dout(dcat.data() + t * d + h * hd, hd);
        double dot_pdp = 0.0;
        for (std::size_t s = 0; s <= t; ++s) {
          const std::span<const T> v(L.qkv.data() + s * 3 * d + 2 * d + h * hd, hd);
          dp[s] = kernels::dot<T>(dout, v);
          dot_pdp += prow[s] * dp[s];
          // dV_s += p_ts * dout_t
          kernels::axpy<T>(prow[s], dout, std::span<T>(dqkv.data() + s * 3 * d + 2 * d + h * hd, hd));
        }
        const std::span<const T> q(L.qkv.data() + t * 3 * d + h * hd, hd);
        const std::span<T> dq(dqkv.data() + t * 3 * d + h * hd, hd);
        for (std::size_t s = 0; s <= t; ++s) {
          const T dscore = static_cast<T>(prow[s] * (dp[s] - dot_pdp) * inv_sqrt);
          if (dscore == T(0)) continue;
          const std::span<const T> k(L.qkv.data() + s * 3 * d + d + h * hd, hd);
          kernels::axpy<T>(dscore, k, dq);
          kernels::axpy<T>(dscore, q, std::span<T>(dqkv.data() + s * 3 * d + d + h * hd, hd));
        }
      }
    }
    linear_backward(L.ln1_out.data(), n, d, params_[li.w_qkv], dqkv.data(), dln.data(), grads_[li.w_qkv],
                    grads_[li.b_qkv]);
    layer_norm_backward(dln.data(), L.ln1_xhat.data(), L.ln1_rstd.data(), n, d, params_[li.ln1_g], grads_[li.ln1_g],
                        grads_[li.ln1_b], dx.data());
  }

  auto& gtok = grads_[tok_emb_];
  auto& gpos = grads_[pos_emb_];
  for (std::size_t t = 0; t < n; ++t) {
    const auto id = static_cast<std::size_t>(ids[t]);
    for (std::size_t k = 0; k < d; ++k) {
      const T g = dx[t * d + k] * c.emb_mask[t * d + k];
      gtok.data[id * d + k] += g;
      gpos.data[t * d + k] += g;
    }
  }
}

template <class T>
double Transformer<T>::head_loss(std::span<const TokenId> window, const Cache& c, std::vector<T>* d_hidden,
                                 T scale, std::vector<Tensor<T>>* grads) const {
  const std::size_t d = config_.hidden_dim;
  const auto w = head_weights();
  head::HeadGrads<T> g;
  if (grads != nullptr) {
    auto& gr = *grads;
    g.token_emb = gr[has_head_token_ ? head_token_ : tok_emb_].view();
    if (has_class_) g.class_emb = gr[head_class_].view();
    if (has_bias_) {
      g.token_bias = gr[head_token_bias_].span();
      if (has_class_) g.class_bias = gr[head_class_bias_].span();
    }
  }
  double loss = 0.0;
  for (std::size_t t = 0; t + 1 < window.size(); ++t) {
    const std::span<const T> h(c.hidden.data() + t * d, d);
    const std::span<T> dh = d_hidden ? std::span<T>(d_hidden->data() + t * d, d) : std::span<T>{};
    if (config_.head_type == HeadType::mle) {
      loss += head::nll_mle<T>(h, window[t + 1], w.token_emb, w.token_bias, g.token_emb, g.token_bias, dh, scale);
    } else {
      loss += head::nll_f2<T>(h, window[t + 1], w, partition_, grads ? &g : nullptr, dh, scale);
    }
  }
  return loss;
}

template <class T>
std::vector<T> Transformer<T>::encode(std::span<const TokenId> context, AttentionTrace* trace) const {
  Cache c;
  forward(context, c, nullptr, trace);
  return std::move(c.hidden);
}

template <class T>
head::FactorizedDistribution Transformer<T>::next_distribution(std::span<const TokenId> context) const {
  const auto hidden = encode(context);
  const std::size_t d = config_.hidden_dim;
  const std::span<const T> h(hidden.data() + (context.size() - 1) * d, d);
  return head::forward<T>(h, head_weights(), partition_);
}

template <class T>
double Transformer<T>::window_nll(std::span<const TokenId> window) const {
  if (window.size() < 2) return 0.0;
  Cache c;
  forward(window.first(window.size() - 1), c, nullptr, nullptr);
  return head_loss(window, c, nullptr, T(1), nullptr);
}

template <class T>
double Transformer<T>::accumulate_gradients(std::span<const TokenId> window, T scale, Rng* rng) {
  if (window.size() < 2) throw std::invalid_argument("training window needs at least two tokens");
  Cache c;
  const auto inputs = window.first(window.size() - 1);
  forward(inputs, c, rng, nullptr);
  std::vector<T> d_hidden(c.n * config_.hidden_dim, T(0));
  const double loss = head_loss(window, c, &d_hidden, scale, &grads_);
  backward(inputs, c, d_hidden);
  return loss;
}

template class Transformer<float>;
template class Transformer<double>;

}  // namespace f2s::model
