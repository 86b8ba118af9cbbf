#include "f2s/head.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "f2s/kernels.hpp"

namespace f2s::head {
namespace {

// Logits of rows [begin, end) of emb against h, plus optional bias, in double.
template <class T>
void block_logits(std::span<const T> h, ConstMatrixView<T> emb, std::span<const T> bias, std::size_t begin,
                  std::size_t end, std::vector<T>& scratch, std::vector<double>& out) {
  const std::size_t n = end - begin;
  scratch.resize(n);
  kernels::gemv<T>(std::span<const T>(emb.data + begin * emb.cols, n * emb.cols), n, emb.cols, h, scratch);
  out.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = static_cast<double>(scratch[i]) + (bias.empty() ? 0.0 : static_cast<double>(bias[begin + i]));
  }
}

double log_sum_exp(std::span<const double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  return m + std::log(s);
}

// Cross-entropy of one softmax block against local target index, with
// gradient accumulation into rows [begin, end) of grad_emb and into dh.
template <class T>
double block_xent(std::span<const T> h, ConstMatrixView<T> emb, std::span<const T> bias, std::size_t begin,
                  std::size_t end, std::size_t local_target, MatrixView<T> grad_emb, std::span<T> grad_bias,
                  std::span<T> dh, T scale) {
  std::vector<T> scratch;
  std::vector<double> z;
  block_logits(h, emb, bias, begin, end, scratch, z);
  const double lse = log_sum_exp(z);
  const double loss = lse - z[local_target];
  const bool want_param_grad = !grad_emb.empty();
  const bool want_h_grad = !dh.empty();
  if (!want_param_grad && !want_h_grad) return loss;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double g = std::exp(z[i] - lse) - (i == local_target ? 1.0 : 0.0);
    const T gs = static_cast<T>(g) * scale;
    const std::size_t r = begin + i;
    if (want_param_grad) {
      kernels::axpy<T>(gs, h, grad_emb.row(r));
      if (!grad_bias.empty()) grad_bias[r] += gs;
    }
    if (want_h_grad) kernels::axpy<T>(gs, emb.row(r), dh);
  }
  return loss;
}

template <class T>
void check_dims(std::span<const T> h, const HeadWeights<T>& w, const ClassPartition& p) {
  if (w.token_emb.cols != h.size()) throw std::invalid_argument("hidden size does not match token embeddings");
  if (w.token_emb.rows != p.vocab_size()) throw std::invalid_argument("token embeddings do not match partition");
  if (!w.token_bias.empty() && w.token_bias.size() != p.vocab_size()) {
    throw std::invalid_argument("token bias size mismatch");
  }
  if (w.class_emb.empty()) {
    if (p.num_classes() != 1) throw std::invalid_argument("multi-class partition needs class embeddings");
  } else {
    if (w.class_emb.cols != h.size()) throw std::invalid_argument("hidden size does not match class embeddings");
    if (w.class_emb.rows != p.num_classes()) throw std::invalid_argument("class embeddings do not match partition");
    if (!w.class_bias.empty() && w.class_bias.size() != p.num_classes()) {
      throw std::invalid_argument("class bias size mismatch");
    }
  }
}

}  // namespace

void softmax_inplace(std::span<double> logits) {
  if (logits.empty()) return;
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double& v : logits) {
    v = std::exp(v - m);
    s += v;
  }
  for (double& v : logits) v /= s;
}

template <class T>
FactorizedDistribution forward(std::span<const T> h, const HeadWeights<T>& w, const ClassPartition& p) {
  check_dims(h, w, p);
  FactorizedDistribution out;
  std::vector<T> scratch;
  if (w.class_emb.empty()) {
    out.class_probs = {1.0};
  } else {
    block_logits(h, w.class_emb, w.class_bias, 0, p.num_classes(), scratch, out.class_probs);
    softmax_inplace(out.class_probs);
  }
  out.within.resize(p.num_classes());
  out.combined.assign(p.vocab_size(), 0.0);
  for (std::size_t c = 0; c < p.num_classes(); ++c) {
    auto& probs = out.within[c];
    block_logits(h, w.token_emb, w.token_bias, p.class_begin(c), p.class_end(c), scratch, probs);
    softmax_inplace(probs);
    for (std::size_t i = 0; i < probs.size(); ++i) {
      out.combined[static_cast<std::size_t>(p.token_at(p.class_begin(c) + i))] = out.class_probs[c] * probs[i];
    }
  }
  return out;
}

template <class T>
double nll_f2(std::span<const T> h, TokenId target, const HeadWeights<T>& w, const ClassPartition& p,
              HeadGrads<T>* grads, std::span<T> dh, T scale) {
  check_dims(h, w, p);
  if (target < 0 || static_cast<std::size_t>(target) >= p.vocab_size()) {
    throw std::invalid_argument("target token outside vocabulary");
  }
  const std::size_t c = p.class_of(target);
  double loss = 0.0;
  if (!w.class_emb.empty()) {
    loss += block_xent<T>(h, w.class_emb, w.class_bias, 0, p.num_classes(), c,
                          grads ? grads->class_emb : MatrixView<T>{}, grads ? grads->class_bias : std::span<T>{},
                          dh, scale);
  }
  loss += block_xent<T>(h, w.token_emb, w.token_bias, p.class_begin(c), p.class_end(c), p.local_index(target),
                        grads ? grads->token_emb : MatrixView<T>{}, grads ? grads->token_bias : std::span<T>{}, dh,
                        scale);
  return loss;
}

template <class T>
double nll_mle(std::span<const T> h, TokenId target, ConstMatrixView<T> token_emb, std::span<const T> token_bias,
               MatrixView<T> grad_token_emb, std::span<T> grad_token_bias, std::span<T> dh, T scale) {
  if (token_emb.cols != h.size()) throw std::invalid_argument("hidden size does not match output embeddings");
  if (target < 0 || static_cast<std::size_t>(target) >= token_emb.rows) {
    throw std::invalid_argument("target token outside vocabulary");
  }
  return block_xent<T>(h, token_emb, token_bias, 0, token_emb.rows, static_cast<std::size_t>(target),
                       grad_token_emb, grad_token_bias, dh, scale);
}

#define F2S_INSTANTIATE_HEAD(T)                                                                               \
  template FactorizedDistribution forward<T>(std::span<const T>, const HeadWeights<T>&, const ClassPartition&); \
  template double nll_f2<T>(std::span<const T>, TokenId, const HeadWeights<T>&, const ClassPartition&,         \
                            HeadGrads<T>*, std::span<T>, T);                                                   \
  template double nll_mle<T>(std::span<const T>, TokenId, ConstMatrixView<T>, std::span<const T>,              \
                             MatrixView<T>, std::span<T>, std::span<T>, T);

F2S_INSTANTIATE_HEAD(float)
F2S_INSTANTIATE_HEAD(double)

#undef F2S_INSTANTIATE_HEAD

}  // namespace f2s::head
