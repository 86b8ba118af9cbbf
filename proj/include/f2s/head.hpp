#pragma once

// Output heads over a hidden state h.
//
// The factorized head scores classes with p1(c | h) = softmax_c(h . u_c + a_c)
// and tokens inside a class with p2(x | c, h) = softmax over members of c of
// (h . o_x + b_x). The full posterior is p(x | h) = p1(c(x) | h) p2(x | c(x), h).
// Token embedding rows are stored in partition rank order, so each class is a
// contiguous block of rows. The plain softmax head is the single-class case
// with ranks equal to ids.
//
// Logits are computed in T; the softmax and the loss are evaluated in double.

#include <span>
#include <vector>

#include "f2s/partitioner.hpp"
#include "f2s/tensor.hpp"

namespace f2s::head {

using partition::ClassPartition;
using TokenId = corpus::TokenId;

template <class T>
struct HeadWeights {
  ConstMatrixView<T> class_emb;     // classes x d; empty for the plain softmax head
  ConstMatrixView<T> token_emb;     // V x d, row r holds token sorted_order[r]
  std::span<const T> class_bias;    // empty when biases are disabled
  std::span<const T> token_bias;    // indexed by rank, empty when disabled
};

template <class T>
struct HeadGrads {
  MatrixView<T> class_emb;
  MatrixView<T> token_emb;
  std::span<T> class_bias;
  std::span<T> token_bias;
};

struct FactorizedDistribution {
  std::vector<double> class_probs;               // p1 over classes
  std::vector<std::vector<double>> within;       // p2 per class, indexed by local index
  std::vector<double> combined;                  // p1 * p2, indexed by token id
};

// In-place numerically stable softmax (max subtraction).
void softmax_inplace(std::span<double> logits);

// Throws std::invalid_argument on dimension mismatch.
template <class T>
FactorizedDistribution forward(std::span<const T> h, const HeadWeights<T>& w, const ClassPartition& p);

// -[log p1(c_t | h) + log p2(x_t | c_t, h)]. When grads is non-null, adds
// scale * d(loss)/d(param) into grads and scale * d(loss)/dh into dh. Only the
// target class block of token rows is touched.
template <class T>
double nll_f2(std::span<const T> h, TokenId target, const HeadWeights<T>& w, const ClassPartition& p,
              HeadGrads<T>* grads = nullptr, std::span<T> dh = {}, T scale = T(1));

// Full-vocabulary softmax cross-entropy. token_emb rows are in id order.
template <class T>
double nll_mle(std::span<const T> h, TokenId target, ConstMatrixView<T> token_emb,
               std::span<const T> token_bias = {}, MatrixView<T> grad_token_emb = {},
               std::span<T> grad_token_bias = {}, std::span<T> dh = {}, T scale = T(1));

}  // namespace f2s::head
