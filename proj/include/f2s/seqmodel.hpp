#pragma once

// Decoder-only transformer (pre-LayerNorm, GPT-2 layout) that produces the
// hidden states consumed by an output head. Forward and backward passes are
// written out by hand over the kernels in f2s/kernels.hpp. The scalar type is
// a template parameter: float for training and inference, double for exact
// gradient checks.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "f2s/head.hpp"
#include "f2s/partitioner.hpp"
#include "f2s/rng.hpp"
#include "f2s/tensor.hpp"
#include "json.hpp"

namespace f2s::model {

using corpus::TokenId;
using partition::ClassPartition;

enum class HeadType { mle, f2 };
std::string_view head_type_name(HeadType t);
HeadType parse_head_type(std::string_view name);

struct ModelConfig {
  std::size_t layers = 2;
  std::size_t hidden_dim = 64;
  std::size_t ffn_dim = 256;
  std::size_t heads = 2;
  std::size_t head_dim = 32;
  double dropout = 0.1;
  std::size_t sequence_length = 128;
  std::size_t vocab_size = 0;
  HeadType head_type = HeadType::mle;
  bool head_bias = false;
  bool tie_embeddings = false;
  std::uint64_t seed = 0;

  // Throws ConfigError when hidden_dim != heads * head_dim, sequence_length
  // < 2, or any size is zero.
  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

// Per layer and head, the row-stochastic causal attention matrix (n x n,
// upper triangle zero) of the last encode call that asked for it.
struct AttentionTrace {
  std::vector<std::vector<double>> probs;  // [layer * heads + head][t * n + s]
  std::size_t length = 0;
};

template <class T>
class Transformer {
 public:
  // For head_type == mle the partition is ignored and replaced by a single
  // class in id order. Parameters are initialized from config.seed.
  Transformer(ModelConfig config, ClassPartition partition);

  const ModelConfig& config() const { return config_; }
  const ClassPartition& partition() const { return partition_; }

  std::vector<Tensor<T>>& params() { return params_; }
  const std::vector<Tensor<T>>& params() const { return params_; }
  std::vector<Tensor<T>>& grads() { return grads_; }
  const std::vector<Tensor<T>>& grads() const { return grads_; }
  Tensor<T>* find_param(std::string_view name);
  void zero_grads();
  std::size_t num_parameters() const;

  // Hidden states of every position (n x hidden_dim, row-major), dropout
  // disabled. Throws std::invalid_argument for an empty context or one longer
  // than sequence_length.
  std::vector<T> encode(std::span<const TokenId> context, AttentionTrace* trace = nullptr) const;

  // Output distribution for the token following the context.
  head::FactorizedDistribution next_distribution(std::span<const TokenId> context) const;

  // Sum over t of -log p(window[t+1] | window[..t]) in eval mode.
  double window_nll(std::span<const TokenId> window) const;

  // Same loss with dropout driven by rng (no dropout when rng is null), and
  // scale * gradient added into grads().
  double accumulate_gradients(std::span<const TokenId> window, T scale, Rng* rng);

  head::HeadWeights<T> head_weights() const;

 private:
  struct Cache;
  struct LayerIndex {
    std::size_t ln1_g, ln1_b, w_qkv, b_qkv, w_out, b_out, ln2_g, ln2_b, w_in, b_in, w_mlp_out, b_mlp_out;
  };

  std::size_t add_param(std::string name, std::vector<std::size_t> shape);
  void init_params();
  void forward(std::span<const TokenId> ids, Cache& cache, Rng* rng, AttentionTrace* trace) const;
  void backward(std::span<const TokenId> ids, Cache& cache, std::span<const T> d_hidden);
  double head_loss(std::span<const TokenId> window, const Cache& cache, std::vector<T>* d_hidden, T scale,
                   std::vector<Tensor<T>>* grads) const;

  ModelConfig config_;
  ClassPartition partition_;
  std::vector<Tensor<T>> params_;
  std::vector<Tensor<T>> grads_;
  std::size_t tok_emb_ = 0, pos_emb_ = 0, lnf_g_ = 0, lnf_b_ = 0;
  std::size_t head_token_ = 0, head_class_ = 0, head_token_bias_ = 0, head_class_bias_ = 0;
  bool has_head_token_ = false, has_class_ = false, has_bias_ = false;
  std::vector<LayerIndex> layers_;
};

extern template class Transformer<float>;
extern template class Transformer<double>;

}  // namespace f2s::model
