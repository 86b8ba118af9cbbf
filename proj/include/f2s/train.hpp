#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "f2s/corpus.hpp"
#include "f2s/seqmodel.hpp"
#include "json.hpp"

namespace f2s::train {

using model::Transformer;

struct TrainConfig {
  std::size_t batch_size = 8;
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 0.25;
  double weight_decay = 0.001;
  std::size_t steps = 1000;
  std::size_t eval_interval = 100;
  // Upper bound on validation tokens scored at each evaluation (0 = all).
  std::size_t eval_tokens = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

// Adam moments with decoupled weight decay applied to matrix parameters.
template <class T>
struct AdamState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::uint64_t step = 0;

  void reset(const std::vector<Tensor<T>>& params);
};

// One update from the gradients currently held by the model.
template <class T>
void adam_step(std::vector<Tensor<T>>& params, const std::vector<Tensor<T>>& grads, AdamState<T>& state,
               const TrainConfig& cfg);

// Global L2 norm of all gradients; rescales them to clip_norm when larger.
// Returns the norm before clipping.
template <class T>
double clip_gradients(std::vector<Tensor<T>>& grads, double clip_norm);

struct LossPoint {
  std::size_t step = 0;
  double train_loss = 0.0;
  double valid_loss = std::numeric_limits<double>::quiet_NaN();
};

struct TrainState {
  AdamState<float> adam;
  std::uint64_t step = 0;
  std::uint64_t rng_counter = 0;
};

// Runs cfg.steps optimizer steps starting from state.step. Each step samples
// batch_size windows of sequence_length + 1 tokens. Throws NumericError with
// the step and window offset when the loss is not finite.
std::vector<LossPoint> train(Transformer<float>& model, TrainState& state, const corpus::TokenStream& train_stream,
                             const corpus::TokenStream* valid_stream, const TrainConfig& cfg,
                             const std::function<void(const LossPoint&)>& on_point = {});

// Mean per-token negative log-likelihood over non-overlapping windows of the
// stream (every token after the first is predicted once). With max_tokens > 0
// only the first max_tokens predictions are scored.
template <class T>
double mean_nll(const Transformer<T>& model, std::span<const corpus::TokenId> ids, std::size_t max_tokens = 0);

// exp(mean_nll). Throws DataError for streams shorter than two tokens.
template <class T>
double perplexity(const Transformer<T>& model, const corpus::TokenStream& stream);

void write_loss_curve(const std::filesystem::path& path, std::span<const LossPoint> points);

}  // namespace f2s::train
