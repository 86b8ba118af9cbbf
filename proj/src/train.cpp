#include "f2s/train.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "f2s/error.hpp"
#include "f2s/kernels.hpp"

namespace f2s::train {

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("betas must be in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (eval_interval == 0) throw ConfigError("eval_interval must be positive");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"batch_size", c.batch_size},       {"learning_rate", c.learning_rate},
                     {"beta1", c.beta1},                 {"beta2", c.beta2},
                     {"epsilon", c.epsilon},             {"clip_norm", c.clip_norm},
                     {"weight_decay", c.weight_decay},   {"steps", c.steps},
                     {"eval_interval", c.eval_interval}, {"eval_tokens", c.eval_tokens},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.batch_size = j.value("batch_size", d.batch_size);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.beta1 = j.value("beta1", d.beta1);
  c.beta2 = j.value("beta2", d.beta2);
  c.epsilon = j.value("epsilon", d.epsilon);
  c.clip_norm = j.value("clip_norm", d.clip_norm);
  c.weight_decay = j.value("weight_decay", d.weight_decay);
  c.steps = j.value("steps", d.steps);
  c.eval_interval = j.value("eval_interval", d.eval_interval);
  c.eval_tokens = j.value("eval_tokens", d.eval_tokens);
  c.seed = j.value("seed", d.seed);
}

template <class T>
void AdamState<T>::reset(const std::vector<Tensor<T>>& params) {
  m.clear();
  v.clear();
  for (const auto& p : params) {
    m.emplace_back(p.data.size(), T(0));
    v.emplace_back(p.data.size(), T(0));
  }
  step = 0;
}

template <class T>
void adam_step(std::vector<Tensor<T>>& params, const std::vector<Tensor<T>>& grads, AdamState<T>& state,
               const TrainConfig& cfg) {
  if (state.m.size() != params.size()) state.reset(params);
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].data;
    const auto& g = grads[i].data;
    auto& m = state.m[i];
    auto& v = state.v[i];
    const bool decay = params[i].shape.size() == 2 && cfg.weight_decay > 0.0;
    const T shrink = static_cast<T>(1.0 - cfg.learning_rate * cfg.weight_decay);
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = b1 * m[k] + (T(1) - b1) * g[k];
      v[k] = b2 * v[k] + (T(1) - b2) * g[k] * g[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      if (decay) p[k] *= shrink;
      p[k] -= static_cast<T>(cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon));
    }
  }
}

template <class T>
double clip_gradients(std::vector<Tensor<T>>& grads, double clip_norm) {
  double sq = 0.0;
  for (const auto& g : grads) sq += static_cast<double>(kernels::sum_squares<T>(g.span()));
  const double norm = std::sqrt(sq);
  if (norm > clip_norm) {
    const T s = static_cast<T>(clip_norm / norm);
    for (auto& g : grads) {
      for (auto& x : g.data) x *= s;
    }
  }
  return norm;
}

template <class T>
double mean_nll(const Transformer<T>& model, std::span<const corpus::TokenId> ids, std::size_t max_tokens) {
  const std::size_t s = model.config().sequence_length;
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t start = 0; start + 1 < ids.size(); start += s) {
    std::size_t len = std::min(s + 1, ids.size() - start);
    if (max_tokens > 0) len = std::min(len, max_tokens - count + 1);
    total += model.window_nll(ids.subspan(start, len));
    count += len - 1;
    if (max_tokens > 0 && count >= max_tokens) break;
  }
  if (count == 0) throw DataError("need at least two tokens to score");
  return total / static_cast<double>(count);
}

template <class T>
double perplexity(const Transformer<T>& model, const corpus::TokenStream& stream) {
  if (stream.ids.size() < 2) throw DataError("perplexity needs a stream of at least two tokens");
  return std::exp(mean_nll(model, std::span<const corpus::TokenId>(stream.ids)));
}

std::vector<LossPoint> train(Transformer<float>& model, TrainState& state, const corpus::TokenStream& train_stream,
                             const corpus::TokenStream* valid_stream, const TrainConfig& cfg,
                             const std::function<void(const LossPoint&)>& on_point) {
  cfg.validate();
  const auto& ids = train_stream.ids;
  if (ids.size() < 2) throw DataError("training stream needs at least two tokens");
  const std::size_t window = std::min(model.config().sequence_length + 1, ids.size());
  const std::size_t num_starts = ids.size() - window + 1;
  if (state.adam.m.size() != model.params().size()) state.adam.reset(model.params());

  Rng rng(cfg.seed, Rng::stream_id(0x7A1, model.config().seed));
  rng.set_counter(state.rng_counter);

  std::vector<LossPoint> curve;
  const std::span<const corpus::TokenId> all(ids);
  for (std::size_t i = 0; i < cfg.steps; ++i) {
    model.zero_grads();
    std::vector<std::size_t> offsets(cfg.batch_size);
    for (auto& o : offsets) o = static_cast<std::size_t>(rng.below(num_starts));
    const float scale = 1.0f / static_cast<float>(cfg.batch_size * (window - 1));
    double loss = 0.0;
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      const double l = model.accumulate_gradients(all.subspan(offsets[b], window), scale, &rng);
      if (!std::isfinite(l)) {
        throw NumericError("non-finite loss at step " + std::to_string(state.step + 1) + ", batch window offset " +
                           std::to_string(offsets[b]));
      }
      loss += l;
    }
    loss /= static_cast<double>(cfg.batch_size * (window - 1));
    clip_gradients(model.grads(), cfg.clip_norm);
    adam_step(model.params(), model.grads(), state.adam, cfg);
    ++state.step;

    LossPoint point{static_cast<std::size_t>(state.step), loss};
    const bool last = i + 1 == cfg.steps;
    if (valid_stream != nullptr && valid_stream->ids.size() >= 2 && (state.step % cfg.eval_interval == 0 || last)) {
      point.valid_loss = mean_nll(model, std::span<const corpus::TokenId>(valid_stream->ids), cfg.eval_tokens);
      if (!std::isfinite(point.valid_loss)) {
        throw NumericError("non-finite validation loss at step " + std::to_string(state.step));
      }
    }
    curve.push_back(point);
    if (on_point) on_point(point);
  }
  state.rng_counter = rng.counter();
  return curve;
}

void write_loss_curve(const std::filesystem::path& path, std::span<const LossPoint> points) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write loss curve: " + path.string());
  out << "step,train_loss,valid_loss\n";
  char buf[96];
  for (const auto& p : points) {
    if (std::isnan(p.valid_loss)) {
      std::snprintf(buf, sizeof buf, "%zu,%.9g,\n", p.step, p.train_loss);
    } else {
      std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g\n", p.step, p.train_loss, p.valid_loss);
    }
    out << buf;
  }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step<float>(std::vector<Tensor<float>>&, const std::vector<Tensor<float>>&, AdamState<float>&,
                               const TrainConfig&);
template void adam_step<double>(std::vector<Tensor<double>>&, const std::vector<Tensor<double>>&,
                                AdamState<double>&, const TrainConfig&);
template double clip_gradients<float>(std::vector<Tensor<float>>&, double);
template double clip_gradients<double>(std::vector<Tensor<double>>&, double);
template double mean_nll<float>(const Transformer<float>&, std::span<const corpus::TokenId>, std::size_t);
template double mean_nll<double>(const Transformer<double>&, std::span<const corpus::TokenId>, std::size_t);
template double perplexity<float>(const Transformer<float>&, const corpus::TokenStream&);
template double perplexity<double>(const Transformer<double>&, const corpus::TokenStream&);

}  // namespace f2s::train
