#pragma once

// Next-token selection from a factorized distribution.
//
// Decoupled mode commits to one class from p1 first and then picks a token
// from p2 of that class only; every token outside the chosen class has
// probability zero. Coupled mode applies the strategy to the full posterior.
// Top-k keeps the k most probable candidates (ties: lower index first),
// renormalizes, and samples; in decoupled mode the same k is used for both
// stages, clipped to the number of classes and to the class size.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "f2s/head.hpp"
#include "f2s/rng.hpp"
#include "f2s/seqmodel.hpp"
#include "json.hpp"

namespace f2s::decoding {

using corpus::TokenId;
using head::FactorizedDistribution;
using partition::ClassPartition;

enum class Strategy { greedy, topk };
enum class Mode { decoupled, coupled };

struct DecodeConfig {
  Strategy strategy = Strategy::topk;
  std::size_t k = 10;
  Mode mode = Mode::decoupled;
  std::size_t max_new_tokens = 100;
  bool stop_at_eot = false;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const DecodeConfig& c);
void from_json(const nlohmann::json& j, DecodeConfig& c);

struct Candidate {
  std::size_t index = 0;
  double prob = 0.0;
};

// The min(k, n) most probable entries, renormalized to sum to one, ordered
// by decreasing probability with ties broken by lower index.
std::vector<Candidate> top_k(std::span<const double> probs, std::size_t k);

// Argmax with ties broken by the smaller key (key defaults to the index).
std::size_t argmax(std::span<const double> probs, std::span<const TokenId> keys = {});

// Picks one index under the strategy. u is a uniform draw in [0, 1).
std::size_t select(std::span<const double> probs, Strategy strategy, std::size_t k, double u,
                   std::span<const TokenId> keys = {});

struct DecoupledChoice {
  std::size_t class_index = 0;
  TokenId token = 0;
};

// Randomness: two uniforms from rng, one per stage.
DecoupledChoice decode_step_decoupled(const FactorizedDistribution& dist, const ClassPartition& partition,
                                      const DecodeConfig& cfg, Rng& rng);

// Distribution actually sampled from in decoupled mode once class_index is
// fixed: p2 on the class, zero elsewhere (indexed by token id).
std::vector<double> decoupled_token_distribution(const FactorizedDistribution& dist, const ClassPartition& partition,
                                                 std::size_t class_index);

TokenId decode_step_coupled(const FactorizedDistribution& dist, const DecodeConfig& cfg, Rng& rng);

struct GenerationRecord {
  std::vector<TokenId> prefix;
  std::vector<TokenId> tokens;
  std::vector<std::size_t> classes;   // class of each emitted token
  std::vector<double> logprobs;       // log p(token | context) under the full posterior
};

// Autoregressive continuation of prefix. The context fed to the model is the
// last sequence_length tokens. Each step draws from its own rng stream keyed
// on (seed, sequence_index, step). Throws std::invalid_argument for an empty
// prefix or one longer than sequence_length.
template <class T>
GenerationRecord generate(const model::Transformer<T>& model, std::span<const TokenId> prefix,
                          const DecodeConfig& cfg, std::uint64_t sequence_index = 0);

// One generation per prefix, spread over `threads` workers; the result does
// not depend on the thread count.
std::vector<GenerationRecord> generate_all(const model::Transformer<float>& model,
                                           std::span<const std::vector<TokenId>> prefixes, const DecodeConfig& cfg,
                                           unsigned threads = 1);

// JSON lines: {"prefix": [...], "tokens": [...], "classes": [...],
// "logprobs": [...]}. `header`, when non-null, is written as a first line
// {"meta": header}.
void save_generations(const std::filesystem::path& path, std::span<const GenerationRecord> records,
                      const nlohmann::json* header = nullptr);
std::vector<GenerationRecord> load_generations(const std::filesystem::path& path, nlohmann::json* header = nullptr);

}  // namespace f2s::decoding
