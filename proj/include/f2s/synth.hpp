#pragma once

// Deterministic synthetic Zipfian corpora for desk-scale experiments.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "f2s/rng.hpp"
#include "json.hpp"

namespace f2s::synth {

struct SynthConfig {
  std::size_t vocab_size = 1000;
  double exponent = 1.0;
  // With this probability a token is followed by its partner (the token of
  // adjacent rank), which gives the stream some learnable structure.
  double partner_prob = 0.2;
  std::size_t min_doc = 50;
  std::size_t max_doc = 200;
  std::size_t train_tokens = 200000;
  std::size_t valid_tokens = 10000;
  std::size_t test_tokens = 20000;
  std::size_t words_per_line = 16;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);

// Rank r (0-based) has probability proportional to (r + 1)^-exponent.
class ZipfSampler {
 public:
  ZipfSampler(std::size_t n, double exponent);
  std::size_t operator()(Rng& rng) const;
  double probability(std::size_t rank) const;
  std::size_t size() const { return cdf_.size(); }

 private:
  std::vector<double> cdf_;
};

// "w0001" for rank 0, zero padded to four digits.
std::string token_name(std::size_t rank);

// Documents of ranks, drawn until at least num_tokens ranks are produced.
std::vector<std::vector<std::size_t>> generate_documents(const SynthConfig& cfg, std::size_t num_tokens,
                                                         std::uint64_t stream);

// Blank-line separated documents, words_per_line tokens per line.
std::string render(const std::vector<std::vector<std::size_t>>& docs, std::size_t words_per_line);

struct SynthPaths {
  std::filesystem::path train, valid, test;
};

// Writes train.txt, valid.txt and test.txt into dir.
SynthPaths write_corpus(const SynthConfig& cfg, const std::filesystem::path& dir);

}  // namespace f2s::synth
