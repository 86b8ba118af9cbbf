#include "f2s/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "f2s/error.hpp"

namespace f2s::synth {

void SynthConfig::validate() const {
  if (vocab_size < 2) throw ConfigError("synth.vocab_size must be at least 2");
  if (!(exponent > 0.0)) throw ConfigError("synth.exponent must be positive");
  if (partner_prob < 0.0 || partner_prob >= 1.0) throw ConfigError("synth.partner_prob must be in [0,1)");
  if (min_doc == 0 || max_doc < min_doc) throw ConfigError("synth document length range is invalid");
  if (train_tokens == 0 || valid_tokens == 0 || test_tokens == 0) throw ConfigError("synth token counts must be positive");
  if (words_per_line == 0) throw ConfigError("synth.words_per_line must be positive");
}

void to_json(nlohmann::json& j, const SynthConfig& c) {
  j = nlohmann::json{{"vocab_size", c.vocab_size},     {"exponent", c.exponent},         {"partner_prob", c.partner_prob},
                     {"min_doc", c.min_doc},           {"max_doc", c.max_doc},           {"train_tokens", c.train_tokens},
                     {"valid_tokens", c.valid_tokens}, {"test_tokens", c.test_tokens},   {"words_per_line", c.words_per_line},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SynthConfig& c) {
  SynthConfig d;
  c.vocab_size = j.value("vocab_size", d.vocab_size);
  c.exponent = j.value("exponent", d.exponent);
  c.partner_prob = j.value("partner_prob", d.partner_prob);
  c.min_doc = j.value("min_doc", d.min_doc);
  c.max_doc = j.value("max_doc", d.max_doc);
  c.train_tokens = j.value("train_tokens", d.train_tokens);
  c.valid_tokens = j.value("valid_tokens", d.valid_tokens);
  c.test_tokens = j.value("test_tokens", d.test_tokens);
  c.words_per_line = j.value("words_per_line", d.words_per_line);
  c.seed = j.value("seed", d.seed);
}

ZipfSampler::ZipfSampler(std::size_t n, double exponent) : cdf_(n) {
  if (n == 0) throw std::invalid_argument("ZipfSampler: empty support");
  double acc = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    acc += std::pow(static_cast<double>(r + 1), -exponent);
    cdf_[r] = acc;
  }
  for (auto& c : cdf_) c /= acc;
  cdf_.back() = 1.0;
}

std::size_t ZipfSampler::operator()(Rng& rng) const {
  const double u = rng.uniform();
  auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  return std::min(static_cast<std::size_t>(it - cdf_.begin()), cdf_.size() - 1);
}

double ZipfSampler::probability(std::size_t rank) const {
  return rank == 0 ? cdf_[0] : cdf_[rank] - cdf_[rank - 1];
}

std::string token_name(std::size_t rank) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "w%04zu", rank + 1);
  return buf;
}

std::vector<std::vector<std::size_t>> generate_documents(const SynthConfig& cfg, std::size_t num_tokens,
                                                         std::uint64_t stream) {
  cfg.validate();
  const ZipfSampler zipf(cfg.vocab_size, cfg.exponent);
  Rng rng(cfg.seed, Rng::stream_id(0x5E7, stream));
  std::vector<std::vector<std::size_t>> docs;
  std::size_t produced = 0;
  while (produced < num_tokens) {
    const std::size_t len = cfg.min_doc + static_cast<std::size_t>(rng.below(cfg.max_doc - cfg.min_doc + 1));
    std::vector<std::size_t> doc;
    doc.reserve(len);
    for (std::size_t i = 0; i < len; ++i) {
      if (!doc.empty() && rng.uniform() < cfg.partner_prob) {
        const std::size_t prev = doc.back();
        std::size_t partner = prev ^ 1U;
        if (partner >= cfg.vocab_size) partner = prev;
        doc.push_back(partner);
      } else {
        doc.push_back(zipf(rng));
      }
    }
    produced += doc.size();
    docs.push_back(std::move(doc));
  }
  return docs;
}

std::string render(const std::vector<std::vector<std::size_t>>& docs, std::size_t words_per_line) {
  std::string out;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    if (d > 0) out += "\n";
    const auto& doc = docs[d];
    for (std::size_t i = 0; i < doc.size(); ++i) {
      out += token_name(doc[i]);
      out += ((i + 1) % words_per_line == 0 || i + 1 == doc.size()) ? '\n' : ' ';
    }
  }
  return out;
}

namespace {

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw DataError("cannot write " + p.string());
  os << text;
  if (!os) throw DataError("write failed: " + p.string());
}

}  // namespace

SynthPaths write_corpus(const SynthConfig& cfg, const std::filesystem::path& dir) {
  cfg.validate();
  std::filesystem::create_directories(dir);
  SynthPaths p{dir / "train.txt", dir / "valid.txt", dir / "test.txt"};
  write_file(p.train, render(generate_documents(cfg, cfg.train_tokens, 0), cfg.words_per_line));
  write_file(p.valid, render(generate_documents(cfg, cfg.valid_tokens, 1), cfg.words_per_line));
  write_file(p.test, render(generate_documents(cfg, cfg.test_tokens, 2), cfg.words_per_line));
  return p;
}

}  // namespace f2s::synth
