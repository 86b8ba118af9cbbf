#include "f2s/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "f2s/error.hpp"

namespace f2s::decoding {

void DecodeConfig::validate() const {
  if (k == 0) throw ConfigError("decode k must be at least 1");
}

void to_json(nlohmann::json& j, const DecodeConfig& c) {
  j = nlohmann::json{{"strategy", c.strategy == Strategy::greedy ? "greedy" : "topk"},
                     {"k", c.k},
                     {"mode", c.mode == Mode::decoupled ? "decoupled" : "coupled"},
                     {"max_new_tokens", c.max_new_tokens},
                     {"stop_at_eot", c.stop_at_eot},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, DecodeConfig& c) {
  DecodeConfig d;
  const auto strategy = j.value("strategy", std::string("topk"));
  if (strategy != "greedy" && strategy != "topk") throw ConfigError("unknown decode strategy: " + strategy);
  c.strategy = strategy == "greedy" ? Strategy::greedy : Strategy::topk;
  const auto mode = j.value("mode", std::string("decoupled"));
  if (mode != "decoupled" && mode != "coupled") throw ConfigError("unknown decode mode: " + mode);
  c.mode = mode == "decoupled" ? Mode::decoupled : Mode::coupled;
  c.k = j.value("k", d.k);
  c.max_new_tokens = j.value("max_new_tokens", d.max_new_tokens);
  c.stop_at_eot = j.value("stop_at_eot", d.stop_at_eot);
  c.seed = j.value("seed", d.seed);
}

namespace {

bool ranks_before(std::span<const double> probs, std::span<const TokenId> keys, std::size_t a, std::size_t b) {
  if (probs[a] != probs[b]) return probs[a] > probs[b];
  if (!keys.empty()) return keys[a] < keys[b];
  return a < b;
}

}  // namespace

std::size_t argmax(std::span<const double> probs, std::span<const TokenId> keys) {
  if (probs.empty()) throw std::invalid_argument("argmax of an empty distribution");
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i) {
    if (ranks_before(probs, keys, i, best)) best = i;
  }
  return best;
}

static std::vector<Candidate> top_k_keyed(std::span<const double> probs, std::size_t k,
                                          std::span<const TokenId> keys) {
  if (probs.empty()) throw std::invalid_argument("top-k of an empty distribution");
  k = std::min(std::max<std::size_t>(k, 1), probs.size());
  std::vector<std::size_t> idx(probs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) { return ranks_before(probs, keys, a, b); });
  double mass = 0.0;
  for (std::size_t i = 0; i < k; ++i) mass += probs[idx[i]];
  std::vector<Candidate> out(k);
  for (std::size_t i = 0; i < k; ++i) {
    out[i].index = idx[i];
    out[i].prob = mass > 0.0 ? probs[idx[i]] / mass : 1.0 / static_cast<double>(k);
  }
  return out;
}

std::vector<Candidate> top_k(std::span<const double> probs, std::size_t k) { return top_k_keyed(probs, k, {}); }

std::size_t select(std::span<const double> probs, Strategy strategy, std::size_t k, double u,
                   std::span<const TokenId> keys) {
  if (strategy == Strategy::greedy) return argmax(probs, keys);
  const auto cands = top_k_keyed(probs, k, keys);
  double cum = 0.0;
  for (const auto& c : cands) {
    cum += c.prob;
    if (u < cum) return c.index;
  }
  return cands.back().index;
}

DecoupledChoice decode_step_decoupled(const FactorizedDistribution& dist, const ClassPartition& partition,
                                      const DecodeConfig& cfg, Rng& rng) {
  const double u_class = rng.uniform();
  const double u_token = rng.uniform();
  DecoupledChoice choice;
  choice.class_index = select(dist.class_probs, cfg.strategy, cfg.k, u_class);
  const std::size_t begin = partition.class_begin(choice.class_index);
  const std::span<const TokenId> members(partition.sorted_order().data() + begin,
                                         partition.class_size(choice.class_index));
  const std::size_t local = select(dist.within[choice.class_index], cfg.strategy, cfg.k, u_token, members);
  choice.token = members[local];
  return choice;
}

std::vector<double> decoupled_token_distribution(const FactorizedDistribution& dist, const ClassPartition& partition,
                                                 std::size_t class_index) {
  std::vector<double> out(partition.vocab_size(), 0.0);
  const auto& within = dist.within[class_index];
  for (std::size_t i = 0; i < within.size(); ++i) {
    out[static_cast<std::size_t>(partition.token_at(partition.class_begin(class_index) + i))] = within[i];
  }
  return out;
}

TokenId decode_step_coupled(const FactorizedDistribution& dist, const DecodeConfig& cfg, Rng& rng) {
  const double u = rng.uniform();
  return static_cast<TokenId>(select(dist.combined, cfg.strategy, cfg.k, u));
}

template <class T>
GenerationRecord generate(const model::Transformer<T>& model, std::span<const TokenId> prefix, const DecodeConfig& cfg,
                          std::uint64_t sequence_index) {
  cfg.validate();
  const std::size_t s = model.config().sequence_length;
  if (prefix.empty()) throw std::invalid_argument("generation needs a non-empty prefix");
  if (prefix.size() > s) {
    throw std::invalid_argument("prefix length " + std::to_string(prefix.size()) + " exceeds sequence_length " +
                                std::to_string(s));
  }
  GenerationRecord rec;
  rec.prefix.assign(prefix.begin(), prefix.end());
  std::vector<TokenId> context(prefix.begin(), prefix.end());
  const auto& part = model.partition();
  for (std::size_t step = 0; step < cfg.max_new_tokens; ++step) {
    const std::size_t start = context.size() > s ? context.size() - s : 0;
    const auto dist = model.next_distribution(std::span<const TokenId>(context).subspan(start));
    Rng rng(cfg.seed, Rng::stream_id(sequence_index, step));
    TokenId token;
    std::size_t cls;
    if (cfg.mode == Mode::decoupled) {
      const auto choice = decode_step_decoupled(dist, part, cfg, rng);
      token = choice.token;
      cls = choice.class_index;
    } else {
      token = decode_step_coupled(dist, cfg, rng);
      cls = part.class_of(token);
    }
    rec.tokens.push_back(token);
    rec.classes.push_back(cls);
    rec.logprobs.push_back(std::log(std::max(dist.combined[static_cast<std::size_t>(token)], 1e-300)));
    context.push_back(token);
    if (cfg.stop_at_eot && token == corpus::Vocabulary::kEot) break;
  }
  return rec;
}

template GenerationRecord generate<float>(const model::Transformer<float>&, std::span<const TokenId>,
                                          const DecodeConfig&, std::uint64_t);
template GenerationRecord generate<double>(const model::Transformer<double>&, std::span<const TokenId>,
                                           const DecodeConfig&, std::uint64_t);

std::vector<GenerationRecord> generate_all(const model::Transformer<float>& model,
                                           std::span<const std::vector<TokenId>> prefixes, const DecodeConfig& cfg,
                                           unsigned threads) {
  std::vector<GenerationRecord> out(prefixes.size());
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(prefixes.size())));
  std::vector<std::exception_ptr> errors(threads);
  const auto work = [&](unsigned t) {
    try {
      for (std::size_t i = t; i < prefixes.size(); i += threads) out[i] = generate(model, prefixes[i], cfg, i);
    } catch (...) {
      errors[t] = std::current_exception();
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

void save_generations(const std::filesystem::path& path, std::span<const GenerationRecord> records,
                      const nlohmann::json* header) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write generations: " + path.string());
  if (header != nullptr) out << nlohmann::json{{"meta", *header}}.dump() << '\n';
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["prefix"] = r.prefix;
    j["tokens"] = r.tokens;
    j["classes"] = r.classes;
    j["logprobs"] = r.logprobs;
    out << j.dump() << '\n';
  }
}

std::vector<GenerationRecord> load_generations(const std::filesystem::path& path, nlohmann::json* header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open generations: " + path.string());
  std::vector<GenerationRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (j.contains("meta")) {
        if (header != nullptr) *header = j["meta"];
        continue;
      }
      GenerationRecord r;
      r.prefix = j.at("prefix").get<std::vector<TokenId>>();
      r.tokens = j.at("tokens").get<std::vector<TokenId>>();
      r.classes = j.value("classes", std::vector<std::size_t>{});
      r.logprobs = j.value("logprobs", std::vector<double>{});
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace f2s::decoding
