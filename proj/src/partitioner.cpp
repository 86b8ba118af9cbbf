#include "f2s/partitioner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "f2s/error.hpp"
#include "json.hpp"

namespace f2s::partition {
namespace {

using u128 = unsigned __int128;

constexpr double kTieTolerance = 1e-12;

void check_boundaries(std::span<const std::size_t> boundaries, std::size_t vocab) {
  if (boundaries.empty()) throw std::invalid_argument("partition needs at least one class");
  std::size_t prev = 0;
  for (std::size_t b : boundaries) {
    if (b <= prev) throw std::invalid_argument("empty class: boundaries must be strictly increasing from 0");
    prev = b;
  }
  if (prev != vocab) {
    throw std::invalid_argument("last boundary " + std::to_string(prev) + " does not equal vocabulary size " +
                                std::to_string(vocab));
  }
}

PartitionScore score_sorted(std::span<const std::uint64_t> sorted_counts, std::span<const std::size_t> boundaries) {
  check_boundaries(boundaries, sorted_counts.size());
  std::vector<double> class_masses;
  class_masses.reserve(boundaries.size());
  double within_sum = 0.0;
  std::size_t begin = 0;
  std::vector<double> members;
  for (std::size_t end : boundaries) {
    members.assign(sorted_counts.begin() + static_cast<std::ptrdiff_t>(begin),
                   sorted_counts.begin() + static_cast<std::ptrdiff_t>(end));
    std::uint64_t mass = 0;
    for (std::size_t i = begin; i < end; ++i) mass += sorted_counts[i];
    class_masses.push_back(static_cast<double>(mass));
    within_sum += efficiency(members);
    begin = end;
  }
  PartitionScore s;
  s.class_efficiency = efficiency(class_masses);
  s.mean_within_efficiency = within_sum / static_cast<double>(boundaries.size());
  s.total = s.class_efficiency + s.mean_within_efficiency;
  return s;
}

std::vector<std::uint64_t> sorted_counts(const FrequencyTable& floored, std::span<const TokenId> order) {
  std::vector<std::uint64_t> out(order.size());
  for (std::size_t r = 0; r < order.size(); ++r) out[r] = floored.counts[static_cast<std::size_t>(order[r])];
  return out;
}

}  // namespace

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::mefmax: return "mefmax";
    case Strategy::fixed_eq_token: return "fixed_eq_token";
    case Strategy::fixed_eq_freq: return "fixed_eq_freq";
  }
  return "?";
}

Strategy parse_strategy(std::string_view name) {
  if (name == "mefmax") return Strategy::mefmax;
  if (name == "fixed_eq_token") return Strategy::fixed_eq_token;
  if (name == "fixed_eq_freq") return Strategy::fixed_eq_freq;
  throw ConfigError("unknown partition strategy: " + std::string(name));
}

ClassPartition::ClassPartition(std::vector<TokenId> sorted_order, std::vector<std::size_t> boundaries)
    : sorted_order_(std::move(sorted_order)), boundaries_(std::move(boundaries)) {
  index();
}

ClassPartition::ClassPartition(std::vector<TokenId> sorted_order, std::vector<std::size_t> boundaries,
                               const FrequencyTable& freq, PartitionScore score)
    : sorted_order_(std::move(sorted_order)), boundaries_(std::move(boundaries)), score_(score) {
  index();
  if (freq.size() != sorted_order_.size()) throw std::invalid_argument("frequency table size mismatch");
  class_mass_.assign(num_classes(), 0.0);
  for (std::size_t c = 0; c < num_classes(); ++c) {
    std::uint64_t mass = 0;
    for (std::size_t r = class_begin(c); r < class_end(c); ++r) {
      const auto count = freq.counts[static_cast<std::size_t>(sorted_order_[r])];
      if (count == 0) throw std::invalid_argument("class masses need strictly positive counts");
      mass += count;
    }
    class_mass_[c] = static_cast<double>(mass) / static_cast<double>(freq.total);
  }
}

ClassPartition ClassPartition::single_class(std::size_t vocab_size) {
  std::vector<TokenId> order(vocab_size);
  std::iota(order.begin(), order.end(), 0);
  ClassPartition p(std::move(order), {vocab_size});
  p.class_mass_ = {1.0};
  return p;
}

ClassPartition ClassPartition::with_stored(ClassPartition layout, std::vector<double> class_mass,
                                           PartitionScore score) {
  layout.class_mass_ = std::move(class_mass);
  layout.score_ = score;
  return layout;
}

void ClassPartition::index() {
  const std::size_t v = sorted_order_.size();
  check_boundaries(boundaries_, v);
  class_of_.assign(v, 0);
  local_index_.assign(v, 0);
  rank_of_.assign(v, v);
  for (std::size_t r = 0; r < v; ++r) {
    const auto t = sorted_order_[r];
    if (t < 0 || static_cast<std::size_t>(t) >= v || rank_of_[static_cast<std::size_t>(t)] != v) {
      throw std::invalid_argument("sorted_order is not a permutation of the vocabulary");
    }
    rank_of_[static_cast<std::size_t>(t)] = r;
  }
  for (std::size_t c = 0; c < boundaries_.size(); ++c) {
    for (std::size_t r = class_begin(c); r < class_end(c); ++r) {
      const auto t = static_cast<std::size_t>(sorted_order_[r]);
      class_of_[t] = c;
      local_index_[t] = r - class_begin(c);
    }
  }
}

double efficiency(std::span<const double> masses) {
  if (masses.empty()) throw std::invalid_argument("efficiency of an empty set");
  long double total = 0.0L;
  for (double m : masses) {
    if (!(m >= 0.0) || !std::isfinite(m)) throw std::invalid_argument("efficiency needs finite non-negative masses");
    total += m;
  }
  if (!(total > 0.0L)) throw std::invalid_argument("efficiency needs at least one positive mass");
  if (masses.size() == 1) return 1.0;
  // H = log S - (1/S) sum m log m, which is exact for equal masses.
  long double weighted = 0.0L;
  for (double m : masses) {
    if (m > 0.0) weighted += static_cast<long double>(m) * std::log(static_cast<long double>(m));
  }
  const long double entropy = std::log(total) - weighted / total;
  const long double e = entropy / std::log(static_cast<long double>(masses.size()));
  return static_cast<double>(std::clamp(e, 0.0L, 1.0L));
}

std::vector<TokenId> frequency_order(const FrequencyTable& freq) {
  std::vector<TokenId> order(freq.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](TokenId a, TokenId b) {
    return freq.counts[static_cast<std::size_t>(a)] > freq.counts[static_cast<std::size_t>(b)];
  });
  return order;
}

std::size_t max_class_count(const FrequencyTable& freq) {
  const FrequencyTable f = freq.with_floor_one();
  const auto max_count = *std::max_element(f.counts.begin(), f.counts.end());
  return static_cast<std::size_t>(f.total / max_count);
}

PartitionScore score_partition(const FrequencyTable& freq, std::span<const std::size_t> boundaries) {
  const FrequencyTable f = freq.with_floor_one();
  const auto order = frequency_order(f);
  return score_sorted(sorted_counts(f, order), boundaries);
}

std::vector<std::size_t> equal_mass_boundaries(const FrequencyTable& freq, std::size_t k) {
  const FrequencyTable f = freq.with_floor_one();
  if (k == 0) throw std::invalid_argument("class count must be positive");
  const auto order = frequency_order(f);
  const auto counts = sorted_counts(f, order);
  const std::size_t v = counts.size();

  std::vector<std::size_t> boundaries;
  u128 cum = 0;
  std::size_t step = 1;  // next target is step * total / k
  std::size_t idx = 0;
  while (step <= k && idx < v) {
    cum += counts[idx++];
    if (cum * k >= static_cast<u128>(step) * f.total) {
      ++step;
      boundaries.push_back(idx);
    }
  }
  if (boundaries.empty() || boundaries.back() != v) boundaries.push_back(v);
  return boundaries;
}

std::vector<Candidate> mefmax_candidates(const FrequencyTable& freq) {
  const FrequencyTable f = freq.with_floor_one();
  const auto order = frequency_order(f);
  const auto counts = sorted_counts(f, order);
  const std::size_t kmax = max_class_count(f);
  std::vector<Candidate> out;
  out.reserve(kmax);
  for (std::size_t k = 1; k <= kmax; ++k) {
    Candidate c;
    c.k = k;
    c.boundaries = equal_mass_boundaries(f, k);
    c.score = score_sorted(counts, c.boundaries);
    out.push_back(std::move(c));
  }
  return out;
}

std::size_t select_candidate(std::span<const Candidate> candidates) {
  if (candidates.empty()) throw std::invalid_argument("no candidates to select from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    if (candidates[i].score.total > candidates[best].score.total + kTieTolerance) best = i;
  }
  return best;
}

ClassPartition mefmax(const FrequencyTable& freq) {
  const FrequencyTable f = freq.with_floor_one();
  auto candidates = mefmax_candidates(f);
  auto& win = candidates[select_candidate(candidates)];
  return ClassPartition(frequency_order(f), std::move(win.boundaries), f, win.score);
}

ClassPartition partition_fixed_eq_token(const FrequencyTable& freq, std::size_t k) {
  const std::size_t v = freq.size();
  if (k < 1 || k > v) {
    throw std::invalid_argument("fixed_eq_token class count " + std::to_string(k) + " outside [1, " +
                                std::to_string(v) + "]");
  }
  const FrequencyTable f = freq.with_floor_one();
  std::vector<std::size_t> boundaries;
  std::size_t end = 0;
  for (std::size_t c = 0; c < k; ++c) {
    end += v / k + (c < v % k ? 1 : 0);
    boundaries.push_back(end);
  }
  const auto score = score_partition(f, boundaries);
  return ClassPartition(frequency_order(f), std::move(boundaries), f, score);
}

ClassPartition partition_fixed_eq_freq(const FrequencyTable& freq, std::size_t k) {
  const FrequencyTable f = freq.with_floor_one();
  const std::size_t kmax = max_class_count(f);
  if (k < 1 || k > kmax) {
    throw std::invalid_argument("fixed_eq_freq class count " + std::to_string(k) + " outside [1, " +
                                std::to_string(kmax) + "]");
  }
  auto boundaries = equal_mass_boundaries(f, k);
  const auto score = score_partition(f, boundaries);
  return ClassPartition(frequency_order(f), std::move(boundaries), f, score);
}

ClassPartition make_partition(const FrequencyTable& freq, Strategy strategy, std::size_t k) {
  switch (strategy) {
    case Strategy::mefmax: return mefmax(freq);
    case Strategy::fixed_eq_token: return partition_fixed_eq_token(freq, k);
    case Strategy::fixed_eq_freq: return partition_fixed_eq_freq(freq, k);
  }
  throw ConfigError("unknown partition strategy");
}

std::string partition_to_json(const ClassPartition& p, std::string_view strategy, std::string_view extra) {
  nlohmann::ordered_json j;
  j["format"] = "f2s.partition";
  j["version"] = kPartitionFormatVersion;
  j["strategy"] = strategy;
  j["num_classes"] = p.num_classes();
  j["sorted_order"] = p.sorted_order();
  j["boundaries"] = p.boundaries();
  j["class_mass"] = p.class_mass();
  j["score"] = {{"class_efficiency", p.score().class_efficiency},
                {"mean_within_efficiency", p.score().mean_within_efficiency},
                {"total", p.score().total}};
  if (!extra.empty()) {
    const auto parsed = nlohmann::ordered_json::parse(extra);
    for (auto it = parsed.begin(); it != parsed.end(); ++it) j[it.key()] = it.value();
  }
  return j.dump(1) + "\n";
}

ClassPartition partition_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed partition file: ") + e.what());
  }
  if (j.value("format", "") != "f2s.partition") throw DataError("not a partition file");
  const int version = j.value("version", 0);
  if (version != kPartitionFormatVersion) {
    throw ConfigError("partition file version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kPartitionFormatVersion) + ")");
  }
  try {
    ClassPartition p(j.at("sorted_order").get<std::vector<TokenId>>(),
                     j.at("boundaries").get<std::vector<std::size_t>>());
    PartitionScore s;
    s.class_efficiency = j.at("score").at("class_efficiency").get<double>();
    s.mean_within_efficiency = j.at("score").at("mean_within_efficiency").get<double>();
    s.total = j.at("score").at("total").get<double>();
    auto masses = j.at("class_mass").get<std::vector<double>>();
    if (masses.size() != p.num_classes()) throw DataError("class_mass length mismatch");
    return ClassPartition::with_stored(std::move(p), std::move(masses), s);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed partition file: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("invalid partition: ") + e.what());
  }
}

void save_partition(const std::filesystem::path& path, const ClassPartition& p, std::string_view strategy,
                    std::string_view extra) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write partition file: " + path.string());
  out << partition_to_json(p, strategy, extra);
}

ClassPartition load_partition(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open partition file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return partition_from_json(ss.str());
}

}  // namespace f2s::partition
