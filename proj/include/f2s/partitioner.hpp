#pragma once

// Frequency-class construction over a frequency-sorted vocabulary.
//
// Tokens are ranked by decreasing training count (ties by ascending id) and
// classes are contiguous runs of that ranking. MefMax picks the class count
// whose equal-mass split maximizes
//
//   efficiency(class masses) + mean_c efficiency(frequencies inside c)
//
// where efficiency is entropy divided by log of the support size.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "f2s/corpus.hpp"

namespace f2s::partition {

using corpus::FrequencyTable;
using corpus::TokenId;

struct PartitionScore {
  double class_efficiency = 0.0;
  double mean_within_efficiency = 0.0;
  double total = 0.0;
};

enum class Strategy { mefmax, fixed_eq_token, fixed_eq_freq };
std::string_view strategy_name(Strategy s);
Strategy parse_strategy(std::string_view name);

class ClassPartition {
 public:
  ClassPartition() = default;

  // Validates that sorted_order is a permutation of [0, V) and boundaries
  // are strictly increasing with the last equal to V. class_mass is computed
  // from freq, which must already have strictly positive counts.
  ClassPartition(std::vector<TokenId> sorted_order, std::vector<std::size_t> boundaries,
                 const FrequencyTable& freq, PartitionScore score = {});

  // Layout only, without masses (used when loading a model checkpoint).
  ClassPartition(std::vector<TokenId> sorted_order, std::vector<std::size_t> boundaries);

  // Attaches previously computed masses and score to a layout.
  static ClassPartition with_stored(ClassPartition layout, std::vector<double> class_mass,
                                    PartitionScore score);

  // One class holding the whole vocabulary in id order.
  static ClassPartition single_class(std::size_t vocab_size);

  std::size_t vocab_size() const { return sorted_order_.size(); }
  std::size_t num_classes() const { return boundaries_.size(); }
  std::size_t class_begin(std::size_t c) const { return c == 0 ? 0 : boundaries_[c - 1]; }
  std::size_t class_end(std::size_t c) const { return boundaries_[c]; }
  std::size_t class_size(std::size_t c) const { return class_end(c) - class_begin(c); }

  const std::vector<TokenId>& sorted_order() const { return sorted_order_; }
  const std::vector<std::size_t>& boundaries() const { return boundaries_; }
  const std::vector<double>& class_mass() const { return class_mass_; }
  const PartitionScore& score() const { return score_; }

  std::size_t class_of(TokenId t) const { return class_of_[static_cast<std::size_t>(t)]; }
  std::size_t local_index(TokenId t) const { return local_index_[static_cast<std::size_t>(t)]; }
  std::size_t rank_of(TokenId t) const { return rank_of_[static_cast<std::size_t>(t)]; }
  TokenId token_at(std::size_t rank) const { return sorted_order_[rank]; }

  friend bool operator==(const ClassPartition& a, const ClassPartition& b) {
    return a.sorted_order_ == b.sorted_order_ && a.boundaries_ == b.boundaries_;
  }

 private:
  void index();

  std::vector<TokenId> sorted_order_;
  std::vector<std::size_t> boundaries_;
  std::vector<std::size_t> class_of_;
  std::vector<std::size_t> local_index_;
  std::vector<std::size_t> rank_of_;
  std::vector<double> class_mass_;
  PartitionScore score_;
};

// Normalized Shannon entropy of the distribution proportional to masses.
// A single element has efficiency 1. Throws std::invalid_argument when no
// mass is positive or any mass is negative or non-finite.
double efficiency(std::span<const double> masses);

// Token ids by decreasing count, ties by ascending id.
std::vector<TokenId> frequency_order(const FrequencyTable& freq);

// floor(total / max count): the largest class count for which every class
// can still reach its equal-mass target.
std::size_t max_class_count(const FrequencyTable& freq);

// Scores boundaries over the frequency-sorted vocabulary of freq. Zero
// counts are raised to one first. Throws std::invalid_argument for an empty
// class or boundaries that do not cover the vocabulary.
PartitionScore score_partition(const FrequencyTable& freq, std::span<const std::size_t> boundaries);

// Equal-mass sweep at a fixed class count K: walk the sorted vocabulary and
// close a class as soon as the cumulative count reaches the next multiple of
// total / K. The comparison is done in exact integer arithmetic.
std::vector<std::size_t> equal_mass_boundaries(const FrequencyTable& freq, std::size_t k);

struct Candidate {
  std::size_t k = 0;
  std::vector<std::size_t> boundaries;
  PartitionScore score;
};

// Every sweep candidate K = 1 .. max_class_count, in increasing K.
std::vector<Candidate> mefmax_candidates(const FrequencyTable& freq);

// Index of the winning candidate: highest total, smaller K on ties within
// 1e-12.
std::size_t select_candidate(std::span<const Candidate> candidates);

ClassPartition mefmax(const FrequencyTable& freq);
ClassPartition partition_fixed_eq_token(const FrequencyTable& freq, std::size_t k);
ClassPartition partition_fixed_eq_freq(const FrequencyTable& freq, std::size_t k);

ClassPartition make_partition(const FrequencyTable& freq, Strategy strategy, std::size_t k);

}  // namespace f2s::partition

namespace f2s::partition {

inline constexpr int kPartitionFormatVersion = 1;

// Versioned JSON document {format, version, strategy, sorted_order,
// boundaries, class_mass, score}. `extra` (a JSON object text, may be
// empty) is merged in at top level for provenance fields.
std::string partition_to_json(const ClassPartition& p, std::string_view strategy,
                              std::string_view extra = {});
ClassPartition partition_from_json(std::string_view text);

void save_partition(const std::filesystem::path& path, const ClassPartition& p,
                    std::string_view strategy, std::string_view extra = {});
ClassPartition load_partition(const std::filesystem::path& path);

}  // namespace f2s::partition
