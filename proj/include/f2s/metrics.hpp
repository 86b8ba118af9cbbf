#pragma once

// Diversity and likelihood-related metrics over collections of token
// sequences. N-grams never cross text boundaries.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "f2s/corpus.hpp"
#include "json.hpp"

namespace f2s::metrics {

using corpus::TokenId;
using Text = std::vector<TokenId>;
using NGram = std::vector<TokenId>;

struct NGramProfile {
  std::size_t n = 1;
  std::map<NGram, std::uint64_t> counts;
  std::uint64_t total = 0;

  bool empty() const { return total == 0; }
  double relative(const NGram& g) const;
};

NGramProfile ngram_profile(std::span<const Text> texts, std::size_t n);

enum class KlDirection { gen_to_ref, ref_to_gen };

// KL(P || Q) between unigram distributions, P = gen for gen_to_ref. Both
// sides get add-one smoothing over the union of their supports, so equal
// profiles give exactly 0. Throws std::invalid_argument when either profile
// is empty.
double kl_divergence(const NGramProfile& gen, const NGramProfile& ref, KlDirection dir = KlDirection::gen_to_ref);

// sum_g min(f_gen, f_ref) / sum_g max(f_gen, f_ref) over relative n-gram
// frequencies. Throws std::invalid_argument when either side has no n-gram.
double ms_jaccard(std::span<const Text> gen, std::span<const Text> ref, std::size_t n);

// Geometric mean of ms_jaccard for n = 1..max_n.
double ms_jaccard_geometric(std::span<const Text> gen, std::span<const Text> ref, std::size_t max_n);

enum class BleuMode { cumulative, n_only };

struct BleuOptions {
  BleuMode mode = BleuMode::cumulative;
  // When > 0, zero clipped counts are replaced by this value instead of
  // forcing the score to zero.
  double smoothing_epsilon = 0.0;
};

// BLEU of hyp against several references: clipped n-gram precisions
// (uniform weights over 1..n, or only n for n_only), brevity penalty from the
// closest reference length (ties to the shorter one). Any zero precision
// gives 0 unless smoothing is enabled.
double bleu(const Text& hyp, std::span<const Text* const> refs, std::size_t n, const BleuOptions& opts = {});

// Mean over texts of BLEU against all other texts. Throws
// std::invalid_argument for fewer than two texts.
double self_bleu(std::span<const Text> texts, std::size_t n, const BleuOptions& opts = {});

// Mean over texts (with at least n tokens) of unique / total n-grams.
double distinct_n(std::span<const Text> texts, std::size_t n);

struct RepetitionOptions {
  std::size_t max_phrase = 10;
  std::size_t min_repeats = 3;
};

// True when the text ends with some phrase of length <= max_phrase repeated
// at least min_repeats times back to back.
bool ends_in_loop(const Text& text, const RepetitionOptions& opts = {});

double repetition(std::span<const Text> texts, const RepetitionOptions& opts = {});

std::size_t uniq(std::span<const Text> texts);

enum class Bucket { frequent, medium, rare, very_rare };

// Cumulative training-mass cut points, walking the frequency-sorted vocabulary.
struct BucketCuts {
  double frequent = 0.40;
  double medium = 0.75;
  double rare = 0.90;
};

// Bucket of every token id: a token falls in the first bucket whose cut
// exceeds the mass of all tokens ranked above it.
std::vector<Bucket> assign_buckets(const corpus::FrequencyTable& freq, const BucketCuts& cuts = {});

struct BucketShares {
  double frequent = 0.0;
  double medium = 0.0;
  double rare = 0.0;
  double very_rare = 0.0;
};

// Share of generated tokens in each bucket. Ids outside the table or with
// zero training count count as very_rare. Throws std::invalid_argument when
// there are no tokens.
BucketShares bucket_shares(std::span<const Text> texts, const corpus::FrequencyTable& freq,
                           const BucketCuts& cuts = {});

struct MetricsConfig {
  KlDirection kl_direction = KlDirection::gen_to_ref;
  BleuOptions bleu;
  RepetitionOptions repetition;
  BucketCuts buckets;
  std::size_t max_n = 3;
};

void to_json(nlohmann::json& j, const MetricsConfig& c);
void from_json(const nlohmann::json& j, MetricsConfig& c);

struct EvalReport {
  std::string name;
  std::optional<double> ppl;
  double kld = 0.0;
  std::array<double, 3> msj{};
  double msj_geometric = 0.0;
  std::array<double, 3> self_bleu{};
  std::array<double, 3> distinct{};
  double rep = 0.0;
  std::size_t uniq = 0;
  BucketShares buckets;
};

// All metrics of gen against the reference continuations ref; ppl is
// attached by the caller when a model is available.
EvalReport evaluate(std::string name, std::span<const Text> gen, std::span<const Text> ref,
                    const corpus::FrequencyTable& train_freq, const MetricsConfig& cfg = {});

// Reals rounded to 10 decimal places so that serialized reports are stable.
nlohmann::ordered_json report_to_json(const EvalReport& r);
std::string reports_to_tsv(std::span<const EvalReport> reports);

double round_fixed(double x);

}  // namespace f2s::metrics
