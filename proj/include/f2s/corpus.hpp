#pragma once

// Tokenization, vocabulary construction and token streams.
//
// Whitespace normalization: runs of Unicode-agnostic ASCII whitespace collapse
// to a single space and leading/trailing whitespace is dropped. Both
// tokenizers round-trip up to that rule.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace f2s::corpus {

using TokenId = std::int32_t;

enum class TokenizerMode { whitespace, bpe };

struct Merge {
  std::string left;
  std::string right;
  friend bool operator==(const Merge&, const Merge&) = default;
};
using MergeList = std::vector<Merge>;

// In BPE output the first piece of every word after the first carries this
// prefix so detokenization can restore word boundaries.
inline constexpr std::string_view kWordMarker = "\xE2\x96\x81";  // U+2581

std::string normalize(std::string_view text);

// Reusable tokenizer; keeps a per-word cache for BPE, so one instance must
// not be shared between threads.
class Tokenizer {
 public:
  // Throws ConfigError for bpe mode without a merge list.
  Tokenizer(TokenizerMode mode, const MergeList* merges);

  std::vector<std::string> tokenize(std::string_view text) const;
  TokenizerMode mode() const { return mode_; }

 private:
  const std::vector<std::string>& word_pieces(std::string_view word) const;

  TokenizerMode mode_;
  std::unordered_map<std::string, std::size_t> rank_;
  mutable std::unordered_map<std::string, std::vector<std::string>> cache_;
};

// Throws ConfigError for bpe mode without a merge list and DataError for
// invalid UTF-8.
std::vector<std::string> tokenize(std::string_view text, TokenizerMode mode,
                                  const MergeList* merges = nullptr);

std::string detokenize(std::span<const std::string> tokens, TokenizerMode mode);

// Learns up to num_merges merges from the whitespace-separated words of
// corpus. Stops early once no pair occurs more than once. Equal counts are
// resolved in favour of the lexicographically smallest (left, right) pair.
MergeList train_bpe(std::string_view corpus, std::size_t num_merges);

// Splits a word into its pieces under the merge list (no word marker).
std::vector<std::string> apply_merges(std::string_view word, const MergeList& merges);

void save_merges(const std::filesystem::path& path, const MergeList& merges);
MergeList load_merges(const std::filesystem::path& path);

// Splits UTF-8 text into code points. Throws DataError on malformed input.
std::vector<std::string> utf8_chars(std::string_view text);

class Vocabulary {
 public:
  static constexpr TokenId kUnk = 0;
  static constexpr TokenId kEot = 1;
  static constexpr std::string_view kUnkToken = "<unk>";
  static constexpr std::string_view kEotToken = "<eot>";

  Vocabulary();
  // tokens[0] and tokens[1] must be the reserved unknown and end-of-text
  // tokens; duplicates are rejected.
  explicit Vocabulary(std::vector<std::string> tokens);

  // Reserved tokens first, then every observed token by decreasing count
  // (ties by byte order), truncated to max_size entries in total when
  // max_size > 0.
  static Vocabulary build(std::span<const std::vector<std::string>> documents,
                          std::size_t max_size = 0);

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::optional<TokenId> find(std::string_view token) const;
  // Unknown strings map to kUnk.
  TokenId id_of(std::string_view token) const;

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

struct FrequencyTable {
  std::vector<std::uint64_t> counts;
  std::uint64_t total = 0;

  std::size_t size() const { return counts.size(); }
  double relative(TokenId id) const {
    return static_cast<double>(counts[static_cast<std::size_t>(id)]) / static_cast<double>(total);
  }
  // Counts read from plain integers; validates total > 0.
  static FrequencyTable from_counts(std::vector<std::uint64_t> counts);
  // Same table with every zero count raised to one.
  FrequencyTable with_floor_one() const;

  // TSV: token<TAB>count per line, in id order.
  void save(const std::filesystem::path& path, const Vocabulary& vocab) const;
  static FrequencyTable load(const std::filesystem::path& path, const Vocabulary& vocab);
};

enum class Split { train, valid, test };
std::string_view split_name(Split split);

struct TokenStream {
  std::vector<TokenId> ids;
  Split split = Split::train;
};

// Counts every id of the stream. Sharded across `threads` workers when > 1;
// the result is identical to the sequential count. Throws DataError for an
// empty stream or an id outside the vocabulary.
FrequencyTable build_frequency_table(const TokenStream& stream, const Vocabulary& vocab,
                                     unsigned threads = 1);

// Blank-line separated blocks, each trimmed; empty blocks are dropped.
std::vector<std::string> split_documents(std::string_view text);

std::string read_text_file(const std::filesystem::path& path);

// Tokenizes every document and concatenates them, each followed by <eot>.
TokenStream encode_documents(std::span<const std::string> documents, TokenizerMode mode,
                             const MergeList* merges, const Vocabulary& vocab, Split split);

std::vector<std::vector<std::string>> tokenize_documents(std::span<const std::string> documents,
                                                         TokenizerMode mode,
                                                         const MergeList* merges);

}  // namespace f2s::corpus
