#include <algorithm>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "f2s/corpus.hpp"
#include "f2s/error.hpp"

namespace f2s::corpus {
namespace {

using Symbols = std::vector<std::string>;

std::string pair_key(std::string_view left, std::string_view right) {
  // The separator byte cannot occur inside a UTF-8 encoded symbol.
  std::string key;
  key.reserve(left.size() + right.size() + 1);
  key.append(left);
  key.push_back('\xff');
  key.append(right);
  return key;
}

// Merges every non-overlapping occurrence of (left, right), scanning left to
// right.
void merge_pair(Symbols& symbols, std::string_view left, std::string_view right) {
  Symbols out;
  out.reserve(symbols.size());
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    if (i + 1 < symbols.size() && symbols[i] == left && symbols[i + 1] == right) {
      out.push_back(symbols[i] + symbols[i + 1]);
      ++i;
    } else {
      out.push_back(std::move(symbols[i]));
    }
  }
  symbols = std::move(out);
}

std::vector<std::string_view> split_words(std::string_view text) {
  std::vector<std::string_view> words;
  std::size_t i = 0;
  const auto is_space = [](char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
  };
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) words.push_back(text.substr(start, i - start));
  }
  return words;
}

}  // namespace

std::vector<std::string> utf8_chars(std::string_view text) {
  std::vector<std::string> out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const auto lead = static_cast<unsigned char>(text[i]);
    std::size_t len = 0;
    if (lead < 0x80) len = 1;
    else if ((lead >> 5) == 0x6) len = 2;
    else if ((lead >> 4) == 0xE) len = 3;
    else if ((lead >> 3) == 0x1E) len = 4;
    else throw DataError("invalid UTF-8 lead byte at offset " + std::to_string(i));
    if (i + len > text.size()) throw DataError("truncated UTF-8 sequence at offset " + std::to_string(i));
    for (std::size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(text[i + k]) >> 6) != 0x2) {
        throw DataError("invalid UTF-8 continuation byte at offset " + std::to_string(i + k));
      }
    }
    out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

MergeList train_bpe(std::string_view corpus, std::size_t num_merges) {
  std::map<std::string, std::uint64_t> word_counts;
  for (auto w : split_words(corpus)) ++word_counts[std::string(w)];
  if (word_counts.empty()) throw DataError("cannot train BPE on an empty corpus");

  std::vector<std::pair<Symbols, std::uint64_t>> words;
  words.reserve(word_counts.size());
  for (const auto& [w, c] : word_counts) words.emplace_back(utf8_chars(w), c);

  MergeList merges;
  while (merges.size() < num_merges) {
    std::map<std::pair<std::string, std::string>, std::uint64_t> pairs;
    for (const auto& [symbols, count] : words) {
      for (std::size_t i = 0; i + 1 < symbols.size(); ++i) pairs[{symbols[i], symbols[i + 1]}] += count;
    }
    // std::map iterates in lexicographic order, so the first maximum wins ties.
    const std::pair<std::string, std::string>* best = nullptr;
    std::uint64_t best_count = 0;
    for (const auto& [pair, count] : pairs) {
      if (count > best_count) {
        best = &pair;
        best_count = count;
      }
    }
    if (best == nullptr || best_count < 2) break;
    Merge merge{best->first, best->second};
    for (auto& [symbols, count] : words) merge_pair(symbols, merge.left, merge.right);
    merges.push_back(std::move(merge));
  }
  return merges;
}

Tokenizer::Tokenizer(TokenizerMode mode, const MergeList* merges) : mode_(mode) {
  if (mode_ == TokenizerMode::bpe) {
    if (merges == nullptr) throw ConfigError("bpe tokenizer requires a merge list");
    for (std::size_t i = 0; i < merges->size(); ++i) {
      rank_.emplace(pair_key((*merges)[i].left, (*merges)[i].right), i);
    }
  }
}

const std::vector<std::string>& Tokenizer::word_pieces(std::string_view word) const {
  if (auto it = cache_.find(std::string(word)); it != cache_.end()) return it->second;
  Symbols symbols = utf8_chars(word);
  while (symbols.size() > 1) {
    std::size_t best_rank = std::numeric_limits<std::size_t>::max();
    std::size_t best_at = 0;
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      auto it = rank_.find(pair_key(symbols[i], symbols[i + 1]));
      if (it != rank_.end() && it->second < best_rank) {
        best_rank = it->second;
        best_at = i;
      }
    }
    if (best_rank == std::numeric_limits<std::size_t>::max()) break;
    const std::string left = symbols[best_at];
    const std::string right = symbols[best_at + 1];
    merge_pair(symbols, left, right);
  }
  return cache_.emplace(std::string(word), std::move(symbols)).first->second;
}

std::vector<std::string> Tokenizer::tokenize(std::string_view text) const {
  std::vector<std::string> out;
  const auto words = split_words(text);
  if (mode_ == TokenizerMode::whitespace) {
    utf8_chars(text);  // validation only
    out.reserve(words.size());
    for (auto w : words) out.emplace_back(w);
    return out;
  }
  bool first = true;
  for (auto w : words) {
    const auto& pieces = word_pieces(w);
    for (std::size_t i = 0; i < pieces.size(); ++i) {
      if (i == 0 && !first) out.push_back(std::string(kWordMarker) + pieces[i]);
      else out.push_back(pieces[i]);
    }
    first = false;
  }
  return out;
}

std::vector<std::string> apply_merges(std::string_view word, const MergeList& merges) {
  return Tokenizer(TokenizerMode::bpe, &merges).tokenize(word);
}

std::vector<std::string> tokenize(std::string_view text, TokenizerMode mode, const MergeList* merges) {
  return Tokenizer(mode, merges).tokenize(text);
}

std::string detokenize(std::span<const std::string> tokens, TokenizerMode mode) {
  std::string out;
  if (mode == TokenizerMode::whitespace) {
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (i > 0) out.push_back(' ');
      out += tokens[i];
    }
    return out;
  }
  for (const auto& t : tokens) {
    if (std::string_view(t).starts_with(kWordMarker)) {
      out.push_back(' ');
      out.append(t, kWordMarker.size());
    } else {
      out += t;
    }
  }
  return out;
}

std::string normalize(std::string_view text) {
  std::string out;
  for (auto w : split_words(text)) {
    if (!out.empty()) out.push_back(' ');
    out.append(w);
  }
  return out;
}

void save_merges(const std::filesystem::path& path, const MergeList& merges) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write merge list: " + path.string());
  for (const auto& m : merges) out << m.left << ' ' << m.right << '\n';
}

MergeList load_merges(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open merge list: " + path.string());
  MergeList merges;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto sp = line.find(' ');
    if (sp == std::string::npos || sp == 0 || sp + 1 >= line.size() ||
        line.find(' ', sp + 1) != std::string::npos) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected two symbols");
    }
    merges.push_back({line.substr(0, sp), line.substr(sp + 1)});
  }
  return merges;
}

}  // namespace f2s::corpus
