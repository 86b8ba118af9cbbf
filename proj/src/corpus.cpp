#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "f2s/corpus.hpp"
#include "f2s/error.hpp"

namespace f2s::corpus {

Vocabulary::Vocabulary() : Vocabulary({std::string(kUnkToken), std::string(kEotToken)}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < 2 || tokens_[0] != kUnkToken || tokens_[1] != kEotToken) {
    throw DataError("vocabulary must start with <unk> and <eot>");
  }
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
      throw DataError("duplicate vocabulary token at line " + std::to_string(i + 1) + ": " + tokens_[i]);
    }
  }
}

Vocabulary Vocabulary::build(std::span<const std::vector<std::string>> documents, std::size_t max_size) {
  std::map<std::string, std::uint64_t> counts;
  for (const auto& doc : documents) {
    for (const auto& t : doc) ++counts[t];
  }
  counts.erase(std::string(kUnkToken));
  counts.erase(std::string(kEotToken));
  std::vector<std::pair<std::string, std::uint64_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens{std::string(kUnkToken), std::string(kEotToken)};
  for (auto& [tok, c] : ranked) {
    if (max_size > 0 && tokens.size() >= max_size) break;
    tokens.push_back(tok);
  }
  return Vocabulary(std::move(tokens));
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::id_of(std::string_view token) const { return find(token).value_or(kUnk); }

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write vocabulary: " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open vocabulary: " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) tokens.push_back(line);
  return Vocabulary(std::move(tokens));
}

FrequencyTable FrequencyTable::from_counts(std::vector<std::uint64_t> counts) {
  FrequencyTable t;
  t.counts = std::move(counts);
  for (auto c : t.counts) t.total += c;
  if (t.total == 0) throw DataError("frequency table total must be positive");
  return t;
}

FrequencyTable FrequencyTable::with_floor_one() const {
  FrequencyTable t = *this;
  t.total = 0;
  for (auto& c : t.counts) {
    c = std::max<std::uint64_t>(c, 1);
    t.total += c;
  }
  return t;
}

void FrequencyTable::save(const std::filesystem::path& path, const Vocabulary& vocab) const {
  if (vocab.size() != counts.size()) throw DataError("frequency table does not match vocabulary");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write frequency table: " + path.string());
  for (std::size_t i = 0; i < counts.size(); ++i) out << vocab.tokens()[i] << '\t' << counts[i] << '\n';
}

FrequencyTable FrequencyTable::load(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open frequency table: " + path.string());
  std::vector<std::uint64_t> counts;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected token<TAB>count");
    }
    if (lineno > vocab.size() || line.substr(0, tab) != vocab.tokens()[lineno - 1]) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": token does not match vocabulary");
    }
    try {
      counts.push_back(std::stoull(line.substr(tab + 1)));
    } catch (const std::exception&) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad count");
    }
  }
  if (counts.size() != vocab.size()) throw DataError(path.string() + ": row count does not match vocabulary");
  return from_counts(std::move(counts));
}

std::string_view split_name(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
  }
  return "?";
}

FrequencyTable build_frequency_table(const TokenStream& stream, const Vocabulary& vocab, unsigned threads) {
  if (stream.ids.empty()) throw DataError("cannot count an empty token stream");
  const std::size_t v = vocab.size();
  const auto count_range = [&](std::size_t begin, std::size_t end, std::vector<std::uint64_t>& out) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto id = stream.ids[i];
      if (id < 0 || static_cast<std::size_t>(id) >= v) {
        throw DataError("token id " + std::to_string(id) + " at offset " + std::to_string(i) +
                        " outside vocabulary");
      }
      ++out[static_cast<std::size_t>(id)];
    }
  };

  std::vector<std::uint64_t> counts(v, 0);
  const std::size_t n = stream.ids.size();
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n / 4096 + 1)));
  if (threads == 1) {
    count_range(0, n, counts);
  } else {
    std::vector<std::vector<std::uint64_t>> shards(threads, std::vector<std::uint64_t>(v, 0));
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> workers;
    for (unsigned t = 0; t < threads; ++t) {
      workers.emplace_back([&, t] {
        try {
          count_range(n * t / threads, n * (t + 1) / threads, shards[t]);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& w : workers) w.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    for (const auto& s : shards) {
      for (std::size_t i = 0; i < v; ++i) counts[i] += s[i];
    }
  }
  return FrequencyTable::from_counts(std::move(counts));
}

std::vector<std::string> split_documents(std::string_view text) {
  std::vector<std::string> docs;
  std::string current;
  std::istringstream in{std::string(text)};
  std::string line;
  const auto flush = [&] {
    const std::string norm = normalize(current);
    if (!norm.empty()) docs.push_back(current);
    current.clear();
  };
  while (std::getline(in, line)) {
    if (normalize(line).empty()) {
      flush();
    } else {
      if (!current.empty()) current.push_back('\n');
      current += line;
    }
  }
  flush();
  return docs;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> tokenize_documents(std::span<const std::string> documents,
                                                         TokenizerMode mode, const MergeList* merges) {
  Tokenizer tok(mode, merges);
  std::vector<std::vector<std::string>> out;
  out.reserve(documents.size());
  for (const auto& d : documents) out.push_back(tok.tokenize(d));
  return out;
}

TokenStream encode_documents(std::span<const std::string> documents, TokenizerMode mode,
                             const MergeList* merges, const Vocabulary& vocab, Split split) {
  TokenStream stream;
  stream.split = split;
  Tokenizer tok(mode, merges);
  for (const auto& d : documents) {
    for (const auto& t : tok.tokenize(d)) stream.ids.push_back(vocab.id_of(t));
    stream.ids.push_back(Vocabulary::kEot);
  }
  return stream;
}

}  // namespace f2s::corpus
