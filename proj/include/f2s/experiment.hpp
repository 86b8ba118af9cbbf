#pragma once

// Experiment pipeline: configuration, artifact layout and the commands
// behind the f2s command-line tool.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "f2s/corpus.hpp"
#include "f2s/decoding.hpp"
#include "f2s/metrics.hpp"
#include "f2s/partitioner.hpp"
#include "f2s/seqmodel.hpp"
#include "f2s/train.hpp"
#include "json.hpp"

namespace f2s::experiment {

inline constexpr int kArtifactVersion = 1;

struct TokenizerSettings {
  corpus::TokenizerMode mode = corpus::TokenizerMode::whitespace;
  std::size_t bpe_merges = 1000;
  std::size_t max_vocab = 0;
};

struct PartitionSettings {
  partition::Strategy strategy = partition::Strategy::mefmax;
  std::size_t num_classes = 0;  // ignored by mefmax
};

struct GenerationSettings {
  std::size_t prefix_length = 50;
  std::size_t continuation_length = 100;
  std::size_t max_sequences = 0;  // 0: every full segment of the test stream
};

struct ExperimentConfig {
  std::filesystem::path train_path;
  std::filesystem::path valid_path;
  std::filesystem::path test_path;
  TokenizerSettings tokenizer;
  PartitionSettings partition;
  model::ModelConfig model;
  train::TrainConfig train;
  decoding::DecodeConfig decode;
  GenerationSettings generation;
  metrics::MetricsConfig metrics;
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 0;
};

nlohmann::json default_config_json();

// Keys absent from the defaults are rejected with ConfigError. The top-level
// seed is copied into the model, train and decode sections.
ExperimentConfig parse_config(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

// "a.b.c=value"; value is parsed as JSON and kept as a string otherwise.
void apply_override(nlohmann::json& j, std::string_view assignment);

ExperimentConfig load_config(const std::optional<std::filesystem::path>& path,
                             const std::vector<std::string>& overrides);

std::uint64_t fnv1a(std::string_view bytes);

// Hash of the canonical config without output_dir, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

// F2S_THREADS, default 1.
unsigned thread_count();

struct Layout {
  std::filesystem::path dir;
  std::filesystem::path vocab() const { return dir / "vocab.txt"; }
  std::filesystem::path freq() const { return dir / "freq.tsv"; }
  std::filesystem::path merges() const { return dir / "merges.txt"; }
  std::filesystem::path partition() const { return dir / "partition.json"; }
  std::filesystem::path checkpoint() const { return dir / "model.ckpt"; }
  std::filesystem::path loss() const { return dir / "loss.csv"; }
  std::filesystem::path generations() const { return dir / "generations.jsonl"; }
  std::filesystem::path reference() const { return dir / "reference.jsonl"; }
  std::filesystem::path report_json() const { return dir / "report.json"; }
  std::filesystem::path report_tsv() const { return dir / "report.tsv"; }
  std::filesystem::path manifest() const { return dir / "manifest.json"; }
};

struct Streams {
  corpus::Vocabulary vocab;
  corpus::TokenStream train, valid, test;
};

// Tokenizes the three corpora with the artifacts of cmd_vocab.
Streams load_streams(const ExperimentConfig& cfg);

struct VocabResult {
  std::size_t vocab_size = 0;
  std::uint64_t train_tokens = 0;
};
VocabResult cmd_vocab(const ExperimentConfig& cfg);

struct PartitionResult {
  std::size_t num_classes = 0;
  partition::PartitionScore score;
};
PartitionResult cmd_partition(const ExperimentConfig& cfg);

std::vector<train::LossPoint> cmd_train(const ExperimentConfig& cfg);

// Non-overlapping prefix+continuation segments of the test stream.
struct Segment {
  std::vector<corpus::TokenId> prefix;
  std::vector<corpus::TokenId> continuation;
};
std::vector<Segment> test_segments(const corpus::TokenStream& test, const GenerationSettings& g);

// Writes generations (default path) and reference.jsonl; returns the number
// of sequences.
std::size_t cmd_generate(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& checkpoint = {},
                         const std::optional<std::filesystem::path>& output = {});

// One report row per generation file against the reference continuations.
// A file whose header names a readable checkpoint gets a test perplexity.
std::vector<metrics::EvalReport> cmd_evaluate(const ExperimentConfig& cfg,
                                              const std::vector<std::filesystem::path>& generation_files);

// vocab, partition, train, generate and evaluate (model row + reference row).
std::vector<metrics::EvalReport> run_pipeline(const ExperimentConfig& cfg);

// Runs the pipeline once per value of key (dot path) in
// <output_dir>/sweep/<key>=<value>, writing sweep.json and sweep.tsv into
// output_dir. Decode and metrics keys reuse a single trained model.
std::vector<metrics::EvalReport> sweep(const nlohmann::json& base, const std::string& key,
                                       const std::vector<std::string>& values);

}  // namespace f2s::experiment
