#include "f2s/experiment.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "f2s/checkpoint.hpp"
#include "f2s/error.hpp"

namespace f2s::experiment {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string_view mode_name(corpus::TokenizerMode m) {
  return m == corpus::TokenizerMode::whitespace ? "whitespace" : "bpe";
}

corpus::TokenizerMode parse_mode(const std::string& s) {
  if (s == "whitespace") return corpus::TokenizerMode::whitespace;
  if (s == "bpe") return corpus::TokenizerMode::bpe;
  throw ConfigError("unknown tokenizer mode: " + s);
}

void check_known(const json& user, const json& defaults, const std::string& path) {
  if (!user.is_object()) {
    throw ConfigError("config section " + (path.empty() ? std::string("<root>") : path) + " must be an object");
  }
  for (const auto& [key, value] : user.items()) {
    const std::string full = path.empty() ? key : path + "." + key;
    if (!defaults.contains(key)) throw ConfigError("unknown config key: " + full);
    if (defaults.at(key).is_object()) check_known(value, defaults.at(key), full);
  }
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw DataError("cannot write " + p.string());
  os << text;
  if (!os) throw DataError("write failed: " + p.string());
}

void require_file(const fs::path& p, std::string_view what) {
  if (p.empty()) throw ConfigError(std::string(what) + ": no path configured");
  if (!fs::exists(p)) throw DataError(std::string(what) + " not found: " + p.string());
}

std::string file_digest(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return hex64(fnv1a(ss.str()));
}

// manifest.json: config hash, artifact version and a digest of every file
// the pipeline wrote into the directory.
void update_manifest(const ExperimentConfig& cfg, const std::vector<fs::path>& files) {
  const Layout lay{cfg.output_dir};
  const std::string hash = config_hash(cfg);
  json m;
  if (fs::exists(lay.manifest())) {
    try {
      m = json::parse(corpus::read_text_file(lay.manifest()));
    } catch (const json::exception&) {
      m = json::object();
    }
    if (m.value("config_hash", std::string()) != hash) m = json::object();
  }
  m["artifact_version"] = kArtifactVersion;
  m["config_hash"] = hash;
  m["config"] = config_to_json(cfg);
  m["config"].erase("output_dir");
  for (const auto& f : files) {
    m["files"][f.filename().string()] = {{"bytes", fs::file_size(f)}, {"fnv1a", file_digest(f)}};
  }
  write_text(lay.manifest(), m.dump(2) + "\n");
}

json stamp(const ExperimentConfig& cfg) {
  return {{"artifact_version", kArtifactVersion}, {"config_hash", config_hash(cfg)}};
}

void check_version(const json& meta, const fs::path& source) {
  if (!meta.contains("artifact_version")) return;
  const int v = meta.at("artifact_version").get<int>();
  if (v != kArtifactVersion) {
    throw ConfigError(source.string() + ": artifact version " + std::to_string(v) + " does not match expected version " +
                      std::to_string(kArtifactVersion));
  }
}

std::vector<std::string> read_documents(const fs::path& p) {
  require_file(p, "corpus file");
  return corpus::split_documents(corpus::read_text_file(p));
}

std::vector<metrics::Text> texts_of(const std::vector<decoding::GenerationRecord>& recs) {
  std::vector<metrics::Text> out;
  out.reserve(recs.size());
  for (const auto& r : recs) out.push_back(r.tokens);
  return out;
}

void write_reports(const ExperimentConfig& cfg, const std::vector<metrics::EvalReport>& reports,
                   const fs::path& json_path, const fs::path& tsv_path) {
  nlohmann::ordered_json out;
  out["artifact_version"] = kArtifactVersion;
  out["config_hash"] = config_hash(cfg);
  out["metrics_config"] = nlohmann::ordered_json::parse(json(cfg.metrics).dump());
  out["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : reports) out["rows"].push_back(metrics::report_to_json(r));
  write_text(json_path, out.dump(2) + "\n");
  std::string tsv = "# artifact_version=" + std::to_string(kArtifactVersion) + " config_hash=" + config_hash(cfg) + "\n";
  tsv += metrics::reports_to_tsv(reports);
  write_text(tsv_path, tsv);
}

}  // namespace

json default_config_json() {
  json model = model::ModelConfig{};
  model.erase("vocab_size");
  model.erase("seed");
  json tr = train::TrainConfig{};
  tr.erase("seed");
  json dec = decoding::DecodeConfig{};
  dec.erase("seed");
  dec.erase("max_new_tokens");
  const GenerationSettings g;
  const TokenizerSettings t;
  return json{
      {"seed", 0},
      {"output_dir", "out"},
      {"data", {{"train", ""}, {"valid", ""}, {"test", ""}}},
      {"tokenizer", {{"mode", mode_name(t.mode)}, {"bpe_merges", t.bpe_merges}, {"max_vocab", t.max_vocab}}},
      {"partition", {{"strategy", "mefmax"}, {"num_classes", 0}}},
      {"model", model},
      {"train", tr},
      {"decode", dec},
      {"generation",
       {{"prefix_length", g.prefix_length}, {"continuation_length", g.continuation_length}, {"max_sequences", g.max_sequences}}},
      {"metrics", json(metrics::MetricsConfig{})},
  };
}

ExperimentConfig parse_config(const json& user) {
  const json defaults = default_config_json();
  check_known(user, defaults, "");
  json j = defaults;
  j.merge_patch(user);
  try {
    ExperimentConfig c;
    c.seed = j.at("seed").get<std::uint64_t>();
    c.output_dir = j.at("output_dir").get<std::string>();
    c.train_path = j.at("data").at("train").get<std::string>();
    c.valid_path = j.at("data").at("valid").get<std::string>();
    c.test_path = j.at("data").at("test").get<std::string>();
    const auto& t = j.at("tokenizer");
    c.tokenizer.mode = parse_mode(t.at("mode").get<std::string>());
    c.tokenizer.bpe_merges = t.at("bpe_merges").get<std::size_t>();
    c.tokenizer.max_vocab = t.at("max_vocab").get<std::size_t>();
    c.partition.strategy = partition::parse_strategy(j.at("partition").at("strategy").get<std::string>());
    c.partition.num_classes = j.at("partition").at("num_classes").get<std::size_t>();
    c.model = j.at("model").get<model::ModelConfig>();
    c.train = j.at("train").get<train::TrainConfig>();
    c.decode = j.at("decode").get<decoding::DecodeConfig>();
    const auto& g = j.at("generation");
    c.generation.prefix_length = g.at("prefix_length").get<std::size_t>();
    c.generation.continuation_length = g.at("continuation_length").get<std::size_t>();
    c.generation.max_sequences = g.at("max_sequences").get<std::size_t>();
    c.metrics = j.at("metrics").get<metrics::MetricsConfig>();
    c.model.seed = c.seed;
    c.train.seed = c.seed;
    c.decode.seed = c.seed;
    c.decode.max_new_tokens = c.generation.continuation_length;
    if (c.generation.prefix_length == 0 || c.generation.continuation_length == 0) {
      throw ConfigError("generation prefix and continuation lengths must be positive");
    }
    if (c.generation.prefix_length > c.model.sequence_length) {
      throw ConfigError("generation.prefix_length " + std::to_string(c.generation.prefix_length) +
                        " exceeds model.sequence_length " + std::to_string(c.model.sequence_length));
    }
    if (c.partition.strategy != partition::Strategy::mefmax && c.partition.num_classes == 0) {
      throw ConfigError("partition.num_classes is required for strategy " +
                        std::string(partition::strategy_name(c.partition.strategy)));
    }
    model::ModelConfig probe = c.model;
    probe.vocab_size = 1;
    probe.validate();
    c.train.validate();
    c.decode.validate();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
}

json config_to_json(const ExperimentConfig& c) {
  json model = c.model;
  model.erase("vocab_size");
  model.erase("seed");
  json tr = c.train;
  tr.erase("seed");
  json dec = c.decode;
  dec.erase("seed");
  dec.erase("max_new_tokens");
  return json{
      {"seed", c.seed},
      {"output_dir", c.output_dir.string()},
      {"data", {{"train", c.train_path.string()}, {"valid", c.valid_path.string()}, {"test", c.test_path.string()}}},
      {"tokenizer",
       {{"mode", mode_name(c.tokenizer.mode)}, {"bpe_merges", c.tokenizer.bpe_merges}, {"max_vocab", c.tokenizer.max_vocab}}},
      {"partition", {{"strategy", partition::strategy_name(c.partition.strategy)}, {"num_classes", c.partition.num_classes}}},
      {"model", model},
      {"train", tr},
      {"decode", dec},
      {"generation",
       {{"prefix_length", c.generation.prefix_length},
        {"continuation_length", c.generation.continuation_length},
        {"max_sequences", c.generation.max_sequences}}},
      {"metrics", json(c.metrics)},
  };
}

void apply_override(json& j, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override must look like key.path=value: " + std::string(assignment));
  }
  const std::string key(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("bad override key: " + key);
    if (!node->is_object()) *node = json::object();
    if (dot == std::string::npos) {
      (*node)[part] = value;
      break;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

ExperimentConfig load_config(const std::optional<fs::path>& path, const std::vector<std::string>& overrides) {
  json j = json::object();
  if (path) {
    if (!fs::exists(*path)) throw ConfigError("config file not found: " + path->string());
    try {
      j = json::parse(corpus::read_text_file(*path));
    } catch (const json::exception& e) {
      throw ConfigError(path->string() + ": " + e.what());
    }
  }
  for (const auto& o : overrides) apply_override(j, o);
  return parse_config(j);
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const ExperimentConfig& cfg) {
  json j = config_to_json(cfg);
  j.erase("output_dir");
  return hex64(fnv1a(j.dump()));
}

unsigned thread_count() {
  const char* env = std::getenv("F2S_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1 || v > 1024) throw ConfigError(std::string("invalid F2S_THREADS value: ") + env);
  return static_cast<unsigned>(v);
}

Streams load_streams(const ExperimentConfig& cfg) {
  const Layout lay{cfg.output_dir};
  require_file(lay.vocab(), "vocabulary (run the vocab command first)");
  Streams s;
  s.vocab = corpus::Vocabulary::load(lay.vocab());
  corpus::MergeList merges;
  const corpus::MergeList* mp = nullptr;
  if (cfg.tokenizer.mode == corpus::TokenizerMode::bpe) {
    require_file(lay.merges(), "merge list");
    merges = corpus::load_merges(lay.merges());
    mp = &merges;
  }
  const auto encode = [&](const fs::path& p, corpus::Split split) {
    const auto docs = read_documents(p);
    return corpus::encode_documents(docs, cfg.tokenizer.mode, mp, s.vocab, split);
  };
  s.train = encode(cfg.train_path, corpus::Split::train);
  s.valid = encode(cfg.valid_path, corpus::Split::valid);
  s.test = encode(cfg.test_path, corpus::Split::test);
  return s;
}

VocabResult cmd_vocab(const ExperimentConfig& cfg) {
  const Layout lay{cfg.output_dir};
  const auto train_docs = read_documents(cfg.train_path);
  if (!cfg.valid_path.empty()) require_file(cfg.valid_path, "corpus file");
  if (!cfg.test_path.empty()) require_file(cfg.test_path, "corpus file");
  if (train_docs.empty()) throw DataError("training corpus is empty: " + cfg.train_path.string());
  fs::create_directories(lay.dir);
  std::vector<fs::path> written;
  corpus::MergeList merges;
  const corpus::MergeList* mp = nullptr;
  if (cfg.tokenizer.mode == corpus::TokenizerMode::bpe) {
    std::string joined;
    for (const auto& d : train_docs) {
      joined += d;
      joined += '\n';
    }
    merges = corpus::train_bpe(joined, cfg.tokenizer.bpe_merges);
    corpus::save_merges(lay.merges(), merges);
    written.push_back(lay.merges());
    mp = &merges;
  }
  const auto tokens = corpus::tokenize_documents(train_docs, cfg.tokenizer.mode, mp);
  const auto vocab = corpus::Vocabulary::build(tokens, cfg.tokenizer.max_vocab);
  const auto stream = corpus::encode_documents(train_docs, cfg.tokenizer.mode, mp, vocab, corpus::Split::train);
  const auto freq = corpus::build_frequency_table(stream, vocab, thread_count());
  vocab.save(lay.vocab());
  freq.save(lay.freq(), vocab);
  written.push_back(lay.vocab());
  written.push_back(lay.freq());
  update_manifest(cfg, written);
  return {vocab.size(), freq.total};
}

PartitionResult cmd_partition(const ExperimentConfig& cfg) {
  const Layout lay{cfg.output_dir};
  require_file(lay.vocab(), "vocabulary (run the vocab command first)");
  require_file(lay.freq(), "frequency table (run the vocab command first)");
  const auto vocab = corpus::Vocabulary::load(lay.vocab());
  const auto freq = corpus::FrequencyTable::load(lay.freq(), vocab);
  const auto part = partition::make_partition(freq, cfg.partition.strategy, cfg.partition.num_classes);
  partition::save_partition(lay.partition(), part, partition::strategy_name(cfg.partition.strategy), stamp(cfg).dump());
  update_manifest(cfg, {lay.partition()});
  return {part.num_classes(), part.score()};
}

std::vector<train::LossPoint> cmd_train(const ExperimentConfig& cfg) {
  const Layout lay{cfg.output_dir};
  const auto streams = load_streams(cfg);
  model::ModelConfig mc = cfg.model;
  mc.vocab_size = streams.vocab.size();
  partition::ClassPartition part = partition::ClassPartition::single_class(mc.vocab_size);
  if (mc.head_type == model::HeadType::f2) {
    require_file(lay.partition(), "partition (run the partition command first)");
    part = partition::load_partition(lay.partition());
    if (part.vocab_size() != mc.vocab_size) {
      throw ConfigError("partition covers " + std::to_string(part.vocab_size()) + " tokens but the vocabulary has " +
                        std::to_string(mc.vocab_size));
    }
  }
  model::Transformer<float> net(mc, part);
  train::TrainState state;
  const auto curve = train::train(net, state, streams.train, &streams.valid, cfg.train);
  json meta = stamp(cfg);
  checkpoint::save(lay.checkpoint(), net, state, cfg.train, meta);
  train::write_loss_curve(lay.loss(), curve);
  update_manifest(cfg, {lay.checkpoint(), lay.loss()});
  return curve;
}

std::vector<Segment> test_segments(const corpus::TokenStream& test, const GenerationSettings& g) {
  const std::size_t len = g.prefix_length + g.continuation_length;
  std::vector<Segment> out;
  for (std::size_t start = 0; start + len <= test.ids.size(); start += len) {
    if (g.max_sequences > 0 && out.size() >= g.max_sequences) break;
    const auto b = test.ids.begin() + static_cast<std::ptrdiff_t>(start);
    out.push_back({{b, b + static_cast<std::ptrdiff_t>(g.prefix_length)},
                   {b + static_cast<std::ptrdiff_t>(g.prefix_length), b + static_cast<std::ptrdiff_t>(len)}});
  }
  return out;
}

std::size_t cmd_generate(const ExperimentConfig& cfg, const std::optional<fs::path>& checkpoint_path,
                         const std::optional<fs::path>& output) {
  const Layout lay{cfg.output_dir};
  const fs::path ckpt_path = checkpoint_path.value_or(lay.checkpoint());
  const fs::path out_path = output.value_or(lay.generations());
  require_file(ckpt_path, "checkpoint (run the train command first)");
  auto ckpt = checkpoint::load(ckpt_path);
  check_version(ckpt.metadata, ckpt_path);
  const auto streams = load_streams(cfg);
  const auto& net = *ckpt.model;
  if (net.config().vocab_size != streams.vocab.size()) {
    throw ConfigError("checkpoint vocabulary size " + std::to_string(net.config().vocab_size) +
                      " does not match vocabulary size " + std::to_string(streams.vocab.size()));
  }
  const auto segments = test_segments(streams.test, cfg.generation);
  if (segments.empty()) {
    throw DataError("test stream (" + std::to_string(streams.test.ids.size()) +
                    " tokens) is shorter than one prefix+continuation segment: " + cfg.test_path.string());
  }
  std::vector<std::vector<corpus::TokenId>> prefixes;
  std::vector<decoding::GenerationRecord> reference;
  for (const auto& s : segments) {
    prefixes.push_back(s.prefix);
    reference.push_back({s.prefix, s.continuation, {}, {}});
  }
  const auto records = decoding::generate_all(net, prefixes, cfg.decode, thread_count());

  if (!out_path.parent_path().empty()) fs::create_directories(out_path.parent_path());
  fs::create_directories(lay.dir);
  json header = stamp(cfg);
  header["name"] = std::string(model::head_type_name(net.config().head_type));
  std::error_code ec;
  const fs::path rel = fs::relative(ckpt_path, out_path.parent_path().empty() ? fs::path(".") : out_path.parent_path(), ec);
  header["checkpoint"] = ec || rel.empty() ? ckpt_path.string() : rel.string();
  header["decode"] = cfg.decode;
  decoding::save_generations(out_path, records, &header);

  json ref_header = stamp(cfg);
  ref_header["name"] = "reference";
  decoding::save_generations(lay.reference(), reference, &ref_header);
  std::vector<fs::path> written{lay.reference()};
  if (fs::equivalent(out_path.parent_path().empty() ? fs::path(".") : out_path.parent_path(), lay.dir, ec)) {
    written.push_back(out_path);
  }
  update_manifest(cfg, written);
  return records.size();
}

std::vector<metrics::EvalReport> cmd_evaluate(const ExperimentConfig& cfg, const std::vector<fs::path>& files) {
  const Layout lay{cfg.output_dir};
  if (files.empty()) throw ConfigError("evaluate needs at least one generation file");
  require_file(lay.vocab(), "vocabulary (run the vocab command first)");
  require_file(lay.freq(), "frequency table (run the vocab command first)");
  const auto vocab = corpus::Vocabulary::load(lay.vocab());
  const auto freq = corpus::FrequencyTable::load(lay.freq(), vocab);

  std::vector<metrics::Text> ref;
  std::optional<corpus::TokenStream> test;
  const auto test_stream = [&]() -> const corpus::TokenStream& {
    if (!test) test = load_streams(cfg).test;
    return *test;
  };
  if (fs::exists(lay.reference())) {
    json h;
    ref = texts_of(decoding::load_generations(lay.reference(), &h));
    check_version(h, lay.reference());
  } else {
    for (const auto& s : test_segments(test_stream(), cfg.generation)) ref.push_back(s.continuation);
  }
  if (ref.empty()) throw DataError("no reference continuations available");

  std::map<std::string, double> ppl_cache;
  std::vector<metrics::EvalReport> reports;
  for (const auto& f : files) {
    require_file(f, "generation file");
    json h;
    const auto recs = decoding::load_generations(f, &h);
    check_version(h, f);
    if (recs.empty()) throw DataError("no generations in " + f.string());
    const std::string name = h.value("name", f.stem().string());
    auto rep = metrics::evaluate(name, texts_of(recs), ref, freq, cfg.metrics);
    if (h.contains("checkpoint")) {
      fs::path ck = h.at("checkpoint").get<std::string>();
      if (ck.is_relative()) ck = f.parent_path() / ck;
      if (fs::exists(ck)) {
        const std::string key = fs::weakly_canonical(ck).string();
        auto it = ppl_cache.find(key);
        if (it == ppl_cache.end()) {
          auto c = checkpoint::load(ck);
          check_version(c.metadata, ck);
          it = ppl_cache.emplace(key, train::perplexity(*c.model, test_stream())).first;
        }
        rep.ppl = it->second;
      }
    }
    reports.push_back(std::move(rep));
  }
  fs::create_directories(lay.dir);
  write_reports(cfg, reports, lay.report_json(), lay.report_tsv());
  update_manifest(cfg, {lay.report_json(), lay.report_tsv()});
  return reports;
}

std::vector<metrics::EvalReport> run_pipeline(const ExperimentConfig& cfg) {
  const Layout lay{cfg.output_dir};
  cmd_vocab(cfg);
  cmd_partition(cfg);
  cmd_train(cfg);
  cmd_generate(cfg);
  return cmd_evaluate(cfg, {lay.generations(), lay.reference()});
}

std::vector<metrics::EvalReport> sweep(const json& base, const std::string& key, const std::vector<std::string>& values) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  const ExperimentConfig base_cfg = parse_config(base);
  const bool reuse_model = key.rfind("decode.", 0) == 0 || key.rfind("metrics.", 0) == 0;
  const fs::path root = base_cfg.output_dir / "sweep";
  const Layout shared{root / "model"};
  if (reuse_model) {
    json j = base;
    apply_override(j, "output_dir=\"" + shared.dir.generic_string() + "\"");
    const auto cfg = parse_config(j);
    cmd_vocab(cfg);
    cmd_partition(cfg);
    cmd_train(cfg);
  }
  std::vector<metrics::EvalReport> rows;
  for (const auto& v : values) {
    json j = base;
    apply_override(j, key + "=" + v);
    const fs::path dir = root / (key + "=" + v);
    j["output_dir"] = dir.generic_string();
    const auto cfg = parse_config(j);
    std::vector<metrics::EvalReport> reports;
    if (reuse_model) {
      const Layout lay{dir};
      fs::create_directories(dir);
      for (const auto& [src, dst] : std::vector<std::pair<fs::path, fs::path>>{{shared.vocab(), lay.vocab()},
                                                                               {shared.freq(), lay.freq()},
                                                                               {shared.merges(), lay.merges()},
                                                                               {shared.partition(), lay.partition()},
                                                                               {shared.checkpoint(), lay.checkpoint()}}) {
        if (fs::exists(src)) fs::copy_file(src, dst, fs::copy_options::overwrite_existing);
      }
      cmd_generate(cfg);
      reports = cmd_evaluate(cfg, {lay.generations(), lay.reference()});
    } else {
      reports = run_pipeline(cfg);
    }
    auto row = reports.front();
    row.name = key + "=" + v;
    rows.push_back(row);
    std::cerr << "sweep " << row.name << ": kld=" << row.kld << " msj2=" << row.msj[1] << " uniq=" << row.uniq << "\n";
  }
  fs::create_directories(base_cfg.output_dir);
  write_reports(base_cfg, rows, base_cfg.output_dir / "sweep.json", base_cfg.output_dir / "sweep.tsv");
  return rows;
}

}  // namespace f2s::experiment
