// f2s: frequency-factorized softmax language model experiments.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "f2s/error.hpp"
#include "f2s/experiment.hpp"
#include "f2s/kernels.hpp"
#include "f2s/synth.hpp"

namespace fs = std::filesystem;
namespace ex = f2s::experiment;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", config, "experiment config (JSON)");
    app->add_option("-s,--set", overrides, "override a config key, e.g. --set train.steps=200")->take_all();
    app->add_option("-o,--out", out, "output directory (same as --set output_dir=...)");
  }

  std::vector<std::string> all_overrides() const {
    auto o = overrides;
    if (!out.empty()) o.push_back("output_dir=\"" + out + "\"");
    return o;
  }

  ex::ExperimentConfig load() const {
    std::optional<fs::path> p;
    if (!config.empty()) p = config;
    return ex::load_config(p, all_overrides());
  }

  nlohmann::json raw() const {
    nlohmann::json j = nlohmann::json::object();
    if (!config.empty()) {
      if (!fs::exists(config)) throw f2s::ConfigError("config file not found: " + config);
      try {
        j = nlohmann::json::parse(f2s::corpus::read_text_file(config));
      } catch (const nlohmann::json::exception& e) {
        throw f2s::ConfigError(config + ": " + e.what());
      }
    }
    for (const auto& o : all_overrides()) ex::apply_override(j, o);
    return j;
  }
};

void print_reports(const std::vector<f2s::metrics::EvalReport>& reports) {
  std::cout << f2s::metrics::reports_to_tsv(reports);
}

int run(int argc, char** argv) {
  CLI::App app{"f2s: frequency-factorized softmax language models"};
  app.require_subcommand(1);
  std::string simd;
  app.add_option("--simd", simd, "kernel set: scalar or avx2 (default: best available)");

  Common c_vocab, c_part, c_train, c_gen, c_eval, c_run, c_sweep, c_show;
  auto* vocab = app.add_subcommand("vocab", "build vocabulary and training frequency table");
  c_vocab.attach(vocab);
  auto* part = app.add_subcommand("partition", "partition the vocabulary into frequency classes");
  c_part.attach(part);
  auto* tr = app.add_subcommand("train", "train a model");
  c_train.attach(tr);
  auto* gen = app.add_subcommand("generate", "continue test-set prefixes");
  c_gen.attach(gen);
  std::string gen_ckpt, gen_output;
  gen->add_option("--checkpoint", gen_ckpt, "checkpoint (default: <out>/model.ckpt)");
  gen->add_option("--output", gen_output, "generation file (default: <out>/generations.jsonl)");
  auto* eval = app.add_subcommand("evaluate", "score generation files against the test reference");
  c_eval.attach(eval);
  std::vector<std::string> eval_files;
  eval->add_option("files", eval_files, "generation files (default: <out>/generations.jsonl and reference.jsonl)");
  auto* runc = app.add_subcommand("run", "vocab, partition, train, generate and evaluate");
  c_run.attach(runc);
  auto* sw = app.add_subcommand("sweep", "run the pipeline for several values of one config key");
  c_sweep.attach(sw);
  std::string sweep_key;
  std::vector<std::string> sweep_values;
  sw->add_option("--key", sweep_key, "dot path, e.g. partition.num_classes or decode.k")->required();
  sw->add_option("--values", sweep_values, "values to try")->required()->take_all();
  auto* show = app.add_subcommand("config", "print the effective configuration");
  c_show.attach(show);

  auto* syn = app.add_subcommand("synth", "write a synthetic Zipfian corpus");
  std::string syn_out;
  std::vector<std::string> syn_set;
  syn->add_option("-o,--out", syn_out, "output directory")->required();
  syn->add_option("-s,--set", syn_set, "generator setting, e.g. --set train_tokens=20000")->take_all();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  if (!simd.empty()) {
    if (simd == "scalar") f2s::kernels::set_active_isa(f2s::kernels::Isa::scalar);
    else if (simd == "avx2") f2s::kernels::set_active_isa(f2s::kernels::Isa::avx2);
    else throw f2s::ConfigError("unknown --simd value: " + simd);
  }

  if (*vocab) {
    const auto r = ex::cmd_vocab(c_vocab.load());
    std::cout << "vocab_size=" << r.vocab_size << " train_tokens=" << r.train_tokens << "\n";
  } else if (*part) {
    const auto cfg = c_part.load();
    const auto r = ex::cmd_partition(cfg);
    std::printf("strategy=%s K=%zu score=%.12f class_efficiency=%.12f mean_within_efficiency=%.12f\n",
                std::string(f2s::partition::strategy_name(cfg.partition.strategy)).c_str(), r.num_classes,
                r.score.total, r.score.class_efficiency, r.score.mean_within_efficiency);
  } else if (*tr) {
    const auto curve = ex::cmd_train(c_train.load());
    if (!curve.empty()) {
      std::printf("steps=%zu final_train_loss=%.6f", curve.back().step, curve.back().train_loss);
      if (curve.back().valid_loss == curve.back().valid_loss) std::printf(" valid_loss=%.6f", curve.back().valid_loss);
      std::printf("\n");
    }
  } else if (*gen) {
    std::optional<fs::path> ck, out;
    if (!gen_ckpt.empty()) ck = gen_ckpt;
    if (!gen_output.empty()) out = gen_output;
    const auto n = ex::cmd_generate(c_gen.load(), ck, out);
    std::cout << "sequences=" << n << "\n";
  } else if (*eval) {
    const auto cfg = c_eval.load();
    std::vector<fs::path> files(eval_files.begin(), eval_files.end());
    if (files.empty()) {
      const ex::Layout lay{cfg.output_dir};
      files = {lay.generations(), lay.reference()};
    }
    print_reports(ex::cmd_evaluate(cfg, files));
  } else if (*runc) {
    print_reports(ex::run_pipeline(c_run.load()));
  } else if (*sw) {
    print_reports(ex::sweep(c_sweep.raw(), sweep_key, sweep_values));
  } else if (*show) {
    std::cout << ex::config_to_json(c_show.load()).dump(2) << "\n";
  } else if (*syn) {
    nlohmann::json j = nlohmann::json(f2s::synth::SynthConfig{});
    for (const auto& s : syn_set) ex::apply_override(j, s);
    f2s::synth::SynthConfig sc;
    try {
      sc = j.get<f2s::synth::SynthConfig>();
    } catch (const nlohmann::json::exception& e) {
      throw f2s::ConfigError(std::string("invalid synth setting: ") + e.what());
    }
    const auto paths = f2s::synth::write_corpus(sc, syn_out);
    std::cout << paths.train.string() << "\n" << paths.valid.string() << "\n" << paths.test.string() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const f2s::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const f2s::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const f2s::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
