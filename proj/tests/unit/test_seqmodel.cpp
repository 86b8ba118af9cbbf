#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "f2s/checkpoint.hpp"
#include "f2s/error.hpp"
#include "f2s/seqmodel.hpp"
#include "f2s/train.hpp"

using namespace f2s;
using namespace f2s::model;
using partition::ClassPartition;

namespace {

ModelConfig micro(HeadType head, std::size_t vocab = 20) {
  ModelConfig c;
  c.layers = 2;
  c.hidden_dim = 16;
  c.heads = 2;
  c.head_dim = 8;
  c.ffn_dim = 32;
  c.sequence_length = 8;
  c.vocab_size = vocab;
  c.dropout = 0.0;
  c.head_type = head;
  c.head_bias = true;
  c.seed = 5;
  return c;
}

ClassPartition partition_for(std::size_t v, std::size_t k) {
  std::vector<std::uint64_t> counts(v);
  for (std::size_t i = 0; i < v; ++i) counts[i] = 1 + (i * 7919) % 37;
  return partition::partition_fixed_eq_token(corpus::FrequencyTable::from_counts(counts), k);
}

std::vector<TokenId> tokens(std::size_t n, std::size_t v, std::uint64_t seed) {
  Rng rng(seed, 0);
  std::vector<TokenId> t(n);
  for (auto& x : t) x = static_cast<TokenId>(rng.below(v));
  return t;
}

template <class T>
void scramble(Transformer<T>& m, std::uint64_t seed, double scale) {
  Rng rng(seed, 1);
  for (auto& p : m.params()) {
    const bool gain = p.name.find(".g") != std::string::npos && p.shape.size() == 1;
    for (auto& x : p.data) x = static_cast<T>((gain ? 1.0 : 0.0) + scale * rng.normal());
  }
}

}  // namespace

TEST_CASE("config validation") {
  auto c = micro(HeadType::mle);
  CHECK_NOTHROW(c.validate());
  c.hidden_dim = 15;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = micro(HeadType::mle);
  c.sequence_length = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = micro(HeadType::f2);
  c.tie_embeddings = true;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  nlohmann::json j = micro(HeadType::f2);
  const auto back = j.get<ModelConfig>();
  CHECK(back.head_type == HeadType::f2);
  CHECK(back.hidden_dim == 16);
}

TEST_CASE("encode is causal") {
  Transformer<double> m(micro(HeadType::f2), partition_for(20, 4));
  scramble(m, 1, 0.3);
  const auto ctx = tokens(8, 20, 2);
  const auto base = m.encode(ctx);
  const std::size_t d = 16;
  for (std::size_t j = 0; j < ctx.size(); ++j) {
    auto other = ctx;
    other[j] = static_cast<TokenId>((other[j] + 1) % 20);
    const auto h = m.encode(other);
    for (std::size_t t = 0; t < j; ++t) {
      for (std::size_t k = 0; k < d; ++k) REQUIRE(h[t * d + k] == base[t * d + k]);
    }
    bool changed = false;
    for (std::size_t k = 0; k < d; ++k) changed = changed || h[j * d + k] != base[j * d + k];
    CHECK(changed);
  }
}

TEST_CASE("encode is deterministic and attention rows are distributions") {
  Transformer<float> m(micro(HeadType::mle), partition_for(20, 1));
  const auto ctx = tokens(7, 20, 3);
  AttentionTrace trace;
  const auto a = m.encode(ctx, &trace);
  const auto b = m.encode(ctx);
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
  REQUIRE(trace.probs.size() == 4);
  CHECK(trace.length == 7);
  for (const auto& p : trace.probs) {
    for (std::size_t t = 0; t < 7; ++t) {
      double s = 0;
      for (std::size_t u = 0; u < 7; ++u) {
        if (u > t) CHECK(p[t * 7 + u] == 0.0);
        s += p[t * 7 + u];
      }
      CHECK(std::abs(s - 1.0) < 1e-6);
    }
  }
  Transformer<float> m2(micro(HeadType::mle), partition_for(20, 1));
  const auto c = m2.encode(ctx);
  CHECK(std::memcmp(a.data(), c.data(), a.size() * sizeof(float)) == 0);
}

TEST_CASE("encode rejects empty and overlong contexts") {
  Transformer<float> m(micro(HeadType::mle), partition_for(20, 1));
  CHECK_THROWS_AS(m.encode(std::vector<TokenId>{}), std::invalid_argument);
  CHECK_THROWS_AS(m.encode(tokens(9, 20, 1)), std::invalid_argument);
}

TEST_CASE("parameter naming and counts") {
  Transformer<float> f2(micro(HeadType::f2), partition_for(20, 4));
  CHECK(f2.find_param("head.class_emb") != nullptr);
  CHECK(f2.find_param("head.class_emb")->rows() == 4);
  CHECK(f2.find_param("h1.mlp.w_in") != nullptr);
  Transformer<float> mle(micro(HeadType::mle), partition_for(20, 4));
  CHECK(mle.find_param("head.class_emb") == nullptr);
  CHECK(mle.partition().num_classes() == 1);
  CHECK(f2.num_parameters() == mle.num_parameters() + 4 * 16 + 4);
}

TEST_CASE("end to end gradients match central differences on a micro model") {
  for (HeadType head : {HeadType::f2, HeadType::mle}) {
    Transformer<double> m(micro(head), partition_for(20, 4));
    scramble(m, 9, 0.25);
    const auto window = tokens(9, 20, 11);
    m.zero_grads();
    m.accumulate_gradients(window, 1.0, nullptr);
    const double step = 1e-5;
    double worst = 0.0;
    std::string worst_name;
    for (std::size_t i = 0; i < m.params().size(); ++i) {
      auto& p = m.params()[i];
      const auto& g = m.grads()[i];
      for (std::size_t k = 0; k < p.data.size(); ++k) {
        const double keep = p.data[k];
        p.data[k] = keep + step;
        const double up = m.window_nll(window);
        p.data[k] = keep - step;
        const double down = m.window_nll(window);
        p.data[k] = keep;
        const double fd = (up - down) / (2 * step);
        const double err = std::abs(fd - g.data[k]) / std::max({std::abs(fd), std::abs(g.data[k]), 1e-6});
        if (err > worst) {
          worst = err;
          worst_name = p.name;
        }
      }
    }
    MESSAGE(head_type_name(head) << " max relative error " << worst << " in " << worst_name);
    CHECK(worst < 1e-3);
  }
}

TEST_CASE("single class f2 model and mle model agree") {
  auto cf = micro(HeadType::f2);
  auto cm = micro(HeadType::mle);
  Transformer<double> f2(cf, ClassPartition::single_class(20));
  Transformer<double> mle(cm, ClassPartition::single_class(20));
  scramble(mle, 4, 0.2);
  for (auto& p : mle.params()) {
    auto* q = f2.find_param(p.name);
    REQUIRE(q != nullptr);
    q->data = p.data;
  }
  const auto w = tokens(9, 20, 8);
  CHECK(std::abs(f2.window_nll(w) - mle.window_nll(w)) < 1e-9);
}

TEST_CASE("checkpoint round trip is bit exact") {
  auto cfg = micro(HeadType::f2);
  Transformer<float> m(cfg, partition_for(20, 4));
  train::TrainState st;
  train::TrainConfig tc;
  tc.steps = 3;
  tc.batch_size = 2;
  corpus::TokenStream s{tokens(200, 20, 4), corpus::Split::train};
  train::train(m, st, s, nullptr, tc);

  const auto dir = std::filesystem::temp_directory_path() / "f2s_ckpt";
  std::filesystem::create_directories(dir);
  const auto path = dir / "m.ckpt";
  checkpoint::save(path, m, st, tc, {{"note", "x"}});
  auto loaded = checkpoint::load(path);
  REQUIRE(loaded.model);
  CHECK(loaded.model->partition() == m.partition());
  for (std::size_t i = 0; i < m.params().size(); ++i) {
    CHECK(loaded.model->params()[i].name == m.params()[i].name);
    CHECK(loaded.model->params()[i].data == m.params()[i].data);
    CHECK(loaded.state.adam.m[i] == st.adam.m[i]);
    CHECK(loaded.state.adam.v[i] == st.adam.v[i]);
  }
  CHECK(loaded.state.step == st.step);
  CHECK(loaded.state.adam.step == st.adam.step);
  CHECK(loaded.state.rng_counter == st.rng_counter);
  CHECK(loaded.metadata.at("note") == "x");
  const auto ctx = tokens(8, 20, 6);
  const auto a = m.encode(ctx), b = loaded.model->encode(ctx);
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
  CHECK(m.next_distribution(ctx).combined == loaded.model->next_distribution(ctx).combined);

  // same stream of training steps after reload
  train::train(m, st, s, nullptr, tc);
  train::train(*loaded.model, loaded.state, s, nullptr, tc);
  CHECK(m.params().back().data == loaded.model->params().back().data);

  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    const std::uint32_t v = 99;
    f.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  try {
    checkpoint::load(path);
    FAIL("expected a version error");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("99") != std::string::npos);
    CHECK(msg.find("1") != std::string::npos);
  }
  CHECK_THROWS_AS(checkpoint::load(dir / "missing.ckpt"), DataError);
}
