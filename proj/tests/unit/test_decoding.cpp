#include <cmath>
#include <filesystem>
#include <numeric>

#include "doctest.h"
#include "f2s/decoding.hpp"

using namespace f2s;
using namespace f2s::decoding;

namespace {

FactorizedDistribution make_dist(const ClassPartition& p, std::vector<double> class_probs,
                                 std::vector<std::vector<double>> within) {
  FactorizedDistribution d;
  d.class_probs = std::move(class_probs);
  d.within = std::move(within);
  d.combined.assign(p.vocab_size(), 0.0);
  for (std::size_t c = 0; c < p.num_classes(); ++c) {
    for (std::size_t i = 0; i < p.class_size(c); ++i) {
      d.combined[static_cast<std::size_t>(p.token_at(p.class_begin(c) + i))] = d.class_probs[c] * d.within[c][i];
    }
  }
  return d;
}

std::vector<double> random_simplex(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  double s = 0;
  for (auto& x : v) s += (x = rng.uniform() + 1e-3);
  for (auto& x : v) x /= s;
  return v;
}

FactorizedDistribution random_dist(const ClassPartition& p, Rng& rng) {
  std::vector<std::vector<double>> within;
  for (std::size_t c = 0; c < p.num_classes(); ++c) within.push_back(random_simplex(rng, p.class_size(c)));
  return make_dist(p, random_simplex(rng, p.num_classes()), within);
}

model::Transformer<float> tiny_model(const ClassPartition& p, model::HeadType head = model::HeadType::f2) {
  model::ModelConfig c;
  c.layers = 1;
  c.hidden_dim = 16;
  c.heads = 2;
  c.head_dim = 8;
  c.ffn_dim = 32;
  c.sequence_length = 12;
  c.vocab_size = p.vocab_size();
  c.dropout = 0.0;
  c.head_type = head;
  c.seed = 17;
  return model::Transformer<float>(c, p);
}

// shuffled ids split into classes of sizes 3, 5, 8
ClassPartition uneven_partition() {
  std::vector<TokenId> order(16);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(4, 4);
  for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
  return ClassPartition(order, {3, 8, 16});
}

}  // namespace

TEST_CASE("decode config validation") {
  DecodeConfig c;
  CHECK_NOTHROW(c.validate());
  c.k = 0;
  CHECK_THROWS(c.validate());
  nlohmann::json j = DecodeConfig{};
  CHECK(j.get<DecodeConfig>().k == DecodeConfig{}.k);
}

TEST_CASE("top_k renormalizes and breaks ties by index") {
  const std::vector<double> p{0.1, 0.3, 0.3, 0.2, 0.1};
  const auto c = top_k(p, 3);
  REQUIRE(c.size() == 3);
  CHECK(c[0].index == 1);
  CHECK(c[1].index == 2);
  CHECK(c[2].index == 3);
  CHECK(c[0].prob + c[1].prob + c[2].prob == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(c[2].prob == doctest::Approx(0.25));
  CHECK(top_k(p, 99).size() == 5);
  CHECK(argmax(p) == 1);
  const std::vector<TokenId> keys{0, 9, 4, 0, 0};
  CHECK(argmax(p, keys) == 2);

  Rng rng(1, 1);
  for (int t = 0; t < 200; ++t) {
    const auto q = random_simplex(rng, 1 + rng.below(40));
    const auto tk = top_k(q, 1 + rng.below(10));
    double s = 0;
    for (auto& x : tk) s += x.prob;
    CHECK(std::abs(s - 1.0) < 1e-6);
  }
}

TEST_CASE("greedy decoupled chain") {
  const ClassPartition p({0, 1, 2, 3, 4, 5, 6, 7}, {4, 8});
  const auto d = make_dist(p, {0.6, 0.4}, {{0.1, 0.2, 0.3, 0.4}, {0.1, 0.1, 0.1, 0.7}});
  DecodeConfig cfg;
  cfg.strategy = Strategy::greedy;
  Rng rng(0, 0);
  const auto r = decode_step_decoupled(d, p, cfg, rng);
  CHECK(r.class_index == 0);
  CHECK(r.token == 3);

  const auto masked = decoupled_token_distribution(d, p, 1);
  for (TokenId t = 0; t < 4; ++t) CHECK(masked[static_cast<std::size_t>(t)] == 0.0);
  CHECK(masked[7] == doctest::Approx(0.7));
}

TEST_CASE("coupled and decoupled greedy diverge on a constructed case") {
  // a=0, b=1 in class 0, c=2 alone in class 1
  const ClassPartition p({0, 1, 2}, {2, 3});
  const auto d = make_dist(p, {0.55, 0.45}, {{0.5, 0.5}, {1.0}});
  DecodeConfig cfg;
  cfg.strategy = Strategy::greedy;
  Rng rng(0, 0);
  CHECK(decode_step_coupled(d, cfg, rng) == 2);
  const auto r = decode_step_decoupled(d, p, cfg, rng);
  CHECK(r.class_index == 0);
  CHECK(r.token == 0);
}

TEST_CASE("decoupled steps never leave the chosen class") {
  const auto p = uneven_partition();
  Rng rng(8, 8);
  DecodeConfig cfg;
  cfg.k = 4;
  for (int step = 0; step < 10000; ++step) {
    const auto d = random_dist(p, rng);
    cfg.strategy = step % 3 == 0 ? Strategy::greedy : Strategy::topk;
    const auto r = decode_step_decoupled(d, p, cfg, rng);
    REQUIRE(p.class_of(r.token) == r.class_index);
    if (step % 500 == 0) {
      const auto masked = decoupled_token_distribution(d, p, r.class_index);
      double s = 0;
      for (std::size_t t = 0; t < masked.size(); ++t) {
        if (p.class_of(static_cast<TokenId>(t)) != r.class_index) CHECK(masked[t] == 0.0);
        s += masked[t];
      }
      CHECK(s == doctest::Approx(1.0));
    }
  }
}

TEST_CASE("top-2 class sampling frequencies pass a chi-square test") {
  const ClassPartition p({0, 1, 2}, {1, 2, 3});
  const auto d = make_dist(p, {0.5, 0.3, 0.2}, {{1.0}, {1.0}, {1.0}});
  DecodeConfig cfg;
  cfg.strategy = Strategy::topk;
  cfg.k = 2;
  Rng rng(2024, 7);
  const int n = 100000;
  std::array<int, 3> hits{};
  for (int i = 0; i < n; ++i) ++hits[decode_step_decoupled(d, p, cfg, rng).class_index];
  CHECK(hits[2] == 0);
  const double e0 = n * 0.625, e1 = n * 0.375;
  const double chi2 = (hits[0] - e0) * (hits[0] - e0) / e0 + (hits[1] - e1) * (hits[1] - e1) / e1;
  MESSAGE("class frequencies " << hits[0] / double(n) << " " << hits[1] / double(n) << " chi2 " << chi2);
  CHECK(chi2 < 6.635);  // 1 dof, alpha 0.01
  CHECK(std::abs(hits[0] / double(n) - 0.625) < 0.01);
}

TEST_CASE("coupled top-k token frequencies pass a chi-square test") {
  const auto p = uneven_partition();
  Rng gen(3, 3);
  const auto d = random_dist(p, gen);
  DecodeConfig cfg;
  cfg.mode = Mode::coupled;
  cfg.k = 5;
  const auto cand = top_k(d.combined, 5);
  Rng rng(77, 1);
  const int n = 100000;
  std::map<TokenId, int> hits;
  for (int i = 0; i < n; ++i) ++hits[decode_step_coupled(d, cfg, rng)];
  CHECK(hits.size() == 5);
  double chi2 = 0;
  for (auto& c : cand) {
    const double e = n * c.prob;
    const double o = hits[static_cast<TokenId>(c.index)];
    chi2 += (o - e) * (o - e) / e;
  }
  CHECK(chi2 < 13.277);  // 4 dof, alpha 0.01
}

TEST_CASE("single class partition makes both modes agree") {
  const auto p = ClassPartition::single_class(10);
  Rng rng(5, 5);
  DecodeConfig cfg;
  cfg.strategy = Strategy::greedy;
  for (int i = 0; i < 500; ++i) {
    const auto d = random_dist(p, rng);
    CHECK(decode_step_coupled(d, cfg, rng) == decode_step_decoupled(d, p, cfg, rng).token);
  }
  const auto m = tiny_model(p);
  const std::vector<TokenId> prefix{1, 2, 3};
  cfg.max_new_tokens = 30;
  cfg.mode = Mode::coupled;
  const auto a = generate(m, prefix, cfg);
  cfg.mode = Mode::decoupled;
  CHECK(generate(m, prefix, cfg).tokens == a.tokens);
}

TEST_CASE("top-1 sampling equals greedy") {
  const auto p = uneven_partition();
  const auto m = tiny_model(p);
  const std::vector<TokenId> prefix{4, 5};
  for (Mode mode : {Mode::coupled, Mode::decoupled}) {
    DecodeConfig g;
    g.strategy = Strategy::greedy;
    g.mode = mode;
    g.max_new_tokens = 40;
    DecodeConfig t = g;
    t.strategy = Strategy::topk;
    t.k = 1;
    t.seed = 99;
    CHECK(generate(m, prefix, g).tokens == generate(m, prefix, t).tokens);
  }
}

TEST_CASE("generation is reproducible and bounded") {
  const auto p = uneven_partition();
  const auto m = tiny_model(p);
  const std::vector<TokenId> prefix{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  DecodeConfig cfg;
  cfg.k = 6;
  cfg.max_new_tokens = 25;
  cfg.seed = 11;
  const auto a = generate(m, prefix, cfg, 3);
  const auto b = generate(m, prefix, cfg, 3);
  CHECK(a.tokens == b.tokens);
  CHECK(a.logprobs == b.logprobs);
  CHECK(a.tokens.size() == 25);
  CHECK(a.classes.size() == 25);
  for (std::size_t i = 0; i < a.tokens.size(); ++i) {
    CHECK(p.class_of(a.tokens[i]) == a.classes[i]);
    CHECK(a.logprobs[i] <= 0.0);
  }
  cfg.seed = 12;
  CHECK(generate(m, prefix, cfg, 3).tokens != a.tokens);

  CHECK_THROWS_AS(generate(m, std::vector<TokenId>{}, cfg), std::invalid_argument);
  CHECK_THROWS_AS(generate(m, std::vector<TokenId>(13, 1), cfg), std::invalid_argument);
}

TEST_CASE("parallel generation matches sequential") {
  const auto p = uneven_partition();
  const auto m = tiny_model(p, model::HeadType::mle);
  std::vector<std::vector<TokenId>> prefixes;
  Rng rng(6, 6);
  for (int i = 0; i < 7; ++i) {
    std::vector<TokenId> q(1 + rng.below(8));
    for (auto& t : q) t = static_cast<TokenId>(rng.below(16));
    prefixes.push_back(q);
  }
  DecodeConfig cfg;
  cfg.mode = Mode::coupled;
  cfg.max_new_tokens = 15;
  const auto one = generate_all(m, prefixes, cfg, 1);
  const auto three = generate_all(m, prefixes, cfg, 3);
  REQUIRE(one.size() == 7);
  for (std::size_t i = 0; i < one.size(); ++i) {
    CHECK(one[i].tokens == three[i].tokens);
    CHECK(one[i].prefix == prefixes[i]);
  }

  const auto path = std::filesystem::temp_directory_path() / "f2s_gen.jsonl";
  const nlohmann::json header{{"name", "x"}};
  save_generations(path, one, &header);
  nlohmann::json back_header;
  const auto back = load_generations(path, &back_header);
  CHECK(back_header == header);
  REQUIRE(back.size() == one.size());
  CHECK(back[4].tokens == one[4].tokens);
  CHECK(back[4].logprobs == one[4].logprobs);
}
