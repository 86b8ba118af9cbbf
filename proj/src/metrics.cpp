#include "f2s/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace f2s::metrics {

namespace {

std::map<NGram, std::uint64_t> text_ngrams(const Text& t, std::size_t n) {
  std::map<NGram, std::uint64_t> out;
  if (n == 0 || t.size() < n) return out;
  for (std::size_t i = 0; i + n <= t.size(); ++i) {
    ++out[NGram(t.begin() + static_cast<std::ptrdiff_t>(i), t.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return out;
}

}  // namespace

double NGramProfile::relative(const NGram& g) const {
  if (total == 0) return 0.0;
  auto it = counts.find(g);
  return it == counts.end() ? 0.0 : static_cast<double>(it->second) / static_cast<double>(total);
}

NGramProfile ngram_profile(std::span<const Text> texts, std::size_t n) {
  if (n == 0) throw std::invalid_argument("ngram order must be positive");
  NGramProfile p;
  p.n = n;
  for (const auto& t : texts) {
    if (t.size() < n) continue;
    for (std::size_t i = 0; i + n <= t.size(); ++i) {
      ++p.counts[NGram(t.begin() + static_cast<std::ptrdiff_t>(i), t.begin() + static_cast<std::ptrdiff_t>(i + n))];
      ++p.total;
    }
  }
  return p;
}

double kl_divergence(const NGramProfile& gen, const NGramProfile& ref, KlDirection dir) {
  if (gen.empty() || ref.empty()) throw std::invalid_argument("kl_divergence: empty profile");
  const NGramProfile& p = dir == KlDirection::gen_to_ref ? gen : ref;
  const NGramProfile& q = dir == KlDirection::gen_to_ref ? ref : gen;
  std::set<NGram> support;
  for (const auto& [g, c] : p.counts) support.insert(g);
  for (const auto& [g, c] : q.counts) support.insert(g);
  const long double u = static_cast<long double>(support.size());
  const long double pden = static_cast<long double>(p.total) + u;
  const long double qden = static_cast<long double>(q.total) + u;
  const auto count = [](const NGramProfile& x, const NGram& g) {
    auto it = x.counts.find(g);
    return it == x.counts.end() ? 0.0L : static_cast<long double>(it->second);
  };
  long double kl = 0.0L;
  for (const auto& g : support) {
    const long double ps = (count(p, g) + 1.0L) / pden;
    const long double qs = (count(q, g) + 1.0L) / qden;
    kl += ps * std::log(ps / qs);
  }
  return std::max(0.0, static_cast<double>(kl));
}

double ms_jaccard(std::span<const Text> gen, std::span<const Text> ref, std::size_t n) {
  const auto pg = ngram_profile(gen, n);
  const auto pr = ngram_profile(ref, n);
  if (pg.empty() || pr.empty()) throw std::invalid_argument("ms_jaccard: no n-grams of order " + std::to_string(n));
  long double num = 0.0L, den = 0.0L;
  auto ig = pg.counts.begin();
  auto ir = pr.counts.begin();
  const long double tg = static_cast<long double>(pg.total), tr = static_cast<long double>(pr.total);
  while (ig != pg.counts.end() || ir != pr.counts.end()) {
    long double fg = 0.0L, fr = 0.0L;
    if (ir == pr.counts.end() || (ig != pg.counts.end() && ig->first < ir->first)) {
      fg = static_cast<long double>(ig->second) / tg;
      ++ig;
    } else if (ig == pg.counts.end() || ir->first < ig->first) {
      fr = static_cast<long double>(ir->second) / tr;
      ++ir;
    } else {
      fg = static_cast<long double>(ig->second) / tg;
      fr = static_cast<long double>(ir->second) / tr;
      ++ig;
      ++ir;
    }
    num += std::min(fg, fr);
    den += std::max(fg, fr);
  }
  return den > 0.0L ? static_cast<double>(num / den) : 0.0;
}

double ms_jaccard_geometric(std::span<const Text> gen, std::span<const Text> ref, std::size_t max_n) {
  if (max_n == 0) throw std::invalid_argument("ms_jaccard_geometric: max_n must be positive");
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= max_n; ++n) {
    const double v = ms_jaccard(gen, ref, n);
    if (v <= 0.0) return 0.0;
    log_sum += std::log(v);
  }
  return std::exp(log_sum / static_cast<double>(max_n));
}

namespace {

// Per-order reference statistics for self-BLEU: for each n-gram the two
// largest per-text counts and the owner of the largest, so that the max over
// all texts except one is O(1).
struct TopTwo {
  std::uint64_t best = 0;
  std::size_t owner = static_cast<std::size_t>(-1);
  std::uint64_t second = 0;
  void offer(std::uint64_t c, std::size_t who) {
    if (c > best) {
      second = best;
      best = c;
      owner = who;
    } else if (c > second) {
      second = c;
    }
  }
  std::uint64_t excluding(std::size_t who) const { return who == owner ? second : best; }
};

double combine(std::span<const double> num, std::span<const double> den, std::size_t n, const BleuOptions& opts,
               double bp) {
  std::size_t lo = opts.mode == BleuMode::cumulative ? 1 : n;
  double log_sum = 0.0;
  for (std::size_t m = lo; m <= n; ++m) {
    double c = num[m];
    if (den[m] <= 0.0) return 0.0;
    if (c <= 0.0) {
      if (opts.smoothing_epsilon <= 0.0) return 0.0;
      c = opts.smoothing_epsilon;
    }
    log_sum += std::log(c / den[m]);
  }
  return bp * std::exp(log_sum / static_cast<double>(n - lo + 1));
}

double brevity_penalty(std::size_t hyp_len, std::size_t ref_len) {
  if (hyp_len == 0) return 0.0;
  if (hyp_len >= ref_len) return 1.0;
  return std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
}

std::size_t closest_length(std::size_t hyp_len, std::size_t best, std::size_t cand) {
  const auto d = [&](std::size_t r) { return r > hyp_len ? r - hyp_len : hyp_len - r; };
  if (d(cand) < d(best) || (d(cand) == d(best) && cand < best)) return cand;
  return best;
}

}  // namespace

double bleu(const Text& hyp, std::span<const Text* const> refs, std::size_t n, const BleuOptions& opts) {
  if (n == 0) throw std::invalid_argument("bleu: n must be positive");
  if (refs.empty()) throw std::invalid_argument("bleu: no references");
  std::vector<double> num(n + 1, 0.0), den(n + 1, 0.0);
  for (std::size_t m = 1; m <= n; ++m) {
    const auto hc = text_ngrams(hyp, m);
    std::vector<std::map<NGram, std::uint64_t>> rc;
    rc.reserve(refs.size());
    for (const Text* r : refs) rc.push_back(text_ngrams(*r, m));
    for (const auto& [g, c] : hc) {
      std::uint64_t mx = 0;
      for (const auto& r : rc) {
        auto it = r.find(g);
        if (it != r.end()) mx = std::max(mx, it->second);
      }
      num[m] += static_cast<double>(std::min(c, mx));
      den[m] += static_cast<double>(c);
    }
  }
  std::size_t ref_len = refs[0]->size();
  for (const Text* r : refs) ref_len = closest_length(hyp.size(), ref_len, r->size());
  return combine(num, den, n, opts, brevity_penalty(hyp.size(), ref_len));
}

double self_bleu(std::span<const Text> texts, std::size_t n, const BleuOptions& opts) {
  if (n == 0) throw std::invalid_argument("self_bleu: n must be positive");
  if (texts.size() < 2) throw std::invalid_argument("self_bleu: needs at least two texts");
  const std::size_t T = texts.size();
  std::vector<std::vector<std::map<NGram, std::uint64_t>>> per(n + 1, std::vector<std::map<NGram, std::uint64_t>>(T));
  std::vector<std::map<NGram, TopTwo>> top(n + 1);
  for (std::size_t m = 1; m <= n; ++m) {
    for (std::size_t i = 0; i < T; ++i) {
      per[m][i] = text_ngrams(texts[i], m);
      for (const auto& [g, c] : per[m][i]) top[m][g].offer(c, i);
    }
  }
  long double sum = 0.0L;
  std::vector<double> num(n + 1), den(n + 1);
  for (std::size_t i = 0; i < T; ++i) {
    std::fill(num.begin(), num.end(), 0.0);
    std::fill(den.begin(), den.end(), 0.0);
    for (std::size_t m = 1; m <= n; ++m) {
      for (const auto& [g, c] : per[m][i]) {
        const std::uint64_t mx = top[m].at(g).excluding(i);
        num[m] += static_cast<double>(std::min(c, mx));
        den[m] += static_cast<double>(c);
      }
    }
    const std::size_t hl = texts[i].size();
    std::size_t ref_len = texts[i == 0 ? 1 : 0].size();
    for (std::size_t j = 0; j < T; ++j) {
      if (j != i) ref_len = closest_length(hl, ref_len, texts[j].size());
    }
    sum += combine(num, den, n, opts, brevity_penalty(hl, ref_len));
  }
  return static_cast<double>(sum / static_cast<long double>(T));
}

double distinct_n(std::span<const Text> texts, std::size_t n) {
  if (n == 0) throw std::invalid_argument("distinct_n: n must be positive");
  long double sum = 0.0L;
  std::size_t used = 0;
  for (const auto& t : texts) {
    if (t.size() < n) continue;
    const auto g = text_ngrams(t, n);
    sum += static_cast<long double>(g.size()) / static_cast<long double>(t.size() - n + 1);
    ++used;
  }
  return used == 0 ? 0.0 : static_cast<double>(sum / static_cast<long double>(used));
}

bool ends_in_loop(const Text& text, const RepetitionOptions& opts) {
  const std::size_t len = text.size();
  if (opts.min_repeats < 2) return len > 0;
  for (std::size_t p = 1; p <= opts.max_phrase; ++p) {
    if (p * opts.min_repeats > len) break;
    const std::size_t span = p * opts.min_repeats;
    bool ok = true;
    for (std::size_t i = len - span; i + p < len; ++i) {
      if (text[i] != text[i + p]) {
        ok = false;
        break;
      }
    }
    if (ok) return true;
  }
  return false;
}

double repetition(std::span<const Text> texts, const RepetitionOptions& opts) {
  if (texts.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& t : texts) hits += ends_in_loop(t, opts) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(texts.size());
}

std::size_t uniq(std::span<const Text> texts) {
  std::unordered_set<TokenId> seen;
  for (const auto& t : texts) seen.insert(t.begin(), t.end());
  return seen.size();
}

std::vector<Bucket> assign_buckets(const corpus::FrequencyTable& freq, const BucketCuts& cuts) {
  if (!(cuts.frequent <= cuts.medium && cuts.medium <= cuts.rare && cuts.rare <= 1.0 && cuts.frequent >= 0.0))
    throw std::invalid_argument("bucket cuts must be non-decreasing within [0,1]");
  const std::size_t V = freq.size();
  std::vector<std::size_t> order(V);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return freq.counts[a] > freq.counts[b]; });
  std::vector<Bucket> out(V, Bucket::very_rare);
  std::uint64_t total = 0;
  for (auto c : freq.counts) total += c;
  if (total == 0) return out;
  std::uint64_t before = 0;
  for (std::size_t id : order) {
    if (freq.counts[id] == 0) break;
    const double m = static_cast<double>(before) / static_cast<double>(total);
    if (m < cuts.frequent) out[id] = Bucket::frequent;
    else if (m < cuts.medium) out[id] = Bucket::medium;
    else if (m < cuts.rare) out[id] = Bucket::rare;
    else out[id] = Bucket::very_rare;
    before += freq.counts[id];
  }
  return out;
}

BucketShares bucket_shares(std::span<const Text> texts, const corpus::FrequencyTable& freq, const BucketCuts& cuts) {
  const auto buckets = assign_buckets(freq, cuts);
  std::array<std::uint64_t, 4> n{};
  std::uint64_t total = 0;
  for (const auto& t : texts) {
    for (TokenId id : t) {
      Bucket b = Bucket::very_rare;
      if (id >= 0 && static_cast<std::size_t>(id) < buckets.size()) b = buckets[static_cast<std::size_t>(id)];
      ++n[static_cast<std::size_t>(b)];
      ++total;
    }
  }
  if (total == 0) throw std::invalid_argument("bucket_shares: empty generation");
  const double d = static_cast<double>(total);
  return {static_cast<double>(n[0]) / d, static_cast<double>(n[1]) / d, static_cast<double>(n[2]) / d,
          static_cast<double>(n[3]) / d};
}

void to_json(nlohmann::json& j, const MetricsConfig& c) {
  j = nlohmann::json{
      {"kl_direction", c.kl_direction == KlDirection::gen_to_ref ? "gen_to_ref" : "ref_to_gen"},
      {"bleu_mode", c.bleu.mode == BleuMode::cumulative ? "cumulative" : "n_only"},
      {"bleu_smoothing_epsilon", c.bleu.smoothing_epsilon},
      {"rep_max_phrase", c.repetition.max_phrase},
      {"rep_min_repeats", c.repetition.min_repeats},
      {"bucket_cuts", {c.buckets.frequent, c.buckets.medium, c.buckets.rare}},
      {"max_n", c.max_n},
  };
}

void from_json(const nlohmann::json& j, MetricsConfig& c) {
  if (j.contains("kl_direction")) {
    const auto s = j.at("kl_direction").get<std::string>();
    if (s == "gen_to_ref") c.kl_direction = KlDirection::gen_to_ref;
    else if (s == "ref_to_gen") c.kl_direction = KlDirection::ref_to_gen;
    else throw std::invalid_argument("unknown kl_direction: " + s);
  }
  if (j.contains("bleu_mode")) {
    const auto s = j.at("bleu_mode").get<std::string>();
    if (s == "cumulative") c.bleu.mode = BleuMode::cumulative;
    else if (s == "n_only") c.bleu.mode = BleuMode::n_only;
    else throw std::invalid_argument("unknown bleu_mode: " + s);
  }
  if (j.contains("bleu_smoothing_epsilon")) c.bleu.smoothing_epsilon = j.at("bleu_smoothing_epsilon").get<double>();
  if (j.contains("rep_max_phrase")) c.repetition.max_phrase = j.at("rep_max_phrase").get<std::size_t>();
  if (j.contains("rep_min_repeats")) c.repetition.min_repeats = j.at("rep_min_repeats").get<std::size_t>();
  if (j.contains("bucket_cuts")) {
    const auto v = j.at("bucket_cuts").get<std::vector<double>>();
    if (v.size() != 3) throw std::invalid_argument("bucket_cuts needs three values");
    c.buckets = {v[0], v[1], v[2]};
  }
  if (j.contains("max_n")) c.max_n = j.at("max_n").get<std::size_t>();
  if (c.max_n == 0 || c.max_n > 3) throw std::invalid_argument("max_n must be in [1,3]");
}

EvalReport evaluate(std::string name, std::span<const Text> gen, std::span<const Text> ref,
                    const corpus::FrequencyTable& train_freq, const MetricsConfig& cfg) {
  EvalReport r;
  r.name = std::move(name);
  r.kld = kl_divergence(ngram_profile(gen, 1), ngram_profile(ref, 1), cfg.kl_direction);
  for (std::size_t n = 1; n <= 3; ++n) {
    r.msj[n - 1] = ms_jaccard(gen, ref, n);
    r.self_bleu[n - 1] = self_bleu(gen, n, cfg.bleu);
    r.distinct[n - 1] = distinct_n(gen, n);
  }
  r.msj_geometric = ms_jaccard_geometric(gen, ref, cfg.max_n);
  r.rep = repetition(gen, cfg.repetition);
  r.uniq = uniq(gen);
  r.buckets = bucket_shares(gen, train_freq, cfg.buckets);
  return r;
}

double round_fixed(double x) {
  if (!std::isfinite(x)) return x;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10f", x);
  double v = std::strtod(buf, nullptr);
  return v == 0.0 ? 0.0 : v;
}

nlohmann::ordered_json report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["name"] = r.name;
  if (r.ppl) j["ppl"] = round_fixed(*r.ppl);
  else j["ppl"] = nullptr;
  j["kld"] = round_fixed(r.kld);
  auto arr = [](const std::array<double, 3>& a) {
    return nlohmann::ordered_json::array({round_fixed(a[0]), round_fixed(a[1]), round_fixed(a[2])});
  };
  j["msj"] = arr(r.msj);
  j["msj_geometric"] = round_fixed(r.msj_geometric);
  j["self_bleu"] = arr(r.self_bleu);
  j["distinct"] = arr(r.distinct);
  j["rep"] = round_fixed(r.rep);
  j["uniq"] = r.uniq;
  j["bucket_shares"] = {{"frequent", round_fixed(r.buckets.frequent)},
                        {"medium", round_fixed(r.buckets.medium)},
                        {"rare", round_fixed(r.buckets.rare)},
                        {"very_rare", round_fixed(r.buckets.very_rare)}};
  return j;
}

std::string reports_to_tsv(std::span<const EvalReport> reports) {
  std::ostringstream os;
  os << "model\tPPL\tKLD\tMSJ1\tMSJ2\tMSJ3\tSB1\tSB2\tSB3\tD1\tD2\tD3\tRep\tUniq\tfrequent\tmedium\trare\tvery_rare\n";
  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "\t%.4f", v);
    os << buf;
  };
  for (const auto& r : reports) {
    os << r.name;
    if (r.ppl) put(*r.ppl);
    else os << "\t-";
    put(r.kld);
    for (double v : r.msj) put(v);
    for (double v : r.self_bleu) put(v);
    for (double v : r.distinct) put(v);
    put(r.rep);
    os << '\t' << r.uniq;
    put(r.buckets.frequent);
    put(r.buckets.medium);
    put(r.buckets.rare);
    put(r.buckets.very_rare);
    os << '\n';
  }
  return os.str();
}

}  // namespace f2s::metrics
