#include "noisychannel/synthetic/synthetic.h"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <random>

#include "noisychannel/core/error.h"
#include "noisychannel/core/seed.h"

namespace nc {
namespace {

std::string word(char prefix, int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%c%02d", prefix, i);
  return buf;
}

class GroundTruth {
 public:
  GroundTruth(const SyntheticConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
    const int vt = cfg.target_vocab, vs = cfg.source_vocab;
    const std::vector<double> peaked = {0.5, 0.25, 0.15, 0.1, 0.05, 0.03, 0.02};

    // Row vt is the sentence-start context.
    for (int c = 0; c <= vt; ++c) {
      std::vector<int> words(static_cast<std::size_t>(vt));
      std::iota(words.begin(), words.end(), 0);
      std::shuffle(words.begin(), words.end(), rng);
      const int k = std::min({cfg.successors, vt, static_cast<int>(peaked.size())});
      double mass = 0.0;
      for (int i = 0; i < k; ++i) mass += peaked[static_cast<std::size_t>(i)];
      std::vector<double> p(static_cast<std::size_t>(vt), cfg.lm_noise / vt);
      for (int i = 0; i < k; ++i)
        p[static_cast<std::size_t>(words[static_cast<std::size_t>(i)])] +=
            (1.0 - cfg.lm_noise) * peaked[static_cast<std::size_t>(i)] / mass;
      bigram_.emplace_back(p.begin(), p.end());
    }

    std::vector<int> order(static_cast<std::size_t>(vt));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::uniform_int_distribution<int> any_source(0, vs - 1);
    lexical_.resize(static_cast<std::size_t>(vt));
    for (int i = 0; i < vt; ++i) {
      const int y = order[static_cast<std::size_t>(i)];
      const int primary = i % vs;
      int secondary = any_source(rng);
      while (secondary == primary) secondary = any_source(rng);
      const double rest = 1.0 - cfg.primary_prob - cfg.secondary_prob;
      std::vector<double> p(static_cast<std::size_t>(vs), rest / vs);
      p[static_cast<std::size_t>(primary)] += cfg.primary_prob;
      p[static_cast<std::size_t>(secondary)] += cfg.secondary_prob;
      lexical_[static_cast<std::size_t>(y)] = std::discrete_distribution<int>(p.begin(), p.end());
    }
  }

  std::vector<int> sample_target(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> len_dist(cfg_.min_len, cfg_.max_len);
    const int len = len_dist(rng);
    std::vector<int> y;
    int prev = cfg_.target_vocab;
    for (int i = 0; i < len; ++i) {
      prev = bigram_[static_cast<std::size_t>(prev)](rng);
      y.push_back(prev);
    }
    return y;
  }

  std::vector<int> sample_source(const std::vector<int>& target, std::mt19937_64& rng) {
    std::vector<int> x;
    for (int y : target) x.push_back(lexical_[static_cast<std::size_t>(y)](rng));
    if (cfg_.reverse_source) std::reverse(x.begin(), x.end());
    return x;
  }

 private:
  const SyntheticConfig& cfg_;
  std::vector<std::discrete_distribution<int>> bigram_;
  std::vector<std::discrete_distribution<int>> lexical_;
};

Sentence to_words(const std::vector<int>& ids, char prefix) {
  Sentence s;
  for (int i : ids) s.push_back(word(prefix, i));
  return s;
}

}  // namespace

void SyntheticConfig::validate() const {
  if (target_vocab < 2 || source_vocab < 2) throw ArgumentError("synthetic vocabularies too small");
  if (target_vocab > 100 || source_vocab > 100)
    throw ArgumentError("synthetic vocabularies are limited to 100 words");
  if (train < 1 || dev < 0 || test < 0 || monolingual < 0)
    throw ArgumentError("bad synthetic split sizes");
  if (min_len < 1 || max_len < min_len) throw ArgumentError("bad synthetic length range");
  if (successors < 1) throw ArgumentError("successors must be >= 1");
  if (!(lm_noise >= 0.0 && lm_noise <= 1.0)) throw ArgumentError("lm_noise must be in [0, 1]");
  if (!(primary_prob >= 0.0 && secondary_prob >= 0.0 && primary_prob + secondary_prob <= 1.0))
    throw ArgumentError("lexical probabilities must be >= 0 and sum to at most 1");
}

SyntheticCorpus make_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  std::mt19937_64 model_rng(derive_seed(cfg.seed, "synthetic.model"));
  GroundTruth truth(cfg, model_rng);

  SyntheticCorpus corpus;
  auto fill = [&](SyntheticSplit& split, int n, const char* name) {
    std::mt19937_64 rng(derive_seed(cfg.seed, name));
    for (int i = 0; i < n; ++i) {
      const auto y = truth.sample_target(rng);
      const auto x = truth.sample_source(y, rng);
      split.source.push_back(to_words(x, 's'));
      split.target.push_back(to_words(y, 't'));
    }
  };
  fill(corpus.train, cfg.train, "synthetic.train");
  fill(corpus.dev, cfg.dev, "synthetic.dev");
  fill(corpus.test, cfg.test, "synthetic.test");

  std::mt19937_64 mono_rng(derive_seed(cfg.seed, "synthetic.mono"));
  for (int i = 0; i < cfg.monolingual; ++i)
    corpus.monolingual.push_back(to_words(truth.sample_target(mono_rng), 't'));
  return corpus;
}

void SyntheticCorpus::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  auto write_split = [&](const SyntheticSplit& s, const std::string& name) {
    write_corpus(dir / (name + ".src"), s.source);
    write_corpus(dir / (name + ".tgt"), s.target);
  };
  write_split(train, "train");
  write_split(dev, "dev");
  write_split(test, "test");
  write_corpus(dir / "mono.tgt", monolingual);
}

SyntheticCorpus SyntheticCorpus::load(const std::filesystem::path& dir) {
  SyntheticCorpus c;
  auto read_split = [&](SyntheticSplit& s, const std::string& name) {
    s.source = read_corpus(dir / (name + ".src"));
    s.target = read_corpus(dir / (name + ".tgt"));
    if (s.source.size() != s.target.size())
      throw DataError("split '" + name + "' has mismatched sides");
  };
  read_split(c.train, "train");
  read_split(c.dev, "dev");
  read_split(c.test, "test");
  if (std::filesystem::exists(dir / "mono.tgt")) c.monolingual = read_corpus(dir / "mono.tgt");
  return c;
}

}  // namespace nc
