#include "noisychannel/reranker/reranker.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "noisychannel/core/error.h"
#include "noisychannel/core/parallel.h"
#include "noisychannel/eval/bleu.h"

namespace nc {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

const TokenSequence& source_for(std::span<const TokenSequence> sources, std::int64_t id) {
  if (id < 0 || static_cast<std::size_t>(id) >= sources.size())
    throw DataError("missing source for sentence " + std::to_string(id));
  return sources[static_cast<std::size_t>(id)];
}

const Sentence& reference_for(std::span<const Sentence> refs, std::int64_t id) {
  if (id < 0 || static_cast<std::size_t>(id) >= refs.size())
    throw DataError("missing reference for sentence " + std::to_string(id));
  return refs[static_cast<std::size_t>(id)];
}

double direct_feature(const NBestEntry& e) {
  auto it = e.features.find(feature::kDirect);
  return it == e.features.end() ? kNegInf : it->second;
}

bool preferred(const NBestEntry& a, double sa, const NBestEntry& b, double sb) {
  if (sa != sb) return sa > sb;
  return direct_feature(a) > direct_feature(b);
}

TokenSequence truncate(const TokenSequence& seq, std::size_t len) {
  return TokenSequence(seq.begin(), seq.begin() + static_cast<std::ptrdiff_t>(len));
}

std::string format_exact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Selection with precomputed per-entry BLEU statistics.
struct StatsTable {
  std::vector<std::vector<BleuStats>> per_entry;

  StatsTable(std::span<const std::vector<NBestEntry>> groups, std::span<const Sentence> refs) {
    per_entry.reserve(groups.size());
    for (const auto& g : groups) {
      std::vector<BleuStats> stats;
      stats.reserve(g.size());
      for (const auto& e : g) stats.push_back(sentence_stats(e.tokens, reference_for(refs, e.sentence_id)));
      per_entry.push_back(std::move(stats));
    }
  }

  double evaluate(std::span<const std::vector<NBestEntry>> groups, const ScoreWeights& w) const {
    BleuStats total;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      if (groups[g].empty()) continue;
      total += per_entry[g][select_best(groups[g], w)];
    }
    return bleu(total);
  }
};

}  // namespace

FeatureSet FeatureSet::parse(std::string_view name) {
  FeatureSet fs{false, false, false, false};
  std::size_t start = 0;
  while (start <= name.size()) {
    std::size_t end = name.find('+', start);
    if (end == std::string_view::npos) end = name.size();
    std::string part(name.substr(start, end - start));
    for (auto& ch : part) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (part == "dir" || part == "direct")
      fs.direct = true;
    else if (part == "ch" || part == "channel")
      fs.channel = true;
    else if (part == "lm")
      fs.lm = true;
    else if (part == "rl" || part == "reverse")
      fs.reverse = true;
    else
      throw ArgumentError("unknown feature '" + part + "' in feature set '" + std::string(name) + "'");
    start = end + 1;
  }
  return fs;
}

std::string FeatureSet::name() const {
  std::string out;
  auto add = [&](bool on, const char* n) {
    if (!on) return;
    if (!out.empty()) out += '+';
    out += n;
  };
  add(channel, "ch");
  add(direct, "dir");
  add(reverse, "rl");
  add(lm, "lm");
  return out.empty() ? "none" : out;
}

void PrefixSpec::validate() const {
  if (axis == TargetAxis::kFraction && !(target_fraction > 0.0 && target_fraction <= 1.0))
    throw ArgumentError("target fraction must be in (0, 1]");
  if (axis == TargetAxis::kLength && target_length < 1)
    throw ArgumentError("target prefix length must be >= 1");
  if (!(source_fraction > 0.0 && source_fraction <= 1.0))
    throw ArgumentError("source fraction must be in (0, 1]");
}

std::size_t PrefixSpec::target_prefix_len(std::size_t len) const {
  std::size_t k = axis == TargetAxis::kLength
                      ? target_length
                      : std::max<std::size_t>(
                            1, static_cast<std::size_t>(std::llround(target_fraction * static_cast<double>(len))));
  return std::min(k, len);
}

std::size_t PrefixSpec::source_prefix_len(std::size_t len) const {
  const auto k = static_cast<std::size_t>(std::ceil(source_fraction * static_cast<double>(len)));
  return std::min(std::max<std::size_t>(k, 1), len);
}

std::map<std::string, double> prefix_features(const TokenSequence& source,
                                              const TokenSequence& target, const PrefixSpec& spec,
                                              const FeatureScorers& scorers) {
  const std::size_t tlen = spec.target_prefix_len(target.size());
  const bool complete = tlen == target.size();
  const TokenSequence y = truncate(target, tlen);
  const TokenSequence x = truncate(source, spec.source_prefix_len(source.size()));
  const TokenSequence& x_direct = spec.direct_full_source ? source : x;

  std::map<std::string, double> f;
  if (scorers.direct)
    f[feature::kDirect] = complete ? scorers.direct->sequence_logprob(x_direct, y)
                                   : scorers.direct->prefix_logprob(x_direct, y);
  if (scorers.channel) f[feature::kChannel] = scorers.channel->score(x, y);
  if (scorers.lm) f[feature::kLm] = complete ? scorers.lm->sequence_logprob(y) : scorers.lm->prefix_logprob(y);
  if (scorers.reverse)
    f[feature::kReverse] = complete ? scorers.reverse->score(x_direct, y)
                                    : scorers.reverse->prefix_score(x_direct, y);
  for (const auto& [name, value] : f)
    if (!std::isfinite(value)) throw DataError("non-finite " + name + " feature");
  return f;
}

void extract_features(std::vector<NBestEntry>& entries, std::span<const TokenSequence> sources,
                      const Vocabulary& target_vocab, const FeatureScorers& scorers, int jobs) {
  for (const auto& e : entries) source_for(sources, e.sentence_id);
  parallel_for(entries.size(), jobs, [&](std::size_t i) {
    auto& e = entries[i];
    auto f = prefix_features(source_for(sources, e.sentence_id), target_vocab.encode(e.tokens),
                             PrefixSpec::full(), scorers);
    for (auto& [name, value] : f) e.features[name] = value;
  });
}

double rerank_score(const NBestEntry& entry, const ScoreWeights& weights) {
  double score = weights.word_reward * static_cast<double>(entry.tokens.size());
  auto term = [&](const char* name, double w) {
    if (w == 0.0) return;
    auto it = entry.features.find(name);
    if (it == entry.features.end())
      throw DataError(std::string("missing feature '") + name + "' for sentence " +
                      std::to_string(entry.sentence_id));
    score += w * it->second;
  };
  term(feature::kDirect, weights.direct);
  term(feature::kChannel, weights.channel);
  term(feature::kLm, weights.lm);
  term(feature::kReverse, weights.reverse);
  return score;
}

std::size_t select_best(std::span<const NBestEntry> entries, const ScoreWeights& weights) {
  if (entries.empty()) throw ArgumentError("empty n-best list");
  std::size_t best = 0;
  double best_score = rerank_score(entries[0], weights);
  for (std::size_t i = 1; i < entries.size(); ++i) {
    const double s = rerank_score(entries[i], weights);
    if (preferred(entries[i], s, entries[best], best_score)) {
      best = i;
      best_score = s;
    }
  }
  return best;
}

std::vector<NBestEntry> rerank(std::span<const std::vector<NBestEntry>> groups,
                               const ScoreWeights& weights) {
  std::vector<NBestEntry> out;
  out.reserve(groups.size());
  for (const auto& g : groups) out.push_back(g[select_best(g, weights)]);
  return out;
}

void TuneConfig::validate() const {
  if (trials < 1) throw ArgumentError("trials must be >= 1");
  if (!(weight_max > weight_min)) throw ArgumentError("degenerate weight range");
  if (!(reward_max > reward_min)) throw ArgumentError("degenerate word reward range");
  if (refine_rounds < 0) throw ArgumentError("refine_rounds must be >= 0");
}

double rerank_bleu(std::span<const std::vector<NBestEntry>> groups,
                   std::span<const Sentence> references, const ScoreWeights& weights) {
  BleuStats total;
  for (const auto& sel : rerank(groups, weights))
    accumulate(total, sel.tokens, reference_for(references, sel.sentence_id));
  return bleu(total);
}

TuneResult tune(std::span<const std::vector<NBestEntry>> groups,
                std::span<const Sentence> references, const TuneConfig& cfg) {
  cfg.validate();
  if (groups.empty()) throw ArgumentError("empty dev set");
  const StatsTable table(groups, references);
  const FeatureSet& fs = cfg.features;

  TuneResult best;
  best.weights = ScoreWeights{fs.direct ? 1.0 : 0.0, 0.0, 0.0, 0.0, 0.0};
  best.bleu = table.evaluate(groups, best.weights);
  best.evaluations = 1;

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> weight_dist(cfg.weight_min, cfg.weight_max);
  std::uniform_real_distribution<double> reward_dist(cfg.reward_min, cfg.reward_max);
  for (int trial = 1; trial < cfg.trials; ++trial) {
    ScoreWeights w{0.0, 0.0, 0.0, 0.0, 0.0};
    if (fs.direct) w.direct = weight_dist(rng);
    if (fs.channel) w.channel = weight_dist(rng);
    if (fs.lm) w.lm = weight_dist(rng);
    if (fs.reverse) w.reverse = weight_dist(rng);
    w.word_reward = reward_dist(rng);
    const double b = table.evaluate(groups, w);
    ++best.evaluations;
    if (b > best.bleu) {
      best.bleu = b;
      best.weights = w;
    }
  }

  struct Coordinate {
    double ScoreWeights::*field;
    bool active;
    double lo, hi, step;
  };
  const double wstep = (cfg.weight_max - cfg.weight_min) / 4.0;
  std::vector<Coordinate> coords = {
      {&ScoreWeights::direct, fs.direct, cfg.weight_min, cfg.weight_max, wstep},
      {&ScoreWeights::channel, fs.channel, cfg.weight_min, cfg.weight_max, wstep},
      {&ScoreWeights::lm, fs.lm, cfg.weight_min, cfg.weight_max, wstep},
      {&ScoreWeights::reverse, fs.reverse, cfg.weight_min, cfg.weight_max, wstep},
      {&ScoreWeights::word_reward, true, cfg.reward_min, cfg.reward_max,
       (cfg.reward_max - cfg.reward_min) / 4.0},
  };
  for (int round = 0; round < cfg.refine_rounds; ++round) {
    for (auto& c : coords) {
      if (!c.active) continue;
      for (double sign : {1.0, -1.0}) {
        ScoreWeights w = best.weights;
        w.*c.field = std::clamp(w.*c.field + sign * c.step, c.lo, c.hi);
        if (w == best.weights) continue;
        const double b = table.evaluate(groups, w);
        ++best.evaluations;
        if (b > best.bleu) {
          best.bleu = b;
          best.weights = w;
        }
      }
      c.step /= 2.0;
    }
  }
  return best;
}

PrefixRerankResult prefix_rerank(std::span<const std::vector<NBestEntry>> groups,
                                 std::span<const TokenSequence> sources,
                                 std::span<const Sentence> references,
                                 const Vocabulary& target_vocab, const FeatureScorers& scorers,
                                 const PrefixSpec& spec, const ScoreWeights& weights, int jobs) {
  spec.validate();
  PrefixRerankResult result;
  result.selections.resize(groups.size());
  parallel_for(groups.size(), jobs, [&](std::size_t g) {
    const auto& entries = groups[g];
    if (entries.empty()) throw ArgumentError("empty n-best list");
    // Candidates sharing a truncated prefix tie; ties fall back to the full
    // candidates, i.e. to the n-best ranking.
    std::size_t best = 0;
    double best_score = kNegInf;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      NBestEntry t = entries[i];
      t.features = prefix_features(source_for(sources, t.sentence_id),
                                   target_vocab.encode(t.tokens), spec, scorers);
      t.tokens.resize(spec.target_prefix_len(t.tokens.size()));
      const double s = rerank_score(t, weights);
      if (i == 0 || preferred(entries[i], s, entries[best], best_score)) {
        best = i;
        best_score = s;
      }
    }
    result.selections[g] = entries[best];
  });
  BleuStats total;
  for (const auto& sel : result.selections)
    accumulate(total, sel.tokens, reference_for(references, sel.sentence_id));
  result.bleu = bleu(total);
  return result;
}

std::string format_weights(const ScoreWeights& w) {
  std::string out;
  out += "direct=" + format_exact(w.direct) + "\n";
  out += "channel=" + format_exact(w.channel) + "\n";
  out += "lm=" + format_exact(w.lm) + "\n";
  out += "reverse=" + format_exact(w.reverse) + "\n";
  out += "word_reward=" + format_exact(w.word_reward) + "\n";
  return out;
}

ScoreWeights parse_weights(std::string_view text) {
  ScoreWeights w{0.0, 0.0, 0.0, 0.0, 0.0};
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto tokens = split_tokens(line);
    if (tokens.empty()) continue;
    std::string kv;
    for (const auto& t : tokens) kv += t;
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw DataError("malformed weights line " + std::to_string(line_number));
    const std::string name = kv.substr(0, eq);
    char* end = nullptr;
    const std::string value_str = kv.substr(eq + 1);
    const double value = std::strtod(value_str.c_str(), &end);
    if (value_str.empty() || *end != '\0' || !std::isfinite(value))
      throw DataError("malformed weights line " + std::to_string(line_number));
    if (name == "direct")
      w.direct = value;
    else if (name == "channel")
      w.channel = value;
    else if (name == "lm")
      w.lm = value;
    else if (name == "reverse")
      w.reverse = value;
    else if (name == "word_reward")
      w.word_reward = value;
    else
      throw DataError("unknown weight '" + name + "' on line " + std::to_string(line_number));
  }
  return w;
}

ScoreWeights read_weights(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open weights file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_weights(ss.str());
}

void write_weights(const std::filesystem::path& path, const ScoreWeights& weights) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write weights file " + path.string());
  out << format_weights(weights);
}

}  // namespace nc
