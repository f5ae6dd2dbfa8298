#include "noisychannel/oracle/oracle.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "noisychannel/core/error.h"

namespace nc {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::size_t count_sequences(std::size_t content, std::size_t max_len) {
  std::size_t total = 0, layer = 1;
  for (std::size_t len = 1; len <= max_len; ++len) {
    layer *= content;
    total += layer;
  }
  return total;
}

struct Enumerator {
  const TokenSequence& source;
  const DirectScorer& direct;
  const ChannelScorer* channel;
  const LanguageModel* lm;
  const DecoderConfig& cfg;
  std::size_t max_len;
  std::vector<Hypothesis>& out;

  // `direct_sum` covers `prefix`; the EOS term is added when scoring.
  void visit(TokenSequence& prefix, double direct_sum) {
    const auto dist = direct.next_logprobs(source, prefix);
    if (!prefix.empty() && dist.at(kEos) != kNegInf) {
      Hypothesis h;
      h.target = prefix;
      h.finished = true;
      h.direct_sum = direct_sum + dist[kEos];
      if (channel) h.channel_sum = channel->score(source, prefix);
      if (lm) h.lm_sum = lm->sequence_logprob(prefix);
      h.combined = combine(h.direct_sum, h.channel_sum, h.lm_sum, prefix.size(), source.size(), cfg);
      out.push_back(std::move(h));
    }
    if (prefix.size() == max_len) return;
    for (std::size_t w = kFirstContentId; w < dist.size(); ++w) {
      if (dist[w] == kNegInf) continue;
      prefix.push_back(static_cast<TokenId>(w));
      visit(prefix, direct_sum + dist[w]);
      prefix.pop_back();
    }
  }
};

double linear_score(const NBestEntry& e, const ScoreWeights& w) {
  double score = w.word_reward * static_cast<double>(e.tokens.size());
  const std::pair<const char*, double> terms[] = {{feature::kDirect, w.direct},
                                                  {feature::kChannel, w.channel},
                                                  {feature::kLm, w.lm},
                                                  {feature::kReverse, w.reverse}};
  for (const auto& [name, weight] : terms) {
    if (weight == 0.0) continue;
    auto it = e.features.find(name);
    if (it == e.features.end()) throw DataError(std::string("missing feature '") + name + "'");
    score += weight * it->second;
  }
  return score;
}

double direct_or_neg_inf(const NBestEntry& e) {
  auto it = e.features.find(feature::kDirect);
  return it == e.features.end() ? kNegInf : it->second;
}

// a strictly preferred over b.
bool beats(const NBestEntry& a, double sa, const NBestEntry& b, double sb) {
  if (sa > sb) return true;
  if (sa < sb) return false;
  const double da = direct_or_neg_inf(a), db = direct_or_neg_inf(b);
  return da > db;
}

}  // namespace

OracleResult exhaustive_decode(const TokenSequence& source, const DirectScorer& direct,
                               const ChannelScorer* channel, const LanguageModel* lm,
                               const DecoderConfig& cfg, const OracleConfig& ocfg) {
  if (source.empty()) throw ArgumentError("empty source");
  const std::size_t content = direct.vocab_size() - kFirstContentId;
  if (ocfg.max_len < 1 || ocfg.max_len > OracleConfig::kMaxLen ||
      ocfg.vocab_cap > OracleConfig::kMaxVocab || content > static_cast<std::size_t>(ocfg.vocab_cap) ||
      count_sequences(content, static_cast<std::size_t>(ocfg.max_len)) >
          OracleConfig::kMaxSequences)
    throw ArgumentError("oracle bounds");

  OracleResult result;
  TokenSequence prefix;
  Enumerator e{source, direct, channel, lm, cfg, static_cast<std::size_t>(ocfg.max_len),
               result.ranked};
  e.visit(prefix, 0.0);
  if (result.ranked.empty()) throw DataError("oracle found no finite-scoring sequence");
  std::sort(result.ranked.begin(), result.ranked.end(), better_hypothesis);
  result.best = result.ranked.front();
  return result;
}

const NBestEntry& exhaustive_rerank(std::span<const NBestEntry> entries,
                                    const ScoreWeights& weights) {
  if (entries.empty()) throw ArgumentError("empty n-best list");
  std::vector<double> scores;
  scores.reserve(entries.size());
  for (const auto& e : entries) scores.push_back(linear_score(e, weights));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    bool unbeaten = true;
    for (std::size_t j = 0; j < entries.size() && unbeaten; ++j)
      if (j != i && beats(entries[j], scores[j], entries[i], scores[i])) unbeaten = false;
    if (unbeaten) return entries[i];
  }
  return entries.front();  // unreachable: the earliest maximal entry is unbeaten
}

}  // namespace nc
