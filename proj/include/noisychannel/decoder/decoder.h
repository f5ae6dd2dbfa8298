#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "noisychannel/core/types.h"
#include "noisychannel/core/vocabulary.h"
#include "noisychannel/scorers/scorer.h"

namespace nc {

struct DecoderConfig {
  int k1 = 5;
  int k2 = 10;
  // Weight of the channel + LM term.
  double lambda1 = 1.0;
  // Additive bonus per content token (the tuned length penalty; may be negative).
  double word_reward = 0.0;
  // Divide the direct sum by t and the channel + LM sum by s.
  bool per_word = true;
  double max_len_ratio = 2.0;
  int max_len_slack = 5;
  // When > 0, replaces max_len_ratio * |x| + max_len_slack.
  int max_len = 0;

  std::size_t max_target_len(std::size_t source_len) const;
  void validate() const;
};

// Score combination for a prefix of t content tokens (EOS excluded) and a
// source of s tokens:
//   per_word:  direct / t + (lambda1 / s) * (channel + lm) + word_reward * t
//   otherwise: direct + lambda1 * (channel + lm) + word_reward * t
double combine(double direct_sum, double channel_sum, double lm_sum, std::size_t t, std::size_t s,
               const DecoderConfig& cfg);

struct NoisyChannelScorers {
  const DirectScorer& direct;
  const ChannelScorer& channel;
  const LanguageModel& lm;
};

// Ordering shared by decoder, oracle and reranker: higher score, then higher
// direct sum, then the lexicographically smaller token sequence.
bool better_hypothesis(const Hypothesis& a, const Hypothesis& b);

// Standard beam search on combine(direct, 0, 0, ...). Returns at most k1
// finished hypotheses, best first.
std::vector<Hypothesis> beam_search_direct(const TokenSequence& source, const DirectScorer& direct,
                                           const DecoderConfig& cfg);

// Two-step search: each live beam proposes its top-k2 extensions under the
// direct model, the pooled candidates are rescored with channel and LM and
// pruned back to k1. Returns at most k1 finished hypotheses, best first.
std::vector<Hypothesis> noisy_channel_beam_search(const TokenSequence& source,
                                                  const NoisyChannelScorers& scorers,
                                                  const DecoderConfig& cfg);

// N-best entries for one sentence. `direct` is always written; `channel` and
// `lm` only when `with_noisy_features` is set. `total` is the search score.
std::vector<NBestEntry> to_nbest(std::span<const Hypothesis> hyps, std::int64_t sentence_id,
                                 const Vocabulary& target_vocab, bool with_noisy_features);

}  // namespace nc
