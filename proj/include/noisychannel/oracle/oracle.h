#pragma once

#include <span>
#include <vector>

#include "noisychannel/core/types.h"
#include "noisychannel/decoder/decoder.h"

namespace nc {

// Hard caps on brute-force enumeration.
struct OracleConfig {
  int max_len = 3;
  int vocab_cap = 6;

  static constexpr int kMaxLen = 6;
  static constexpr int kMaxVocab = 6;
  static constexpr std::size_t kMaxSequences = 50000;
};

struct OracleResult {
  Hypothesis best;
  // Every scored sequence, best first.
  std::vector<Hypothesis> ranked;
};

// Scores every target of length 1..max_len over the content ids with the
// complete-sentence combine() and returns the exact argmax. `channel` and `lm`
// may be null, in which case their sums are zero (direct-only objective).
OracleResult exhaustive_decode(const TokenSequence& source, const DirectScorer& direct,
                               const ChannelScorer* channel, const LanguageModel* lm,
                               const DecoderConfig& cfg, const OracleConfig& ocfg);

inline OracleResult exhaustive_decode(const TokenSequence& source,
                                      const NoisyChannelScorers& scorers,
                                      const DecoderConfig& cfg, const OracleConfig& ocfg) {
  return exhaustive_decode(source, scorers.direct, &scorers.channel, &scorers.lm, cfg, ocfg);
}

// Exact reranking argmax by pairwise comparison of every entry. Throws on an
// empty list.
const NBestEntry& exhaustive_rerank(std::span<const NBestEntry> entries,
                                    const ScoreWeights& weights);

}  // namespace nc
