#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace nc {

using TokenId = std::int32_t;

// Content tokens only: no BOS, and EOS is implied by the finished flag.
using TokenSequence = std::vector<TokenId>;

inline constexpr TokenId kBos = 0;
inline constexpr TokenId kEos = 1;
inline constexpr TokenId kUnk = 2;
inline constexpr TokenId kFirstContentId = kUnk;

struct SentencePair {
  TokenSequence source;
  TokenSequence target;
};

using ParallelCorpus = std::vector<SentencePair>;

// A (possibly partial) target with per-model cumulative log scores in nats.
struct Hypothesis {
  TokenSequence target;
  double direct_sum = 0.0;
  double channel_sum = 0.0;
  double lm_sum = 0.0;
  bool finished = false;
  double combined = 0.0;
};

// Feature names used by decoding output and reranking.
namespace feature {
inline constexpr const char* kDirect = "direct";
inline constexpr const char* kChannel = "channel";
inline constexpr const char* kLm = "lm";
inline constexpr const char* kReverse = "reverse";
}  // namespace feature

struct NBestEntry {
  std::int64_t sentence_id = 0;
  std::vector<std::string> tokens;
  std::map<std::string, double> features;
  double total = 0.0;

  bool operator==(const NBestEntry&) const = default;
};

struct ScoreWeights {
  double direct = 1.0;
  double channel = 0.0;
  double lm = 0.0;
  double reverse = 0.0;
  double word_reward = 0.0;

  bool operator==(const ScoreWeights&) const = default;

  ScoreWeights scaled(double c) const {
    return {direct * c, channel * c, lm * c, reverse * c, word_reward * c};
  }
};

}  // namespace nc
