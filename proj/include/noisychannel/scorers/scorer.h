#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "noisychannel/core/types.h"

namespace nc {

// p(y|x) as a next-token distribution. The returned vector has one natural-log
// probability per target vocabulary id; impossible tokens (always BOS) are -inf.
class DirectScorer {
 public:
  virtual ~DirectScorer() = default;

  virtual std::size_t vocab_size() const = 0;

  virtual std::vector<double> next_logprobs(const TokenSequence& source,
                                            const TokenSequence& prefix) const = 0;

  // One call per decoding step; the default loops over next_logprobs.
  virtual std::vector<std::vector<double>> next_logprobs_batch(
      const TokenSequence& source, std::span<const TokenSequence> prefixes) const;

  // Sum of stepwise log probabilities of `target` followed by EOS.
  double sequence_logprob(const TokenSequence& source, const TokenSequence& target) const;

  // Same sum over `prefix` only, EOS excluded.
  double prefix_logprob(const TokenSequence& source, const TokenSequence& prefix) const;
};

// log p(x | y_1..y_k): the whole source is scored for every target prefix.
class ChannelScorer {
 public:
  virtual ~ChannelScorer() = default;

  virtual double score(const TokenSequence& source, const TokenSequence& target_prefix) const = 0;

  virtual std::vector<double> score_batch(const TokenSequence& source,
                                          std::span<const TokenSequence> target_prefixes) const;
};

// p(y). `sequence` may end with EOS, in which case the EOS term is included.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  virtual double prefix_logprob(const TokenSequence& sequence) const = 0;

  virtual std::vector<double> prefix_logprob_batch(std::span<const TokenSequence> sequences) const;

  // log p(y) including the final EOS.
  double sequence_logprob(const TokenSequence& target) const;
};

// Log-sum-exp over a vector of log probabilities; -inf entries are ignored.
double log_sum_exp(std::span<const double> logprobs);

}  // namespace nc
