#pragma once

#include <memory>
#include <vector>

#include "noisychannel/scorers/scorer.h"

namespace nc {

// Renormalized arithmetic mean of member next-token probabilities.
class EnsembleDirectScorer : public DirectScorer {
 public:
  explicit EnsembleDirectScorer(std::vector<std::shared_ptr<const DirectScorer>> members);

  std::size_t vocab_size() const override { return members_.front()->vocab_size(); }
  std::vector<double> next_logprobs(const TokenSequence& source,
                                    const TokenSequence& prefix) const override;
  std::vector<std::vector<double>> next_logprobs_batch(
      const TokenSequence& source, std::span<const TokenSequence> prefixes) const override;

 private:
  std::vector<double> average(const std::vector<std::vector<double>>& member_logprobs) const;

  std::vector<std::shared_ptr<const DirectScorer>> members_;
};

// Needs at least two members with equal vocabulary sizes.
std::shared_ptr<const DirectScorer> make_ensemble(
    std::vector<std::shared_ptr<const DirectScorer>> members);

// Right-to-left reranking feature: the direct score of reverse(y) under a
// model trained on reversed targets.
class ReversedDirectFeature {
 public:
  explicit ReversedDirectFeature(std::shared_ptr<const DirectScorer> reversed_model);

  // Complete-sentence score, EOS included.
  double score(const TokenSequence& source, const TokenSequence& target) const;
  // reverse(target) scored without EOS; used for truncated targets.
  double prefix_score(const TokenSequence& source, const TokenSequence& target) const;

 private:
  std::shared_ptr<const DirectScorer> model_;
};

TokenSequence reversed(const TokenSequence& seq);

}  // namespace nc
