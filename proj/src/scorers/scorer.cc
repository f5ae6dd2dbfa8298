#include "noisychannel/scorers/scorer.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "noisychannel/core/error.h"

namespace nc {

std::vector<std::vector<double>> DirectScorer::next_logprobs_batch(
    const TokenSequence& source, std::span<const TokenSequence> prefixes) const {
  std::vector<std::vector<double>> out;
  out.reserve(prefixes.size());
  for (const auto& p : prefixes) out.push_back(next_logprobs(source, p));
  return out;
}

double DirectScorer::prefix_logprob(const TokenSequence& source,
                                    const TokenSequence& prefix) const {
  double sum = 0.0;
  TokenSequence history;
  history.reserve(prefix.size());
  for (TokenId w : prefix) {
    sum += next_logprobs(source, history).at(static_cast<std::size_t>(w));
    history.push_back(w);
  }
  return sum;
}

double DirectScorer::sequence_logprob(const TokenSequence& source,
                                      const TokenSequence& target) const {
  double sum = prefix_logprob(source, target);
  return sum + next_logprobs(source, target).at(kEos);
}

std::vector<double> ChannelScorer::score_batch(
    const TokenSequence& source, std::span<const TokenSequence> target_prefixes) const {
  std::vector<double> out;
  out.reserve(target_prefixes.size());
  for (const auto& p : target_prefixes) out.push_back(score(source, p));
  return out;
}

std::vector<double> LanguageModel::prefix_logprob_batch(
    std::span<const TokenSequence> sequences) const {
  std::vector<double> out;
  out.reserve(sequences.size());
  for (const auto& s : sequences) out.push_back(prefix_logprob(s));
  return out;
}

double LanguageModel::sequence_logprob(const TokenSequence& target) const {
  TokenSequence with_eos = target;
  with_eos.push_back(kEos);
  return prefix_logprob(with_eos);
}

double log_sum_exp(std::span<const double> logprobs) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : logprobs) m = std::max(m, v);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : logprobs)
    if (v != -std::numeric_limits<double>::infinity()) s += std::exp(v - m);
  return m + std::log(s);
}

}  // namespace nc
