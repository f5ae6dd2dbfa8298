#include "noisychannel/scorers/combinators.h"

#include <cmath>

#include "noisychannel/core/error.h"

namespace nc {

EnsembleDirectScorer::EnsembleDirectScorer(
    std::vector<std::shared_ptr<const DirectScorer>> members)
    : members_(std::move(members)) {
  if (members_.size() < 2) throw ArgumentError("an ensemble needs at least two direct scorers");
  for (const auto& m : members_) {
    if (!m) throw ArgumentError("null ensemble member");
    if (m->vocab_size() != members_.front()->vocab_size())
      throw ArgumentError("ensemble members have mismatched vocabularies");
  }
}

std::vector<double> EnsembleDirectScorer::average(
    const std::vector<std::vector<double>>& member_logprobs) const {
  const std::size_t v = vocab_size();
  std::vector<double> p(v, 0.0);
  for (const auto& lp : member_logprobs) {
    if (lp.size() != v) throw DataError("ensemble member returned a wrong-sized distribution");
    for (std::size_t w = 0; w < v; ++w) p[w] += std::exp(lp[w]);
  }
  double total = 0.0;
  for (double x : p) total += x;
  for (auto& x : p) x = std::log(x / total);
  return p;
}

std::vector<double> EnsembleDirectScorer::next_logprobs(const TokenSequence& source,
                                                        const TokenSequence& prefix) const {
  std::vector<std::vector<double>> lps;
  lps.reserve(members_.size());
  for (const auto& m : members_) lps.push_back(m->next_logprobs(source, prefix));
  return average(lps);
}

std::vector<std::vector<double>> EnsembleDirectScorer::next_logprobs_batch(
    const TokenSequence& source, std::span<const TokenSequence> prefixes) const {
  std::vector<std::vector<std::vector<double>>> per_member;
  per_member.reserve(members_.size());
  for (const auto& m : members_) per_member.push_back(m->next_logprobs_batch(source, prefixes));
  std::vector<std::vector<double>> out;
  out.reserve(prefixes.size());
  for (std::size_t i = 0; i < prefixes.size(); ++i) {
    std::vector<std::vector<double>> lps;
    for (auto& member : per_member) lps.push_back(std::move(member.at(i)));
    out.push_back(average(lps));
  }
  return out;
}

std::shared_ptr<const DirectScorer> make_ensemble(
    std::vector<std::shared_ptr<const DirectScorer>> members) {
  return std::make_shared<EnsembleDirectScorer>(std::move(members));
}

TokenSequence reversed(const TokenSequence& seq) { return TokenSequence(seq.rbegin(), seq.rend()); }

ReversedDirectFeature::ReversedDirectFeature(std::shared_ptr<const DirectScorer> reversed_model)
    : model_(std::move(reversed_model)) {
  if (!model_) throw ArgumentError("null reversed model");
}

double ReversedDirectFeature::score(const TokenSequence& source,
                                    const TokenSequence& target) const {
  return model_->sequence_logprob(source, reversed(target));
}

double ReversedDirectFeature::prefix_score(const TokenSequence& source,
                                           const TokenSequence& target) const {
  return model_->prefix_logprob(source, reversed(target));
}

}  // namespace nc
