#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "noisychannel/core/vocabulary.h"
#include "noisychannel/scorers/combinators.h"
#include "noisychannel/scorers/lexicon.h"
#include "noisychannel/scorers/ngram_lm.h"

namespace nc {

struct ToyTrainOptions {
  int min_count = 1;
  int em_iterations = 10;
  int lm_order = 3;
  double lm_alpha = 0.1;
  std::uint64_t seed = 1;
};

// The complete set of desk-scale models: direct (source->target), a second
// direct model trained on a bootstrap resample (ensemble partner), full and
// prefix-trained channels (target->source), a right-to-left direct model and a
// target-side n-gram LM.
struct ToyModels {
  Vocabulary source_vocab;
  Vocabulary target_vocab;
  std::shared_ptr<const LexiconTable> direct;
  std::shared_ptr<const LexiconTable> direct2;
  std::shared_ptr<const LexiconTable> channel;
  std::shared_ptr<const LexiconTable> prefix_channel;
  std::shared_ptr<const LexiconTable> reverse;
  std::shared_ptr<const NGramTable> lm;

  // `monolingual` target sentences are added to the LM training data.
  static ToyModels train(std::span<const Sentence> source, std::span<const Sentence> target,
                         std::span<const Sentence> monolingual, const ToyTrainOptions& options);

  static ToyModels load(const std::filesystem::path& dir);
  void save(const std::filesystem::path& dir) const;

  ParallelCorpus encode(std::span<const Sentence> source, std::span<const Sentence> target) const;

  std::shared_ptr<const DirectScorer> direct_scorer() const;
  std::shared_ptr<const DirectScorer> ensemble_scorer() const;
  std::shared_ptr<const ChannelScorer> channel_scorer(bool prefix_trained = false) const;
  std::shared_ptr<const LanguageModel> language_model() const;
  std::shared_ptr<const ReversedDirectFeature> reverse_feature() const;
};

}  // namespace nc
