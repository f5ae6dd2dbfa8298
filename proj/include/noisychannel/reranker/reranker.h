#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "noisychannel/core/types.h"
#include "noisychannel/core/vocabulary.h"
#include "noisychannel/scorers/combinators.h"
#include "noisychannel/scorers/scorer.h"

namespace nc {

// Which features a weight vector may use. Names follow the usual
// "ch+dir+lm" / "dir+rl" notation.
struct FeatureSet {
  bool direct = true;
  bool channel = false;
  bool lm = false;
  bool reverse = false;

  static FeatureSet parse(std::string_view name);
  std::string name() const;
  bool operator==(const FeatureSet&) const = default;
};

struct FeatureScorers {
  const DirectScorer* direct = nullptr;
  const ChannelScorer* channel = nullptr;
  const LanguageModel* lm = nullptr;
  const ReversedDirectFeature* reverse = nullptr;
};

// Fraction (or absolute length) of each candidate and source that the
// features get to see.
struct PrefixSpec {
  enum class TargetAxis { kLength, kFraction };

  TargetAxis axis = TargetAxis::kFraction;
  std::size_t target_length = 1;
  double target_fraction = 1.0;
  double source_fraction = 1.0;
  // Score the direct feature on the full source even when the channel sees a
  // truncated one.
  bool direct_full_source = false;

  static PrefixSpec full() { return {}; }
  void validate() const;
  std::size_t target_prefix_len(std::size_t len) const;
  std::size_t source_prefix_len(std::size_t len) const;
};

// Features of one candidate under `spec`. Complete targets include the EOS
// term in direct, LM and reverse scores; truncated ones do not. Unnormalized
// sums throughout.
std::map<std::string, double> prefix_features(const TokenSequence& source,
                                              const TokenSequence& target, const PrefixSpec& spec,
                                              const FeatureScorers& scorers);

// Fills every feature whose scorer is present, on full sentences. `sources`
// is indexed by sentence id.
void extract_features(std::vector<NBestEntry>& entries, std::span<const TokenSequence> sources,
                      const Vocabulary& target_vocab, const FeatureScorers& scorers, int jobs = 1);

// w_direct * direct + w_channel * channel + w_lm * lm + w_reverse * reverse
// + word_reward * |y|. Features with zero weight may be absent.
double rerank_score(const NBestEntry& entry, const ScoreWeights& weights);

// Index of the best entry; ties prefer the higher direct feature, then the
// earlier entry. Decoder output is written in decoder order, so on such lists
// this is the decoder's tie rule.
std::size_t select_best(std::span<const NBestEntry> entries, const ScoreWeights& weights);

// One selection per group, in group order.
std::vector<NBestEntry> rerank(std::span<const std::vector<NBestEntry>> groups,
                               const ScoreWeights& weights);

struct TuneConfig {
  int trials = 200;
  std::uint64_t seed = 1;
  double weight_min = 0.0;
  double weight_max = 3.0;
  double reward_min = -1.0;
  double reward_max = 1.0;
  int refine_rounds = 3;
  FeatureSet features;

  void validate() const;
};

struct TuneResult {
  ScoreWeights weights;
  double bleu = 0.0;
  std::size_t evaluations = 0;
};

// Corpus BLEU of the reranker's selections. `references` is indexed by
// sentence id.
double rerank_bleu(std::span<const std::vector<NBestEntry>> groups,
                   std::span<const Sentence> references, const ScoreWeights& weights);

// Seeded random search over the active weights (trial 0 is direct-only), then
// coordinate refinement with halving steps. Returns the best dev BLEU seen.
TuneResult tune(std::span<const std::vector<NBestEntry>> groups,
                std::span<const Sentence> references, const TuneConfig& cfg);

struct PrefixRerankResult {
  std::vector<NBestEntry> selections;  // full, untruncated candidates
  double bleu = 0.0;
};

// Recomputes features on truncated candidates/sources, reranks, and scores
// the full selected candidates.
PrefixRerankResult prefix_rerank(std::span<const std::vector<NBestEntry>> groups,
                                 std::span<const TokenSequence> sources,
                                 std::span<const Sentence> references,
                                 const Vocabulary& target_vocab, const FeatureScorers& scorers,
                                 const PrefixSpec& spec, const ScoreWeights& weights,
                                 int jobs = 1);

// Weights file: one `name=value` per line, `#` comments allowed.
ScoreWeights read_weights(const std::filesystem::path& path);
void write_weights(const std::filesystem::path& path, const ScoreWeights& weights);
std::string format_weights(const ScoreWeights& weights);
ScoreWeights parse_weights(std::string_view text);

}  // namespace nc
