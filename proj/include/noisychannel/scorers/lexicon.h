#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "noisychannel/core/types.h"
#include "noisychannel/core/vocabulary.h"
#include "noisychannel/scorers/scorer.h"

namespace nc {

enum class Direction { kSourceToTarget, kTargetToSource };

const char* direction_name(Direction d);
Direction parse_direction(std::string_view name);

// Lexical translation table t(emit | cond) with a NULL conditioning symbol and
// a geometric length model p(m | n) = q (1 - q)^(m - 1), q = 1 / (ratio * n)
// clamped to (0, 1).
//
// Conditioning ids and emitted ids live in separate vocabularies. Row 0 of the
// table (the BOS slot, which never conditions anything) holds NULL. Emitted
// tokens are UNK and content ids; EOS is produced by the length model.
class LexiconTable {
 public:
  static constexpr TokenId kNull = kBos;
  static constexpr double kLengthClamp = 1e-6;
  static constexpr double kProbFloor = 1e-6;

  // Uniform table.
  LexiconTable(Direction direction, std::size_t cond_vocab_size, std::size_t emit_vocab_size,
               double length_ratio);

  Direction direction() const { return direction_; }
  std::size_t cond_vocab_size() const { return cond_size_; }
  std::size_t emit_vocab_size() const { return emit_size_; }
  double length_ratio() const { return length_ratio_; }

  double prob(TokenId cond, TokenId emit) const;
  void set_prob(TokenId cond, TokenId emit, double p);
  // Rescales every row to sum to one.
  void normalize_rows();

  // (1 / (|cond| + 1)) * (t(emit | NULL) + sum_i t(emit | cond_i)).
  double mixture(std::span<const TokenId> cond, TokenId emit) const;

  double stop_probability(std::size_t in_len) const;
  // Probability that the output continues after `out_len` tokens have been
  // emitted. Outputs are never empty, so this is 1 for out_len == 0.
  double continuation_prob(std::size_t in_len, std::size_t out_len) const;
  double length_logprob(std::size_t in_len, std::size_t out_len) const;

  void save(const std::filesystem::path& path, const Vocabulary& cond_vocab,
            const Vocabulary& emit_vocab) const;
  static LexiconTable load(const std::filesystem::path& path, const Vocabulary& cond_vocab,
                           const Vocabulary& emit_vocab);

  bool operator==(const LexiconTable&) const = default;

 private:
  std::size_t index(TokenId cond, TokenId emit) const;

  Direction direction_;
  std::size_t cond_size_;
  std::size_t emit_size_;
  double length_ratio_;
  std::vector<double> table_;
};

struct LexiconTrainOptions {
  Direction direction = Direction::kSourceToTarget;
  int iterations = 10;
  std::uint64_t seed = 1;
  std::size_t source_vocab_size = 0;
  std::size_t target_vocab_size = 0;
};

// IBM Model 1 EM from a uniform table. `log_likelihoods`, when given, receives
// the data log-likelihood before each iteration and after the last one
// (iterations + 1 values, non-decreasing). A probability floor is applied after
// the final iteration.
LexiconTable train_lexicon_em(std::span<const SentencePair> corpus,
                              const LexiconTrainOptions& options,
                              std::vector<double>* log_likelihoods = nullptr);

// Every pair (x, y) becomes the pairs (x, y_1..k) for k = 1..|y|.
ParallelCorpus expand_target_prefixes(std::span<const SentencePair> corpus);

// Channel model trained on all target prefixes paired with the full source.
LexiconTable train_prefix_channel(std::span<const SentencePair> corpus,
                                  const LexiconTrainOptions& options,
                                  std::vector<double>* log_likelihoods = nullptr);

// Next-token distribution over the emit vocabulary: EOS gets 1 - continuation,
// content tokens continuation * mixture, BOS -inf.
std::vector<double> mixture_next_logprobs(const LexiconTable& lex, std::span<const TokenId> cond,
                                          double continuation);

// Toy direct model backed by a source->target table.
class LexiconDirectScorer : public DirectScorer {
 public:
  explicit LexiconDirectScorer(std::shared_ptr<const LexiconTable> lex);

  std::size_t vocab_size() const override { return lex_->emit_vocab_size(); }
  std::vector<double> next_logprobs(const TokenSequence& source,
                                    const TokenSequence& prefix) const override;

  const LexiconTable& table() const { return *lex_; }

 private:
  std::shared_ptr<const LexiconTable> lex_;
};

// Full-source channel score: sum over every source position of
// log mixture(y_prefix, x_j), plus log p_len(|x| given |y_prefix|).
double channel_score(const LexiconTable& lex, const TokenSequence& source,
                     const TokenSequence& target_prefix);

class LexiconChannelScorer : public ChannelScorer {
 public:
  explicit LexiconChannelScorer(std::shared_ptr<const LexiconTable> lex);

  double score(const TokenSequence& source, const TokenSequence& target_prefix) const override {
    return channel_score(*lex_, source, target_prefix);
  }

  const LexiconTable& table() const { return *lex_; }

 private:
  std::shared_ptr<const LexiconTable> lex_;
};

}  // namespace nc
