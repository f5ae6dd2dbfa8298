#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <vector>

#include "noisychannel/core/types.h"
#include "noisychannel/core/vocabulary.h"
#include "noisychannel/scorers/scorer.h"

namespace nc {

// Add-alpha smoothed n-gram counts with fixed linear interpolation:
//
//   p_k(w | c) = 0.7 * (count(c, w) + alpha) / (count(c) + alpha * |V|) + 0.3 * p_{k-1}(w | c')
//
// where c' drops the oldest token of c. A context never seen in training backs
// off to p_{k-1} entirely. |V| counts every id except BOS (EOS and UNK are
// predictable). Histories are left-padded with BOS to order - 1 tokens.
class NGramTable {
 public:
  static constexpr double kHigherOrderWeight = 0.7;

  NGramTable(int order, double alpha, std::size_t vocab_size);

  static NGramTable train(std::span<const TokenSequence> corpus, int order, double alpha,
                          std::size_t vocab_size);

  // `context` holds up to order - 1 ids (BOS-padded by the caller if needed).
  void add_count(std::span<const TokenId> context, TokenId next, std::int64_t count = 1);
  // Counts every n-gram of <s>^(n-1) y </s> at every order.
  void add_sentence(const TokenSequence& sentence);

  int order() const { return order_; }
  double alpha() const { return alpha_; }
  std::size_t vocab_size() const { return vocab_size_; }
  std::size_t predictable_size() const { return vocab_size_ - 1; }

  double prob(std::span<const TokenId> history, TokenId next) const;
  std::vector<double> next_logprobs(std::span<const TokenId> history) const;
  // Sum of stepwise log probabilities over `sequence`, which may end in EOS.
  double prefix_logprob(std::span<const TokenId> sequence) const;
  // log p(y) including EOS.
  double sequence_logprob(const TokenSequence& sentence) const;

  void save(const std::filesystem::path& path, const Vocabulary& vocab) const;
  static NGramTable load(const std::filesystem::path& path, const Vocabulary& vocab);

  bool operator==(const NGramTable&) const = default;

 private:
  struct ContextCounts {
    std::int64_t total = 0;
    std::map<TokenId, std::int64_t> next;
    bool operator==(const ContextCounts&) const = default;
  };

  // counts_[k] holds contexts of length k (k = 0 .. order - 1).
  const ContextCounts* find(std::size_t length, std::span<const TokenId> padded_history) const;
  // Observed contexts of every length for `history`; null where unseen.
  std::vector<const ContextCounts*> contexts(std::span<const TokenId> history) const;
  double prob_in(const std::vector<const ContextCounts*>& contexts, TokenId next) const;

  int order_;
  double alpha_;
  std::size_t vocab_size_;
  std::vector<std::map<TokenSequence, ContextCounts>> counts_;
};

class NGramLanguageModel : public LanguageModel {
 public:
  explicit NGramLanguageModel(std::shared_ptr<const NGramTable> table)
      : table_(std::move(table)) {}
  double prefix_logprob(const TokenSequence& sequence) const override {
    return table_->prefix_logprob(sequence);
  }
  const NGramTable& table() const { return *table_; }

 private:
  std::shared_ptr<const NGramTable> table_;
};

}  // namespace nc
