#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "noisychannel/core/types.h"

namespace nc {

using Sentence = std::vector<std::string>;

// Dense token <-> id map. Ids 0, 1, 2 are BOS, EOS and UNK.
class Vocabulary {
 public:
  static constexpr const char* kBosToken = "<s>";
  static constexpr const char* kEosToken = "</s>";
  static constexpr const char* kUnkToken = "<unk>";

  // Vocabulary holding only the reserved symbols.
  Vocabulary();

  // Keeps tokens with count >= min_count, ordered by descending count and
  // then lexicographically. Reserved symbol strings in the corpus are not
  // counted.
  static Vocabulary build(std::span<const Sentence> corpus, int min_count);

  // `tokens` must start with the three reserved symbols.
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t size() const { return tokens_.size(); }

  // Exact lookup; unknown strings give UNK.
  TokenId id(std::string_view token) const;
  const std::string& token(TokenId id) const;

  // Corpus encoding: unknown strings and reserved symbol strings give UNK.
  TokenSequence encode(std::span<const std::string> sentence) const;
  Sentence decode(std::span<const TokenId> ids) const;

  const std::vector<std::string>& tokens() const { return tokens_; }

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  explicit Vocabulary(std::vector<std::string> tokens);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

bool is_reserved_token(std::string_view token);

// Whitespace tokenization of one line.
Sentence split_tokens(std::string_view line);
std::string join_tokens(std::span<const std::string> tokens);

std::vector<Sentence> read_corpus(const std::filesystem::path& path);
void write_corpus(const std::filesystem::path& path, std::span<const Sentence> corpus);

}  // namespace nc
