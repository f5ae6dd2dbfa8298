#include "noisychannel/core/vocabulary.h"

#include <algorithm>
#include <fstream>
#include <map>

#include "noisychannel/core/error.h"

namespace nc {

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{kBosToken, kEosToken, kUnkToken}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < 3 || tokens_[0] != kBosToken || tokens_[1] != kEosToken ||
      tokens_[2] != kUnkToken)
    throw DataError("vocabulary must start with " + std::string(kBosToken) + ", " + kEosToken +
                    ", " + kUnkToken);
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second)
      throw DataError("duplicate vocabulary token '" + tokens_[i] + "'");
  }
}

bool is_reserved_token(std::string_view token) {
  return token == Vocabulary::kBosToken || token == Vocabulary::kEosToken ||
         token == Vocabulary::kUnkToken;
}

Vocabulary Vocabulary::build(std::span<const Sentence> corpus, int min_count) {
  if (corpus.empty()) throw ArgumentError("empty corpus");
  if (min_count < 1) throw ArgumentError("min_count must be >= 1");

  std::map<std::string, long long> counts;
  for (const auto& sentence : corpus)
    for (const auto& tok : sentence)
      if (!is_reserved_token(tok)) ++counts[tok];

  std::vector<std::pair<std::string, long long>> kept;
  for (auto& [tok, n] : counts)
    if (n >= min_count) kept.emplace_back(tok, n);
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  std::vector<std::string> tokens = {kBosToken, kEosToken, kUnkToken};
  for (auto& [tok, n] : kept) tokens.push_back(tok);
  return from_tokens(std::move(tokens));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  return Vocabulary(std::move(tokens));
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) throw DataError("empty line in vocabulary " + path.string());
    tokens.push_back(line);
  }
  return from_tokens(std::move(tokens));
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write vocabulary " + path.string());
  for (const auto& tok : tokens_) out << tok << '\n';
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw ArgumentError("token id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

TokenSequence Vocabulary::encode(std::span<const std::string> sentence) const {
  TokenSequence ids;
  ids.reserve(sentence.size());
  for (const auto& tok : sentence) ids.push_back(is_reserved_token(tok) ? kUnk : id(tok));
  return ids;
}

Sentence Vocabulary::decode(std::span<const TokenId> ids) const {
  Sentence out;
  out.reserve(ids.size());
  for (TokenId i : ids) out.push_back(token(i));
  return out;
}

Sentence split_tokens(std::string_view line) {
  Sentence out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string join_tokens(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

std::vector<Sentence> read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus " + path.string());
  std::vector<Sentence> corpus;
  std::string line;
  while (std::getline(in, line)) corpus.push_back(split_tokens(line));
  return corpus;
}

void write_corpus(const std::filesystem::path& path, std::span<const Sentence> corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write corpus " + path.string());
  for (const auto& s : corpus) out << join_tokens(s) << '\n';
}

}  // namespace nc
