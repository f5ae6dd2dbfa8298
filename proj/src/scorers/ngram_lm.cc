#include "noisychannel/scorers/ngram_lm.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "noisychannel/core/error.h"

namespace nc {
namespace {

constexpr const char* kMagic = "ncngram";
constexpr int kFormatVersion = 1;

}  // namespace

NGramTable::NGramTable(int order, double alpha, std::size_t vocab_size)
    : order_(order), alpha_(alpha), vocab_size_(vocab_size) {
  if (order < 1) throw ArgumentError("n-gram order must be >= 1");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ArgumentError("alpha must be > 0");
  if (vocab_size < 3) throw ArgumentError("vocabulary too small for an n-gram model");
  counts_.resize(static_cast<std::size_t>(order));
}

NGramTable NGramTable::train(std::span<const TokenSequence> corpus, int order, double alpha,
                             std::size_t vocab_size) {
  NGramTable table(order, alpha, vocab_size);
  for (const auto& s : corpus) table.add_sentence(s);
  return table;
}

void NGramTable::add_count(std::span<const TokenId> context, TokenId next, std::int64_t count) {
  if (context.size() >= static_cast<std::size_t>(order_))
    throw ArgumentError("context longer than order - 1");
  if (next <= kBos || static_cast<std::size_t>(next) >= vocab_size_)
    throw ArgumentError("n-gram token out of range");
  for (TokenId c : context)
    if (c < 0 || static_cast<std::size_t>(c) >= vocab_size_)
      throw ArgumentError("n-gram context token out of range");
  auto& ctx = counts_[context.size()][TokenSequence(context.begin(), context.end())];
  ctx.total += count;
  ctx.next[next] += count;
}

void NGramTable::add_sentence(const TokenSequence& sentence) {
  const std::size_t pad = static_cast<std::size_t>(order_ - 1);
  TokenSequence padded(pad, kBos);
  padded.insert(padded.end(), sentence.begin(), sentence.end());
  padded.push_back(kEos);
  for (std::size_t pos = pad; pos < padded.size(); ++pos) {
    for (std::size_t len = 0; len <= pad; ++len) {
      std::span<const TokenId> ctx(padded.data() + pos - len, len);
      add_count(ctx, padded[pos]);
    }
  }
}

const NGramTable::ContextCounts* NGramTable::find(std::size_t length,
                                                  std::span<const TokenId> padded_history) const {
  TokenSequence key(padded_history.end() - static_cast<std::ptrdiff_t>(length),
                    padded_history.end());
  const auto& table = counts_[length];
  auto it = table.find(key);
  if (it == table.end() || it->second.total == 0) return nullptr;
  return &it->second;
}

std::vector<const NGramTable::ContextCounts*> NGramTable::contexts(
    std::span<const TokenId> history) const {
  const std::size_t pad = static_cast<std::size_t>(order_ - 1);
  TokenSequence padded(pad, kBos);
  padded.insert(padded.end(), history.begin(), history.end());
  std::vector<const ContextCounts*> out(pad + 1);
  for (std::size_t len = 0; len <= pad; ++len) out[len] = find(len, padded);
  return out;
}

double NGramTable::prob_in(const std::vector<const ContextCounts*>& contexts, TokenId next) const {
  if (next == kBos) return 0.0;
  if (next < 0 || static_cast<std::size_t>(next) >= vocab_size_)
    throw ArgumentError("token id out of range for n-gram model");

  const double v = static_cast<double>(predictable_size());
  auto smoothed = [&](const ContextCounts* ctx) {
    double c = 0.0, total = 0.0;
    if (ctx) {
      total = static_cast<double>(ctx->total);
      auto it = ctx->next.find(next);
      if (it != ctx->next.end()) c = static_cast<double>(it->second);
    }
    return (c + alpha_) / (total + alpha_ * v);
  };

  double p = smoothed(contexts[0]);
  for (std::size_t len = 1; len < contexts.size(); ++len) {
    if (!contexts[len]) continue;
    p = kHigherOrderWeight * smoothed(contexts[len]) + (1.0 - kHigherOrderWeight) * p;
  }
  return p;
}

double NGramTable::prob(std::span<const TokenId> history, TokenId next) const {
  return prob_in(contexts(history), next);
}

std::vector<double> NGramTable::next_logprobs(std::span<const TokenId> history) const {
  const auto ctx = contexts(history);
  std::vector<double> out(vocab_size_);
  for (std::size_t w = 0; w < vocab_size_; ++w)
    out[w] = std::log(prob_in(ctx, static_cast<TokenId>(w)));
  return out;
}

double NGramTable::prefix_logprob(std::span<const TokenId> sequence) const {
  double sum = 0.0;
  for (std::size_t j = 0; j < sequence.size(); ++j)
    sum += std::log(prob(sequence.first(j), sequence[j]));
  return sum;
}

double NGramTable::sequence_logprob(const TokenSequence& sentence) const {
  TokenSequence with_eos = sentence;
  with_eos.push_back(kEos);
  return prefix_logprob(with_eos);
}

void NGramTable::save(const std::filesystem::path& path, const Vocabulary& vocab) const {
  if (vocab.size() != vocab_size_) throw ArgumentError("vocabulary does not match n-gram model");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write n-gram model " + path.string());
  char alpha_buf[64];
  std::snprintf(alpha_buf, sizeof alpha_buf, "%.17g", alpha_);
  out << kMagic << ' ' << kFormatVersion << '\n';
  out << "order " << order_ << '\n';
  out << "alpha " << alpha_buf << '\n';
  out << "vocab_size " << vocab_size_ << '\n';
  for (std::size_t len = 0; len < counts_.size(); ++len) {
    out << '\n' << '\\' << (len + 1) << "-grams:\n";
    for (const auto& [ctx, counts] : counts_[len]) {
      for (const auto& [w, n] : counts.next) {
        out << n;
        for (TokenId c : ctx) out << ' ' << vocab.token(c);
        out << ' ' << vocab.token(w) << '\n';
      }
    }
  }
  out << "\n\\end\\\n";
}

NGramTable NGramTable::load(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open n-gram model " + path.string());
  auto fail = [&](const std::string& what) -> void {
    throw DataError("bad n-gram model " + path.string() + ": " + what);
  };

  std::string magic, key;
  int version = 0, order = 0;
  double alpha = 0.0;
  std::size_t vocab_size = 0;
  if (!(in >> magic >> version) || magic != kMagic) fail("missing header");
  if (version != kFormatVersion) fail("unsupported version " + std::to_string(version));
  if (!(in >> key >> order) || key != "order") fail("missing order");
  if (!(in >> key >> alpha) || key != "alpha") fail("missing alpha");
  if (!(in >> key >> vocab_size) || key != "vocab_size") fail("missing vocab_size");
  if (vocab_size != vocab.size()) fail("vocabulary size mismatch");

  NGramTable table(order, alpha, vocab_size);
  std::string line;
  std::size_t current = 0;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line == "\\end\\") return table;
    if (line.front() == '\\') {
      std::size_t n = 0;
      if (std::sscanf(line.c_str(), "\\%zu-grams:", &n) != 1 || n < 1 ||
          n > static_cast<std::size_t>(order))
        fail("bad section header '" + line + "'");
      current = n;
      continue;
    }
    if (current == 0) fail("n-gram row outside a section");
    std::istringstream row(line);
    std::int64_t count = 0;
    if (!(row >> count) || count <= 0) fail("bad count in '" + line + "'");
    TokenSequence ids;
    std::string tok;
    while (row >> tok) {
      TokenId id = vocab.id(tok);
      if (vocab.token(id) != tok) fail("unknown token '" + tok + "'");
      ids.push_back(id);
    }
    if (ids.size() != current) fail("wrong arity in '" + line + "'");
    TokenId next = ids.back();
    ids.pop_back();
    table.add_count(ids, next, count);
  }
  fail("missing \\end\\ marker");
  return table;
}

}  // namespace nc
