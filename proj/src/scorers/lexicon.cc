#include "noisychannel/scorers/lexicon.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "noisychannel/core/error.h"

namespace nc {
namespace {

constexpr const char* kMagic = "nclex";
constexpr int kFormatVersion = 1;
constexpr const char* kNullToken = "<null>";
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct OrientedPair {
  const TokenSequence* cond;
  const TokenSequence* emit;
};

std::vector<OrientedPair> orient(std::span<const SentencePair> corpus, Direction d) {
  std::vector<OrientedPair> out;
  out.reserve(corpus.size());
  for (const auto& p : corpus) {
    if (d == Direction::kSourceToTarget)
      out.push_back({&p.source, &p.target});
    else
      out.push_back({&p.target, &p.source});
  }
  return out;
}

void check_ids(std::span<const TokenId> ids, std::size_t vocab_size, const char* what) {
  for (TokenId id : ids)
    if (id < kFirstContentId || static_cast<std::size_t>(id) >= vocab_size)
      throw ArgumentError(std::string("invalid ") + what + " token id " + std::to_string(id));
}

std::string format_prob(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

const char* direction_name(Direction d) {
  return d == Direction::kSourceToTarget ? "source-to-target" : "target-to-source";
}

Direction parse_direction(std::string_view name) {
  if (name == "source-to-target") return Direction::kSourceToTarget;
  if (name == "target-to-source") return Direction::kTargetToSource;
  throw DataError("unknown lexicon direction '" + std::string(name) + "'");
}

LexiconTable::LexiconTable(Direction direction, std::size_t cond_vocab_size,
                           std::size_t emit_vocab_size, double length_ratio)
    : direction_(direction),
      cond_size_(cond_vocab_size),
      emit_size_(emit_vocab_size),
      length_ratio_(length_ratio) {
  if (cond_size_ < 3 || emit_size_ < 3) throw ArgumentError("lexicon vocabularies too small");
  if (!(length_ratio > 0.0) || !std::isfinite(length_ratio))
    throw ArgumentError("length ratio must be positive");
  const double uniform = 1.0 / static_cast<double>(emit_size_ - 2);
  table_.assign(cond_size_ * emit_size_, 0.0);
  for (std::size_t c = 0; c < cond_size_; ++c)
    for (std::size_t e = 2; e < emit_size_; ++e) table_[c * emit_size_ + e] = uniform;
}

std::size_t LexiconTable::index(TokenId cond, TokenId emit) const {
  if (cond < 0 || static_cast<std::size_t>(cond) >= cond_size_)
    throw ArgumentError("conditioning token id " + std::to_string(cond) + " out of range");
  if (emit < 0 || static_cast<std::size_t>(emit) >= emit_size_)
    throw ArgumentError("emitted token id " + std::to_string(emit) + " out of range");
  return static_cast<std::size_t>(cond) * emit_size_ + static_cast<std::size_t>(emit);
}

double LexiconTable::prob(TokenId cond, TokenId emit) const { return table_[index(cond, emit)]; }

void LexiconTable::set_prob(TokenId cond, TokenId emit, double p) {
  if (emit < kFirstContentId) throw ArgumentError("only content tokens carry lexical mass");
  if (!(p >= 0.0) || !std::isfinite(p)) throw ArgumentError("probability must be finite and >= 0");
  table_[index(cond, emit)] = p;
}

void LexiconTable::normalize_rows() {
  for (std::size_t c = 0; c < cond_size_; ++c) {
    double* row = table_.data() + c * emit_size_;
    double sum = std::accumulate(row + 2, row + emit_size_, 0.0);
    if (!(sum > 0.0)) throw ArgumentError("lexicon row with zero mass");
    for (std::size_t e = 2; e < emit_size_; ++e) row[e] /= sum;
  }
}

double LexiconTable::mixture(std::span<const TokenId> cond, TokenId emit) const {
  double sum = prob(kNull, emit);
  for (TokenId c : cond) sum += prob(c, emit);
  return sum / static_cast<double>(cond.size() + 1);
}

double LexiconTable::stop_probability(std::size_t in_len) const {
  double q = 1.0 / (length_ratio_ * static_cast<double>(in_len));
  return std::clamp(q, kLengthClamp, 1.0 - kLengthClamp);
}

double LexiconTable::continuation_prob(std::size_t in_len, std::size_t out_len) const {
  if (out_len == 0) return 1.0;
  return 1.0 - stop_probability(in_len);
}

double LexiconTable::length_logprob(std::size_t in_len, std::size_t out_len) const {
  if (out_len == 0) return kNegInf;
  const double q = stop_probability(in_len);
  return std::log(q) + static_cast<double>(out_len - 1) * std::log1p(-q);
}

void LexiconTable::save(const std::filesystem::path& path, const Vocabulary& cond_vocab,
                        const Vocabulary& emit_vocab) const {
  if (cond_vocab.size() != cond_size_ || emit_vocab.size() != emit_size_)
    throw ArgumentError("vocabularies do not match lexicon");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write lexicon " + path.string());
  out << kMagic << ' ' << kFormatVersion << '\n';
  out << "direction " << direction_name(direction_) << '\n';
  out << "length_ratio " << format_prob(length_ratio_) << '\n';
  out << "cond_vocab_size " << cond_size_ << '\n';
  out << "emit_vocab_size " << emit_size_ << '\n';
  for (std::size_t c = 0; c < cond_size_; ++c) {
    if (c == static_cast<std::size_t>(kEos)) continue;
    const std::string& cond_tok =
        c == static_cast<std::size_t>(kNull) ? std::string(kNullToken)
                                             : cond_vocab.token(static_cast<TokenId>(c));
    for (std::size_t e = 2; e < emit_size_; ++e)
      out << cond_tok << ' ' << emit_vocab.token(static_cast<TokenId>(e)) << ' '
          << format_prob(table_[c * emit_size_ + e]) << '\n';
  }
}

LexiconTable LexiconTable::load(const std::filesystem::path& path, const Vocabulary& cond_vocab,
                                const Vocabulary& emit_vocab) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open lexicon " + path.string());
  auto fail = [&](const std::string& what) {
    return DataError("bad lexicon " + path.string() + ": " + what);
  };

  std::string magic, key, dir;
  int version = 0;
  double ratio = 0.0;
  std::size_t cond_size = 0, emit_size = 0;
  if (!(in >> magic >> version) || magic != kMagic) throw fail("missing header");
  if (version != kFormatVersion) throw fail("unsupported version " + std::to_string(version));
  if (!(in >> key >> dir) || key != "direction") throw fail("missing direction");
  if (!(in >> key >> ratio) || key != "length_ratio") throw fail("missing length_ratio");
  if (!(in >> key >> cond_size) || key != "cond_vocab_size") throw fail("missing cond_vocab_size");
  if (!(in >> key >> emit_size) || key != "emit_vocab_size") throw fail("missing emit_vocab_size");
  if (cond_size != cond_vocab.size() || emit_size != emit_vocab.size())
    throw fail("vocabulary size mismatch");

  LexiconTable lex(parse_direction(dir), cond_size, emit_size, ratio);
  std::vector<char> seen(lex.table_.size(), 0);
  std::string cond_tok, emit_tok, prob_str;
  while (in >> cond_tok >> emit_tok >> prob_str) {
    TokenId c = cond_tok == kNullToken ? kNull : cond_vocab.id(cond_tok);
    if (c != kNull && cond_vocab.token(c) != cond_tok)
      throw fail("unknown conditioning token '" + cond_tok + "'");
    TokenId e = emit_vocab.id(emit_tok);
    if (emit_vocab.token(e) != emit_tok || e < kFirstContentId)
      throw fail("bad emitted token '" + emit_tok + "'");
    char* end = nullptr;
    double p = std::strtod(prob_str.c_str(), &end);
    if (*end != '\0' || !(p > 0.0) || p > 1.0) throw fail("bad probability '" + prob_str + "'");
    lex.table_[lex.index(c, e)] = p;
    seen[lex.index(c, e)] = 1;
  }
  if (!in.eof()) throw fail("trailing garbage");
  for (std::size_t c = 0; c < cond_size; ++c) {
    if (c == static_cast<std::size_t>(kEos)) continue;
    double sum = 0.0;
    for (std::size_t e = 2; e < emit_size; ++e) {
      if (!seen[c * emit_size + e]) throw fail("missing table entries");
      sum += lex.table_[c * emit_size + e];
    }
    if (std::abs(sum - 1.0) > 1e-9) throw fail("row does not sum to one");
  }
  return lex;
}

LexiconTable train_lexicon_em(std::span<const SentencePair> corpus,
                              const LexiconTrainOptions& options,
                              std::vector<double>* log_likelihoods) {
  if (corpus.empty()) throw ArgumentError("empty corpus");
  if (options.iterations < 1) throw ArgumentError("EM iterations must be >= 1");

  const bool s2t = options.direction == Direction::kSourceToTarget;
  const std::size_t cond_size = s2t ? options.source_vocab_size : options.target_vocab_size;
  const std::size_t emit_size = s2t ? options.target_vocab_size : options.source_vocab_size;

  auto pairs = orient(corpus, options.direction);
  std::size_t cond_tokens = 0, emit_tokens = 0;
  for (const auto& p : pairs) {
    check_ids(*p.cond, cond_size, "conditioning");
    check_ids(*p.emit, emit_size, "emitted");
    cond_tokens += p.cond->size();
    emit_tokens += p.emit->size();
  }
  const double ratio = cond_tokens == 0 || emit_tokens == 0
                           ? 1.0
                           : static_cast<double>(emit_tokens) / static_cast<double>(cond_tokens);

  std::mt19937_64 rng(options.seed);
  std::shuffle(pairs.begin(), pairs.end(), rng);

  LexiconTable lex(options.direction, cond_size, emit_size, ratio);
  std::vector<double> counts(cond_size * emit_size);
  std::vector<double> totals(cond_size);
  if (log_likelihoods) log_likelihoods->clear();

  auto e_step = [&](bool accumulate) {
    double ll = 0.0;
    for (const auto& p : pairs) {
      const auto& cond = *p.cond;
      const double norm = static_cast<double>(cond.size() + 1);
      for (TokenId e : *p.emit) {
        double denom = lex.prob(LexiconTable::kNull, e);
        for (TokenId c : cond) denom += lex.prob(c, e);
        ll += std::log(denom / norm);
        if (!accumulate) continue;
        auto add = [&](TokenId c) {
          const double post = lex.prob(c, e) / denom;
          counts[static_cast<std::size_t>(c) * emit_size + static_cast<std::size_t>(e)] += post;
          totals[static_cast<std::size_t>(c)] += post;
        };
        add(LexiconTable::kNull);
        for (TokenId c : cond) add(c);
      }
    }
    return ll;
  };

  for (int it = 0; it < options.iterations; ++it) {
    std::fill(counts.begin(), counts.end(), 0.0);
    std::fill(totals.begin(), totals.end(), 0.0);
    double ll = e_step(true);
    if (log_likelihoods) log_likelihoods->push_back(ll);
    for (std::size_t c = 0; c < cond_size; ++c) {
      if (totals[c] <= 0.0) continue;
      for (std::size_t e = 2; e < emit_size; ++e)
        lex.set_prob(static_cast<TokenId>(c), static_cast<TokenId>(e),
                     counts[c * emit_size + e] / totals[c]);
    }
  }
  if (log_likelihoods) log_likelihoods->push_back(e_step(false));

  for (std::size_t c = 0; c < cond_size; ++c)
    for (std::size_t e = 2; e < emit_size; ++e)
      lex.set_prob(static_cast<TokenId>(c), static_cast<TokenId>(e),
                   lex.prob(static_cast<TokenId>(c), static_cast<TokenId>(e)) +
                       LexiconTable::kProbFloor);
  lex.normalize_rows();
  // EOS never conditions anything; keep its row as constructed so that
  // trained and reloaded tables compare equal.
  const double uniform = 1.0 / static_cast<double>(emit_size - 2);
  for (std::size_t e = 2; e < emit_size; ++e) lex.set_prob(kEos, static_cast<TokenId>(e), uniform);
  return lex;
}

ParallelCorpus expand_target_prefixes(std::span<const SentencePair> corpus) {
  ParallelCorpus out;
  for (const auto& p : corpus)
    for (std::size_t k = 1; k <= p.target.size(); ++k)
      out.push_back({p.source, TokenSequence(p.target.begin(),
                                             p.target.begin() + static_cast<std::ptrdiff_t>(k))});
  return out;
}

LexiconTable train_prefix_channel(std::span<const SentencePair> corpus,
                                  const LexiconTrainOptions& options,
                                  std::vector<double>* log_likelihoods) {
  if (corpus.empty()) throw ArgumentError("empty corpus");
  LexiconTrainOptions opts = options;
  opts.direction = Direction::kTargetToSource;
  ParallelCorpus expanded = expand_target_prefixes(corpus);
  if (expanded.empty()) throw ArgumentError("corpus has no target tokens");
  return train_lexicon_em(expanded, opts, log_likelihoods);
}

std::vector<double> mixture_next_logprobs(const LexiconTable& lex, std::span<const TokenId> cond,
                                          double continuation) {
  std::vector<double> out(lex.emit_vocab_size());
  out[kBos] = kNegInf;
  out[kEos] = std::log(1.0 - continuation);
  for (std::size_t e = 2; e < out.size(); ++e)
    out[e] = std::log(continuation * lex.mixture(cond, static_cast<TokenId>(e)));
  return out;
}

LexiconDirectScorer::LexiconDirectScorer(std::shared_ptr<const LexiconTable> lex)
    : lex_(std::move(lex)) {
  if (lex_->direction() != Direction::kSourceToTarget)
    throw ArgumentError("direct scorer needs a source-to-target lexicon");
}

std::vector<double> LexiconDirectScorer::next_logprobs(const TokenSequence& source,
                                                       const TokenSequence& prefix) const {
  check_ids(source, lex_->cond_vocab_size(), "source");
  return mixture_next_logprobs(*lex_, source,
                               lex_->continuation_prob(source.size(), prefix.size()));
}

double channel_score(const LexiconTable& lex, const TokenSequence& source,
                     const TokenSequence& target_prefix) {
  if (lex.direction() != Direction::kTargetToSource)
    throw ArgumentError("channel score needs a target-to-source lexicon");
  check_ids(target_prefix, lex.cond_vocab_size(), "target");
  double sum = 0.0;
  for (TokenId x : source) sum += std::log(lex.mixture(target_prefix, x));
  return sum + lex.length_logprob(target_prefix.size(), source.size());
}

LexiconChannelScorer::LexiconChannelScorer(std::shared_ptr<const LexiconTable> lex)
    : lex_(std::move(lex)) {
  if (lex_->direction() != Direction::kTargetToSource)
    throw ArgumentError("channel scorer needs a target-to-source lexicon");
}

}  // namespace nc
