#include "noisychannel/eval/bleu.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "noisychannel/core/error.h"

namespace nc {
namespace {

using NGram = std::vector<std::string_view>;

std::map<NGram, std::int64_t> ngram_counts(std::span<const std::string> tokens, std::size_t n) {
  std::map<NGram, std::int64_t> counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    NGram g;
    g.reserve(n);
    for (std::size_t j = 0; j < n; ++j) g.push_back(tokens[i + j]);
    ++counts[g];
  }
  return counts;
}

}  // namespace

BleuStats& BleuStats::operator+=(const BleuStats& other) {
  for (int n = 0; n < kBleuOrder; ++n) {
    matches[n] += other.matches[n];
    totals[n] += other.totals[n];
  }
  hyp_len += other.hyp_len;
  ref_len += other.ref_len;
  sentences += other.sentences;
  return *this;
}

BleuStats sentence_stats(std::span<const std::string> hyp, std::span<const std::string> ref) {
  BleuStats s;
  s.hyp_len = static_cast<std::int64_t>(hyp.size());
  s.ref_len = static_cast<std::int64_t>(ref.size());
  s.sentences = 1;
  for (int n = 1; n <= kBleuOrder; ++n) {
    const auto h = ngram_counts(hyp, static_cast<std::size_t>(n));
    const auto r = ngram_counts(ref, static_cast<std::size_t>(n));
    std::int64_t total = 0, match = 0;
    for (const auto& [g, c] : h) {
      total += c;
      auto it = r.find(g);
      if (it != r.end()) match += std::min(c, it->second);
    }
    s.totals[n - 1] = total;
    s.matches[n - 1] = match;
  }
  return s;
}

void accumulate(BleuStats& stats, std::span<const std::string> hyp,
                std::span<const std::string> ref) {
  stats += sentence_stats(hyp, ref);
}

std::array<double, kBleuOrder> precisions(const BleuStats& stats) {
  std::array<double, kBleuOrder> p{};
  for (int n = 0; n < kBleuOrder; ++n)
    p[n] = stats.totals[n] == 0
               ? 0.0
               : static_cast<double>(stats.matches[n]) / static_cast<double>(stats.totals[n]);
  return p;
}

double brevity_penalty(const BleuStats& stats) {
  if (stats.hyp_len == 0) return 0.0;
  if (stats.hyp_len >= stats.ref_len) return 1.0;
  return std::exp(1.0 - static_cast<double>(stats.ref_len) / static_cast<double>(stats.hyp_len));
}

double bleu(const BleuStats& stats) {
  if (stats.sentences == 0) throw ArgumentError("empty corpus");
  const auto p = precisions(stats);
  double log_sum = 0.0;
  for (double pn : p) {
    if (pn <= 0.0) return 0.0;
    log_sum += std::log(pn);
  }
  return 100.0 * brevity_penalty(stats) * std::exp(log_sum / kBleuOrder);
}

}  // namespace nc
