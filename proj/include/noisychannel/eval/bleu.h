#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>

namespace nc {

inline constexpr int kBleuOrder = 4;

// Sufficient statistics for corpus BLEU; additive across sentences.
struct BleuStats {
  std::array<std::int64_t, kBleuOrder> matches{};
  std::array<std::int64_t, kBleuOrder> totals{};
  std::int64_t hyp_len = 0;
  std::int64_t ref_len = 0;
  std::int64_t sentences = 0;

  BleuStats& operator+=(const BleuStats& other);
  friend BleuStats operator+(BleuStats a, const BleuStats& b) { return a += b; }
  bool operator==(const BleuStats&) const = default;
};

// Clipped n-gram matches (n = 1..4) of one hypothesis against one reference.
BleuStats sentence_stats(std::span<const std::string> hyp, std::span<const std::string> ref);

void accumulate(BleuStats& stats, std::span<const std::string> hyp,
                std::span<const std::string> ref);

// Modified n-gram precision per order; 0 where the order has no candidates.
std::array<double, kBleuOrder> precisions(const BleuStats& stats);

double brevity_penalty(const BleuStats& stats);

// 100 * BP * exp(mean log p_n); any zero precision gives 0. Throws if no
// sentence was accumulated.
double bleu(const BleuStats& stats);

}  // namespace nc
