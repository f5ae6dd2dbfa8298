#include "noisychannel/decoder/decoder.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "noisychannel/core/error.h"

namespace nc {

std::size_t DecoderConfig::max_target_len(std::size_t source_len) const {
  if (max_len > 0) return static_cast<std::size_t>(max_len);
  const double n = std::floor(max_len_ratio * static_cast<double>(source_len)) + max_len_slack;
  return std::max<std::size_t>(1, static_cast<std::size_t>(n));
}

void DecoderConfig::validate() const {
  if (k1 < 1) throw ArgumentError("k1 must be >= 1");
  if (k2 < 1) throw ArgumentError("k2 must be >= 1");
  if (!(lambda1 >= 0.0) || !std::isfinite(lambda1))
    throw ArgumentError("lambda1 must be finite and >= 0");
  if (!std::isfinite(word_reward)) throw ArgumentError("word_reward must be finite");
  if (!(max_len_ratio >= 0.0) || !std::isfinite(max_len_ratio))
    throw ArgumentError("max_len_ratio must be finite and >= 0");
  if (max_len_slack < 0) throw ArgumentError("max_len_slack must be >= 0");
  if (max_len < 0) throw ArgumentError("max_len must be >= 0");
}

double combine(double direct_sum, double channel_sum, double lm_sum, std::size_t t, std::size_t s,
               const DecoderConfig& cfg) {
  if (t == 0 || s == 0) throw ArgumentError("empty prefix/source");
  const double td = static_cast<double>(t);
  if (cfg.per_word)
    return direct_sum / td + (cfg.lambda1 / static_cast<double>(s)) * (channel_sum + lm_sum) +
           cfg.word_reward * td;
  return direct_sum + cfg.lambda1 * (channel_sum + lm_sum) + cfg.word_reward * td;
}

bool better_hypothesis(const Hypothesis& a, const Hypothesis& b) {
  if (a.combined != b.combined) return a.combined > b.combined;
  if (a.direct_sum != b.direct_sum) return a.direct_sum > b.direct_sum;
  return a.target < b.target;
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct ChannelStage {
  const ChannelScorer* channel;
  const LanguageModel* lm;
};

// Content length the hypothesis is normalized by; EOS never counts.
std::size_t content_length(const Hypothesis& h) { return h.target.size(); }

// Largest combined score any completion of `h` can reach, assuming every
// model returns log probabilities (<= 0).
double upper_bound(const Hypothesis& h, std::size_t s, std::size_t max_t, const DecoderConfig& cfg,
                   bool with_lm) {
  const double t_lo = static_cast<double>(std::max<std::size_t>(content_length(h), 1));
  const double t_hi = static_cast<double>(max_t);
  const double reward = std::max(cfg.word_reward * t_lo, cfg.word_reward * t_hi);
  const double lm = with_lm ? h.lm_sum : 0.0;
  if (cfg.per_word)
    return h.direct_sum / t_hi + (cfg.lambda1 / static_cast<double>(s)) * lm + reward;
  return h.direct_sum + cfg.lambda1 * lm + reward;
}

void check_finite(double v, const char* scorer) {
  if (!std::isfinite(v))
    throw DataError(std::string(scorer) + " scorer returned a non-finite score");
}

std::vector<Hypothesis> run_search(const TokenSequence& source, const DirectScorer& direct,
                                   const ChannelStage* stage, const DecoderConfig& cfg) {
  cfg.validate();
  if (source.empty()) throw ArgumentError("empty source");

  const std::size_t s = source.size();
  const std::size_t max_t = cfg.max_target_len(s);
  const std::size_t vocab = direct.vocab_size();
  const std::size_t k1 = static_cast<std::size_t>(cfg.k1);
  const std::size_t k2 = static_cast<std::size_t>(cfg.k2);

  DecoderConfig direct_only = cfg;
  direct_only.lambda1 = 0.0;

  std::vector<Hypothesis> live(1);
  std::vector<Hypothesis> finished;

  while (!live.empty()) {
    std::vector<TokenSequence> prefixes;
    prefixes.reserve(live.size());
    for (const auto& h : live) prefixes.push_back(h.target);
    const auto dists = direct.next_logprobs_batch(source, prefixes);
    if (dists.size() != live.size()) throw DataError("direct scorer returned a wrong batch size");

    std::vector<Hypothesis> pool;
    for (std::size_t i = 0; i < live.size(); ++i) {
      const Hypothesis& h = live[i];
      const auto& dist = dists[i];
      if (dist.size() != vocab) throw DataError("direct scorer returned a wrong-sized distribution");
      const std::size_t t = content_length(h);

      std::vector<Hypothesis> local;
      for (std::size_t w = 1; w < vocab; ++w) {
        const double lp = dist[w];
        if (std::isnan(lp) || lp == std::numeric_limits<double>::infinity())
          throw DataError("direct scorer returned a non-finite score");
        if (lp == kNegInf) continue;
        const bool eos = static_cast<TokenId>(w) == kEos;
        if (eos && t == 0) continue;
        if (!eos && t >= max_t) continue;

        Hypothesis c;
        c.target = h.target;
        if (!eos) c.target.push_back(static_cast<TokenId>(w));
        c.finished = eos;
        c.direct_sum = h.direct_sum + lp;
        c.combined = combine(c.direct_sum, 0.0, 0.0, content_length(c), s, direct_only);
        local.push_back(std::move(c));
      }
      if (stage && local.size() > k2) {
        std::partial_sort(local.begin(), local.begin() + static_cast<std::ptrdiff_t>(k2),
                          local.end(), better_hypothesis);
        local.resize(k2);
      }
      for (auto& c : local) pool.push_back(std::move(c));
    }

    if (stage && !pool.empty()) {
      std::vector<TokenSequence> channel_in, lm_in;
      channel_in.reserve(pool.size());
      lm_in.reserve(pool.size());
      for (const auto& c : pool) {
        channel_in.push_back(c.target);
        lm_in.push_back(c.target);
        if (c.finished) lm_in.back().push_back(kEos);
      }
      const auto ch = stage->channel->score_batch(source, channel_in);
      const auto lm = stage->lm->prefix_logprob_batch(lm_in);
      if (ch.size() != pool.size()) throw DataError("channel scorer returned a wrong batch size");
      if (lm.size() != pool.size()) throw DataError("lm scorer returned a wrong batch size");
      for (std::size_t i = 0; i < pool.size(); ++i) {
        check_finite(ch[i], "channel");
        check_finite(lm[i], "lm");
        auto& c = pool[i];
        c.channel_sum = ch[i];
        c.lm_sum = lm[i];
        c.combined = combine(c.direct_sum, c.channel_sum, c.lm_sum, content_length(c), s, cfg);
      }
    }

    const std::size_t keep = std::min(k1, pool.size());
    std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(keep), pool.end(),
                      better_hypothesis);
    pool.resize(keep);

    live.clear();
    for (auto& c : pool) (c.finished ? finished : live).push_back(std::move(c));

    if (finished.size() >= k1 && !live.empty()) {
      std::nth_element(finished.begin(), finished.begin() + static_cast<std::ptrdiff_t>(k1 - 1),
                       finished.end(), better_hypothesis);
      const double kth = finished[k1 - 1].combined;
      double best_live = kNegInf;
      for (const auto& h : live)
        best_live = std::max(best_live, upper_bound(h, s, max_t, cfg, stage != nullptr));
      if (kth > best_live) break;
    }
  }

  std::sort(finished.begin(), finished.end(), better_hypothesis);
  if (finished.size() > k1) finished.resize(k1);
  return finished;
}

}  // namespace

std::vector<Hypothesis> beam_search_direct(const TokenSequence& source, const DirectScorer& direct,
                                           const DecoderConfig& cfg) {
  return run_search(source, direct, nullptr, cfg);
}

std::vector<Hypothesis> noisy_channel_beam_search(const TokenSequence& source,
                                                  const NoisyChannelScorers& scorers,
                                                  const DecoderConfig& cfg) {
  ChannelStage stage{&scorers.channel, &scorers.lm};
  return run_search(source, scorers.direct, &stage, cfg);
}

std::vector<NBestEntry> to_nbest(std::span<const Hypothesis> hyps, std::int64_t sentence_id,
                                 const Vocabulary& target_vocab, bool with_noisy_features) {
  std::vector<NBestEntry> out;
  out.reserve(hyps.size());
  for (const auto& h : hyps) {
    NBestEntry e;
    e.sentence_id = sentence_id;
    e.tokens = target_vocab.decode(h.target);
    e.features[feature::kDirect] = h.direct_sum;
    if (with_noisy_features) {
      e.features[feature::kChannel] = h.channel_sum;
      e.features[feature::kLm] = h.lm_sum;
    }
    e.total = h.combined;
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace nc
