// Acceptance harness: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Usage: acceptance [criterion numbers...]
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>

#include "noisychannel/bridge/client.h"
#include "noisychannel/bridge/server.h"
#include "noisychannel/core/error.h"
#include "noisychannel/core/nbest.h"
#include "noisychannel/core/parallel.h"
#include "noisychannel/decoder/decoder.h"
#include "noisychannel/eval/bleu.h"
#include "noisychannel/oracle/oracle.h"
#include "noisychannel/reranker/reranker.h"
#include "noisychannel/scorers/combinators.h"
#include "noisychannel/scorers/toy_models.h"
#include "noisychannel/synthetic/synthetic.h"
#include "test_util.h"

using namespace nc;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

bool same_hypotheses(const std::vector<Hypothesis>& a, const std::vector<Hypothesis>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].target != b[i].target || !same_bits(a[i].combined, b[i].combined) ||
        !same_bits(a[i].direct_sum, b[i].direct_sum))
      return false;
  return true;
}

double sum_exp(const std::vector<double>& lp) {
  double s = 0.0;
  for (double v : lp) s += std::exp(v);
  return s;
}

void for_each_sequence(std::size_t len, TokenId lo, TokenId hi, TokenSequence& cur,
                       const std::function<void(const TokenSequence&)>& fn) {
  if (cur.size() == len) {
    fn(cur);
    return;
  }
  for (TokenId t = lo; t <= hi; ++t) {
    cur.push_back(t);
    for_each_sequence(len, lo, hi, cur, fn);
    cur.pop_back();
  }
}

// 1. lambda1 = 0 and k2 >= k1 reduce the two-step search to the direct beam.
Outcome reduction() {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> content(2, 8), k1d(1, 6), extra(0, 4), coin(0, 1);
  std::uniform_real_distribution<double> reward(-1.0, 1.0);
  int mismatches = 0;
  for (int i = 0; i < 500; ++i) {
    const auto toy = test::random_toy(static_cast<std::size_t>(content(rng)), 1000 + static_cast<std::uint64_t>(i));
    const auto direct = toy.direct_scorer();
    const auto channel = toy.channel_scorer();
    const auto lm = toy.language_model();
    DecoderConfig cfg;
    cfg.lambda1 = 0.0;
    cfg.k1 = k1d(rng);
    cfg.k2 = cfg.k1 + extra(rng);
    cfg.per_word = coin(rng) == 1;
    cfg.word_reward = reward(rng);
    cfg.max_len_slack = 2;
    const auto x = test::random_source(toy.vocab, 6, rng);
    if (!same_hypotheses(noisy_channel_beam_search(x, {*direct, *channel, *lm}, cfg),
                         beam_search_direct(x, *direct, cfg)))
      ++mismatches;
  }
  return {mismatches == 0, std::to_string(mismatches) + " mismatches in 500 instances"};
}

// 2. Full-width two-step search against exhaustive enumeration.
Outcome oracle_agreement() {
  std::mt19937_64 rng(202);
  int matches = 0, violations = 0;
  for (int i = 0; i < 200; ++i) {
    const auto toy = test::random_toy(3, 2000 + static_cast<std::uint64_t>(i));
    const auto direct = toy.direct_scorer();
    const auto channel = toy.channel_scorer();
    const auto lm = toy.language_model();
    const auto x = test::random_source(toy.vocab, 3, rng);
    DecoderConfig cfg;
    cfg.k1 = 27;
    cfg.k2 = static_cast<int>(toy.vocab);
    cfg.lambda1 = 1.0;
    cfg.max_len = 3;
    OracleConfig ocfg;
    ocfg.max_len = 3;
    const NoisyChannelScorers s{*direct, *channel, *lm};
    const auto oracle = exhaustive_decode(x, s, cfg, ocfg);
    const auto beam = noisy_channel_beam_search(x, s, cfg);
    if (!beam.empty() && beam.front().target == oracle.best.target) ++matches;
    for (const auto& h : beam)
      if (h.combined > oracle.best.combined) ++violations;
  }
  return {matches >= 190 && violations == 0,
          std::to_string(matches) + "/200 argmax matches, " + std::to_string(violations) + " score violations"};
}

// 3. rerank against exhaustive_rerank and positive weight scaling.
Outcome reranker_exactness() {
  std::mt19937_64 rng(303);
  std::uniform_int_distribution<int> size(1, 20), len(1, 6), coarse(-30, 0), wd(0, 6), rd(-3, 3);
  std::uniform_real_distribution<double> scale(0.1, 10.0);
  int mismatches = 0, scaling = 0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<NBestEntry> list(static_cast<std::size_t>(size(rng)));
    for (auto& e : list) {
      e.sentence_id = i;
      const int n = len(rng);
      for (int j = 0; j < n; ++j) e.tokens.push_back("w" + std::to_string(-coarse(rng) % 4));
      e.features = {{"direct", coarse(rng) / 4.0}, {"channel", coarse(rng) / 4.0},
                    {"lm", coarse(rng) / 4.0}, {"reverse", coarse(rng) / 4.0}};
    }
    const ScoreWeights w{wd(rng) / 2.0, wd(rng) / 2.0, wd(rng) / 2.0, wd(rng) / 2.0, rd(rng) / 2.0};
    const std::size_t best = select_best(list, w);
    if (!(list[best] == exhaustive_rerank(list, w))) ++mismatches;
    // Powers of two keep the scaled sums exact, so ties stay ties.
    const double c = std::ldexp(1.0, static_cast<int>(std::floor(std::log2(scale(rng)))));
    if (select_best(list, w.scaled(c)) != best) ++scaling;
  }
  return {mismatches == 0 && scaling == 0,
          std::to_string(mismatches) + " mismatches, " + std::to_string(scaling) + " scaling changes in 1000 lists"};
}

// Shared synthetic setup for the trend criteria.
struct Trend {
  struct Split {
    std::vector<TokenSequence> src;
    std::vector<Sentence> ref;
  };
  SyntheticCorpus corpus;
  ToyModels models;
  Split dev, test;
  std::shared_ptr<const DirectScorer> direct;
  std::shared_ptr<const ChannelScorer> channel, prefix_channel;
  std::shared_ptr<const LanguageModel> lm;
  int jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

  FeatureScorers scorers(bool prefix = false) const {
    return {direct.get(), prefix ? prefix_channel.get() : channel.get(), lm.get(), nullptr};
  }

  std::vector<std::vector<NBestEntry>> nbest(const Split& s, int k1, bool prefix = false) const {
    DecoderConfig cfg;
    cfg.k1 = k1;
    cfg.max_len_ratio = 1.0;
    cfg.max_len_slack = 0;
    std::vector<std::vector<NBestEntry>> per(s.src.size());
    parallel_for(s.src.size(), jobs, [&](std::size_t i) {
      per[i] = to_nbest(beam_search_direct(s.src[i], *direct, cfg), static_cast<std::int64_t>(i),
                        models.target_vocab, false);
    });
    std::vector<NBestEntry> all;
    for (auto& p : per) all.insert(all.end(), p.begin(), p.end());
    extract_features(all, s.src, models.target_vocab, scorers(prefix), jobs);
    return group_by_sentence(all);
  }

  ScoreWeights tuned(const std::vector<std::vector<NBestEntry>>& dev_groups, const std::string& features) const {
    TuneConfig cfg;
    cfg.features = FeatureSet::parse(features);
    return tune(dev_groups, dev.ref, cfg).weights;
  }

  // target_length 0 = full candidate.
  double prefix_bleu(const std::vector<std::vector<NBestEntry>>& groups, bool prefix_channel_model, int target_length,
                     double source_fraction, const ScoreWeights& w) const {
    PrefixSpec spec;
    if (target_length > 0) {
      spec.axis = PrefixSpec::TargetAxis::kLength;
      spec.target_length = target_length;
    }
    spec.source_fraction = source_fraction;
    return prefix_rerank(groups, dev.src, dev.ref, models.target_vocab, scorers(prefix_channel_model), spec, w,
                         jobs)
        .bleu;
  }
};

const Trend& trend() {
  static const Trend t = [] {
    Trend t;
    SyntheticConfig cfg;  // seed 1, 2000 train, 1000 dev, 1000 test, 50/40 types
    t.corpus = make_synthetic(cfg);
    t.models = ToyModels::train(t.corpus.train.source, t.corpus.train.target, t.corpus.monolingual, {});
    auto split = [&](const SyntheticSplit& s) {
      Trend::Split out;
      for (const auto& p : t.models.encode(s.source, s.target)) out.src.push_back(p.source);
      out.ref = s.target;
      return out;
    };
    t.dev = split(t.corpus.dev);
    t.test = split(t.corpus.test);
    t.direct = t.models.direct_scorer();
    t.channel = t.models.channel_scorer();
    t.prefix_channel = t.models.channel_scorer(true);
    t.lm = t.models.language_model();
    return t;
  }();
  return t;
}

struct DevLists {
  std::vector<std::vector<NBestEntry>> full, prefix;
  ScoreWeights w_dir_lm, w_ch_dir_lm, w_prefix;
};

const DevLists& dev_lists() {
  static const DevLists d = [] {
    const auto& t = trend();
    DevLists d;
    d.full = t.nbest(t.dev, 50);
    d.prefix = t.nbest(t.dev, 50, true);
    d.w_dir_lm = t.tuned(d.full, "dir+lm");
    d.w_ch_dir_lm = t.tuned(d.full, "ch+dir+lm");
    d.w_prefix = t.tuned(d.prefix, "ch+dir+lm");
    return d;
  }();
  return d;
}

char buf[512];

// 4. Tuned feature sets on test at k1 = 5 and 50.
Outcome nbest_trend() {
  const auto& t = trend();
  const char* sets[] = {"dir", "dir+lm", "ch+dir+lm"};
  double b[2][3];
  for (int ki = 0; ki < 2; ++ki) {
    const int k = ki == 0 ? 5 : 50;
    const auto dev = ki == 1 ? dev_lists().full : t.nbest(t.dev, k);
    const auto test = t.nbest(t.test, k);
    for (int f = 0; f < 3; ++f) b[ki][f] = rerank_bleu(test, t.test.ref, t.tuned(dev, sets[f]));
  }
  const bool gaps = b[1][2] >= b[1][1] + 0.5 && b[1][1] >= b[1][0] + 0.5;
  const bool growth = b[1][2] - b[0][2] > b[1][0] - b[0][0];
  std::snprintf(buf, sizeof buf,
                "test BLEU k1=5: dir %.2f dir+lm %.2f ch+dir+lm %.2f; k1=50: dir %.2f dir+lm %.2f ch+dir+lm %.2f; "
                "gain 5->50: ch+dir+lm %+.2f dir %+.2f",
                b[0][0], b[0][1], b[0][2], b[1][0], b[1][1], b[1][2], b[1][2] - b[0][2], b[1][0] - b[0][0]);
  return {gaps && growth, buf};
}

// 5. Source fraction 1.0 against partial sources at each target length.
Outcome source_fraction_trend() {
  const auto& t = trend();
  const auto& d = dev_lists();
  double worst = 1e9;
  std::string where;
  for (int tl : {1, 2, 3, 0}) {
    const double full = t.prefix_bleu(d.full, false, tl, 1.0, d.w_ch_dir_lm);
    for (double sf : {0.25, 0.5, 0.75}) {
      const double margin = full - t.prefix_bleu(d.full, false, tl, sf, d.w_ch_dir_lm);
      if (margin < worst) {
        worst = margin;
        where = (tl ? std::to_string(tl) : std::string("full")) + " tokens, source " + std::to_string(sf).substr(0, 4);
      }
    }
  }
  std::snprintf(buf, sizeof buf, "smallest margin of source 1.0 over partial sources %+.2f BLEU (%s)", worst,
                where.c_str());
  return {worst >= -0.2, buf};
}

// 6. Benefit of target context for ch+dir+lm versus dir+lm.
Outcome target_context_trend() {
  const auto& t = trend();
  const auto& d = dev_lists();
  const double ch1 = t.prefix_bleu(d.full, false, 1, 1.0, d.w_ch_dir_lm);
  const double chf = t.prefix_bleu(d.full, false, 0, 1.0, d.w_ch_dir_lm);
  const double lm1 = t.prefix_bleu(d.full, false, 1, 1.0, d.w_dir_lm);
  const double lmf = t.prefix_bleu(d.full, false, 0, 1.0, d.w_dir_lm);
  std::snprintf(buf, sizeof buf, "ch+dir+lm %.2f -> %.2f (%+.2f), dir+lm %.2f -> %.2f (%+.2f)", ch1, chf, chf - ch1,
                lm1, lmf, lmf - lm1);
  return {chf - ch1 > lmf - lm1, buf};
}

// 7. Full-sentence versus prefix-trained channel.
Outcome prefix_channel_trend() {
  const auto& t = trend();
  const auto& d = dev_lists();
  const double full_at_full = t.prefix_bleu(d.full, false, 0, 1.0, d.w_ch_dir_lm);
  const double prefix_at_full = t.prefix_bleu(d.prefix, true, 0, 1.0, d.w_prefix);
  const double full_at_1 = t.prefix_bleu(d.full, false, 1, 1.0, d.w_ch_dir_lm);
  const double prefix_at_1 = t.prefix_bleu(d.prefix, true, 1, 1.0, d.w_prefix);
  std::snprintf(buf, sizeof buf, "full targets: full-trained %.2f prefix-trained %.2f; 1-token: full-trained %.2f "
                "prefix-trained %.2f", full_at_full, prefix_at_full, full_at_1, prefix_at_1);
  return {full_at_full > prefix_at_full && prefix_at_1 >= full_at_1 - 0.2, buf};
}

Sentence words(const std::string& text) {
  std::istringstream in(text);
  Sentence out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

// 8. BLEU identities and hand-computed values.
Outcome bleu_correctness() {
  const auto& t = trend();
  BleuStats identity;
  for (const auto& s : t.corpus.test.target) nc::accumulate(identity, s, s);
  const double id = bleu(identity);
  const auto clip = sentence_stats(words("the the the the the the the"), words("the cat is on the mat"));
  const double p1 = precisions(clip)[0];
  BleuStats short_hyp;
  nc::accumulate(short_hyp, words("a b c d"), words("a b c d e"));
  const double bp = bleu(short_hyp);
  const auto ident3 = sentence_stats(words("a b c"), words("a b c"));
  BleuStats empty;
  nc::accumulate(empty, {}, words("a b"));
  const bool ok = id == 100.0 && std::abs(p1 - 2.0 / 7.0) <= 1e-6 && std::abs(bp - 100.0 * std::exp(-0.25)) <= 1e-6 &&
                  ident3.matches == ident3.totals && empty.totals[0] == 0 && empty.ref_len == 2;
  std::snprintf(buf, sizeof buf, "identity %.2f, clipped p1 %.6f, short-hypothesis BLEU %.6f", id, p1, bp);
  return {ok, buf};
}

// 9. Normalization of every next-token distribution and EM monotonicity.
Outcome normalization() {
  double worst = 0.0;
  std::size_t checked = 0;
  auto check = [&](const std::vector<double>& lp) {
    worst = std::max(worst, std::abs(sum_exp(lp) - 1.0));
    ++checked;
  };
  // 10 emittable tokens: UNK and ids 3..11.
  const auto toy = test::random_toy(10, 909);
  std::mt19937_64 rng(909);
  std::vector<TokenSequence> corpus;
  for (int i = 0; i < 400; ++i) corpus.push_back(test::random_source(toy.vocab, 8, rng));
  const auto trigram = NGramTable::train(corpus, 3, 0.1, toy.vocab);
  const auto direct = toy.direct_scorer();
  const EnsembleDirectScorer ensemble({toy.direct_scorer(), test::random_toy(10, 910).direct_scorer()});
  const std::vector<TokenSequence> sources{{2}, {3, 4, 5}, {11, 10, 9, 8, 7, 6}};
  for (std::size_t len = 0; len <= 2; ++len) {
    TokenSequence cur;
    for_each_sequence(len, kFirstContentId, static_cast<TokenId>(toy.vocab - 1), cur, [&](const TokenSequence& h) {
      check(trigram.next_logprobs(h));
      for (const auto& x : sources) {
        check(direct->next_logprobs(x, h));
        check(ensemble.next_logprobs(x, h));
      }
    });
  }

  const auto& t = trend();
  const auto pairs = t.models.encode(t.corpus.train.source, t.corpus.train.target);
  bool monotone = true;
  for (Direction d : {Direction::kSourceToTarget, Direction::kTargetToSource}) {
    LexiconTrainOptions opts;
    opts.direction = d;
    opts.iterations = 10;
    opts.source_vocab_size = t.models.source_vocab.size();
    opts.target_vocab_size = t.models.target_vocab.size();
    std::vector<double> ll;
    train_lexicon_em(pairs, opts, &ll);
    monotone = monotone && ll.size() == 11;
    for (std::size_t i = 1; i < ll.size(); ++i) monotone = monotone && ll[i] >= ll[i - 1];
  }
  std::snprintf(buf, sizeof buf, "%zu distributions, max |sum - 1| = %.2e; EM log-likelihood %s over 10 iterations",
                checked, worst, monotone ? "non-decreasing" : "DECREASED");
  return {worst <= 1e-6 && monotone, buf};
}

// 10. Decoding through the wire protocol.
Outcome bridge_transparency() {
  const auto& t = trend();
  bridge::ScorerSet set{t.direct, t.channel, t.lm, t.models.source_vocab.size(), t.models.target_vocab.size()};
  DecoderConfig cfg;
  cfg.lambda1 = 0.8;

  auto with_server = [&](bridge::ServeOptions opts, const std::function<void(std::shared_ptr<bridge::Client>)>& fn) {
    int fds[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0) throw std::runtime_error("socketpair failed");
    std::thread server([&, fd = fds[1]] {
      bridge::serve_connection(fd, fd, set, opts);
      ::shutdown(fd, SHUT_RDWR);
    });
    {
      auto client = std::make_shared<bridge::Client>(fds[0], fds[0]);
      fn(client);
    }
    server.join();
    ::close(fds[1]);
  };

  int differing = 0;
  with_server({}, [&](std::shared_ptr<bridge::Client> client) {
    bridge::RemoteDirectScorer d(client, t.models.target_vocab.size());
    bridge::RemoteChannelScorer c(client);
    bridge::RemoteLanguageModel l(client);
    for (std::size_t i = 0; i < 100; ++i) {
      const auto& x = t.test.src[i];
      if (!same_hypotheses(noisy_channel_beam_search(x, {*t.direct, *t.channel, *t.lm}, cfg),
                           noisy_channel_beam_search(x, {d, c, l}, cfg)))
        ++differing;
    }
  });

  int surfaced = 0, wrong = 0;
  with_server({4, 25}, [&](std::shared_ptr<bridge::Client> client) {
    bridge::RemoteDirectScorer d(client, t.models.target_vocab.size());
    bridge::RemoteChannelScorer c(client);
    bridge::RemoteLanguageModel l(client);
    for (std::size_t i = 0; i < 10; ++i) {
      const auto& x = t.test.src[i];
      try {
        if (!same_hypotheses(noisy_channel_beam_search(x, {*t.direct, *t.channel, *t.lm}, cfg),
                             noisy_channel_beam_search(x, {d, c, l}, cfg)))
          ++wrong;
      } catch (const TransportError&) {
        ++surfaced;
      }
    }
  });
  std::snprintf(buf, sizeof buf, "%d/100 decodes differ; after induced failure %d transport errors, %d wrong outputs",
                differing, surfaced, wrong);
  return {differing == 0 && surfaced > 0 && wrong == 0, buf};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, Outcome (*)()>> criteria{
      {"reduction exactness", reduction},
      {"oracle agreement", oracle_agreement},
      {"reranker exactness", reranker_exactness},
      {"n-best size trend", nbest_trend},
      {"source fraction trend", source_fraction_trend},
      {"target context trend", target_context_trend},
      {"prefix channel trend", prefix_channel_trend},
      {"BLEU correctness", bleu_correctness},
      {"normalization", normalization},
      {"bridge transparency", bridge_transparency},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(n)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s criterion %d (%s): %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", n, criteria[i].first,
                o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
