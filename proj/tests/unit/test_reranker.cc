#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "noisychannel/core/error.h"
#include "noisychannel/core/nbest.h"
#include "noisychannel/decoder/decoder.h"
#include "noisychannel/eval/bleu.h"
#include "noisychannel/oracle/oracle.h"
#include "noisychannel/reranker/reranker.h"
#include "noisychannel/scorers/toy_models.h"
#include "noisychannel/synthetic/synthetic.h"
#include "test_util.h"

using namespace nc;

namespace {

std::vector<NBestEntry> random_list(std::mt19937_64& rng, std::int64_t id) {
  std::uniform_int_distribution<int> size(1, 12);
  std::uniform_int_distribution<int> len(1, 5);
  // Coarse values so exact score ties actually occur.
  std::uniform_int_distribution<int> coarse(-40, 0);
  std::vector<NBestEntry> list(static_cast<std::size_t>(size(rng)));
  for (auto& e : list) {
    e.sentence_id = id;
    const int n = len(rng);
    for (int i = 0; i < n; ++i) e.tokens.push_back("w" + std::to_string(coarse(rng) % 5));
    e.features = {{"direct", coarse(rng) / 4.0},
                  {"channel", coarse(rng) / 4.0},
                  {"lm", coarse(rng) / 4.0},
                  {"reverse", coarse(rng) / 4.0}};
  }
  return list;
}

ScoreWeights random_weights(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> w(0, 4);
  std::uniform_int_distribution<int> r(-2, 2);
  return {w(rng) / 2.0, w(rng) / 2.0, w(rng) / 2.0, w(rng) / 2.0, r(rng) / 2.0};
}

struct Fixture {
  SyntheticCorpus corpus;
  ToyModels models;
  std::vector<TokenSequence> dev_src, test_src;
  std::shared_ptr<const DirectScorer> direct;
  std::shared_ptr<const ChannelScorer> channel;
  std::shared_ptr<const LanguageModel> lm;
  std::shared_ptr<const ReversedDirectFeature> reverse;
  std::vector<std::vector<NBestEntry>> dev_groups, test_groups;

  FeatureScorers scorers() const { return {direct.get(), channel.get(), lm.get(), reverse.get()}; }

  std::vector<std::vector<NBestEntry>> nbest(const std::vector<TokenSequence>& sources, int k) const {
    DecoderConfig cfg;
    cfg.k1 = k;
    cfg.max_len_ratio = 1.0;
    cfg.max_len_slack = 0;
    std::vector<NBestEntry> all;
    for (std::size_t i = 0; i < sources.size(); ++i) {
      const auto hyps = beam_search_direct(sources[i], *direct, cfg);
      auto e = to_nbest(hyps, static_cast<std::int64_t>(i), models.target_vocab, false);
      all.insert(all.end(), e.begin(), e.end());
    }
    extract_features(all, sources, models.target_vocab, scorers(), 4);
    return group_by_sentence(all);
  }
};

const Fixture& fixture() {
  static const Fixture f = [] {
    Fixture f;
    SyntheticConfig cfg;
    cfg.dev = 300;
    cfg.test = 300;
    f.corpus = make_synthetic(cfg);
    f.models = ToyModels::train(f.corpus.train.source, f.corpus.train.target, f.corpus.monolingual, {});
    for (const auto& s : f.corpus.dev.source) f.dev_src.push_back(f.models.source_vocab.encode(s));
    for (const auto& s : f.corpus.test.source) f.test_src.push_back(f.models.source_vocab.encode(s));
    f.direct = f.models.direct_scorer();
    f.channel = f.models.channel_scorer();
    f.lm = f.models.language_model();
    f.reverse = f.models.reverse_feature();
    f.dev_groups = f.nbest(f.dev_src, 10);
    f.test_groups = f.nbest(f.test_src, 10);
    return f;
  }();
  return f;
}

double sentence_bleu_plus1(const Sentence& hyp, const Sentence& ref) {
  const auto st = sentence_stats(hyp, ref);
  double logp = 0.0;
  for (int n = 0; n < kBleuOrder; ++n)
    logp += std::log((static_cast<double>(st.matches[n]) + 1.0) / (static_cast<double>(st.totals[n]) + 1.0));
  return std::exp(logp / kBleuOrder) * brevity_penalty(st);
}

}  // namespace

TEST(FeatureSet, ParseAndName) {
  EXPECT_EQ(FeatureSet::parse("ch+dir+lm"), (FeatureSet{true, true, true, false}));
  EXPECT_EQ(FeatureSet::parse("dir+rl"), (FeatureSet{true, false, false, true}));
  EXPECT_EQ(FeatureSet::parse("dir").name(), "dir");
  EXPECT_EQ(FeatureSet::parse("lm+dir+ch").name(), "ch+dir+lm");
  EXPECT_THROW(FeatureSet::parse("dir+xyz"), ArgumentError);
}

TEST(PrefixSpec, PrefixLengths) {
  PrefixSpec spec;
  spec.target_fraction = 0.5;
  EXPECT_EQ(spec.target_prefix_len(5), 3u);
  EXPECT_EQ(spec.target_prefix_len(1), 1u);
  spec.axis = PrefixSpec::TargetAxis::kLength;
  spec.target_length = 3;
  EXPECT_EQ(spec.target_prefix_len(2), 2u);
  EXPECT_EQ(spec.target_prefix_len(7), 3u);
  spec.source_fraction = 0.2;
  EXPECT_EQ(spec.source_prefix_len(5), 1u);
  EXPECT_EQ(spec.source_prefix_len(2), 1u);
  spec.source_fraction = 0.0;
  EXPECT_THROW(spec.validate(), ArgumentError);
  spec.source_fraction = 1.0;
  spec.target_length = 0;
  EXPECT_THROW(spec.validate(), ArgumentError);
}

TEST(Rerank, DirectOnlyWeightsPickHighestDirect) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    const auto list = random_list(rng, 0);
    const auto idx = select_best(list, ScoreWeights{});
    for (const auto& e : list) EXPECT_LE(e.features.at("direct"), list[idx].features.at("direct"));
  }
}

TEST(Rerank, AgreesWithExhaustiveRerank) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 1000; ++i) {
    const auto list = random_list(rng, i);
    const auto w = random_weights(rng);
    EXPECT_EQ(list[select_best(list, w)], exhaustive_rerank(list, w)) << "list " << i;
  }
}

TEST(Rerank, PositiveScalingKeepsSelections) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 300; ++i) {
    const auto list = random_list(rng, i);
    const auto w = random_weights(rng);
    for (double c : {0.5, 2.0, 8.0})
      EXPECT_EQ(select_best(list, w), select_best(list, w.scaled(c)));
  }
}

TEST(Rerank, MissingFeatureNamesIt) {
  const std::vector<NBestEntry> list{{0, {"a"}, {{"direct", -1}}, 0}};
  try {
    select_best(list, ScoreWeights{1, 0, 1, 0, 0});
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("'lm'"), std::string::npos);
  }
  EXPECT_NO_THROW(select_best(list, ScoreWeights{1, 0, 0, 0, 0.5}));
}

TEST(Rerank, ScoreFormula) {
  const NBestEntry e{0, {"a", "b", "c"}, {{"direct", -1}, {"channel", -2}, {"lm", -3}, {"reverse", -4}}, 0};
  EXPECT_DOUBLE_EQ(rerank_score(e, {1, 0.5, 0.25, 2, 0.1}), -1 - 1 - 0.75 - 8 + 0.3);
}

TEST(Weights, FileRoundTrip) {
  test::TempDir dir;
  const ScoreWeights w{0.1, 1.0 / 3.0, 2.5, 0, -0.75};
  write_weights(dir / "w.txt", w);
  EXPECT_EQ(read_weights(dir / "w.txt"), w);
  EXPECT_EQ(parse_weights("# comment\nlm = 2\n"), (ScoreWeights{0, 0, 2, 0, 0}));
  EXPECT_THROW(parse_weights("bogus=1\n"), DataError);
  EXPECT_THROW(parse_weights("lm\n"), DataError);
  EXPECT_THROW(read_weights(dir / "none.txt"), DataError);
}

TEST(Tune, PlantedLmSignalIsFound) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> noise(-5.0, 0.0);
  std::vector<Sentence> refs;
  std::vector<std::vector<NBestEntry>> groups;
  for (int s = 0; s < 60; ++s) {
    Sentence ref;
    for (int k = 0; k < 6; ++k) ref.push_back("r" + std::to_string((s * 3 + k) % 11));
    refs.push_back(ref);
    std::vector<NBestEntry> g;
    for (int c = 0; c < 6; ++c) {
      // Candidate c corrupts c tokens; only the LM feature knows.
      Sentence hyp = ref;
      for (int k = 0; k < c; ++k) hyp[static_cast<std::size_t>(k)] = "x" + std::to_string(k);
      g.push_back({s, hyp, {{"direct", noise(rng)}, {"lm", -static_cast<double>(c)}}, 0});
    }
    std::shuffle(g.begin(), g.end(), rng);
    groups.push_back(g);
  }
  TuneConfig cfg;
  cfg.features = FeatureSet::parse("dir+lm");
  const auto r = tune(groups, refs, cfg);
  EXPECT_GT(r.weights.lm, 0.0);
  EXPECT_GE(r.bleu, rerank_bleu(groups, refs, ScoreWeights{}));
  EXPECT_NEAR(r.bleu, 100.0, 1e-9);
  EXPECT_DOUBLE_EQ(r.bleu, rerank_bleu(groups, refs, r.weights));
}

TEST(Tune, DeterministicGivenSeed) {
  const auto& f = fixture();
  TuneConfig cfg;
  cfg.trials = 1;
  cfg.seed = 99;
  cfg.features = FeatureSet::parse("ch+dir+lm");
  const auto a = tune(f.dev_groups, f.corpus.dev.target, cfg);
  const auto b = tune(f.dev_groups, f.corpus.dev.target, cfg);
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(a.bleu, b.bleu);
  cfg.trials = 50;
  EXPECT_EQ(tune(f.dev_groups, f.corpus.dev.target, cfg).weights,
            tune(f.dev_groups, f.corpus.dev.target, cfg).weights);
}

TEST(Tune, NeverBelowBaselineOrVisitedPoints) {
  const auto& f = fixture();
  TuneConfig cfg;
  cfg.features = FeatureSet::parse("ch+dir+lm");
  cfg.trials = 40;
  const auto r = tune(f.dev_groups, f.corpus.dev.target, cfg);
  EXPECT_GE(r.bleu, rerank_bleu(f.dev_groups, f.corpus.dev.target, ScoreWeights{}));
  // Replay the random-search stage: every visited point scores at most r.bleu.
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> wd(cfg.weight_min, cfg.weight_max);
  std::uniform_real_distribution<double> rd(cfg.reward_min, cfg.reward_max);
  for (int t = 1; t < cfg.trials; ++t) {
    ScoreWeights w{0, 0, 0, 0, 0};
    w.direct = wd(rng);
    w.channel = wd(rng);
    w.lm = wd(rng);
    w.word_reward = rd(rng);
    EXPECT_LE(rerank_bleu(f.dev_groups, f.corpus.dev.target, w), r.bleu);
  }
}

TEST(Tune, Preconditions) {
  TuneConfig cfg;
  cfg.trials = 0;
  EXPECT_THROW(cfg.validate(), ArgumentError);
  cfg = {};
  cfg.weight_max = cfg.weight_min;
  EXPECT_THROW(cfg.validate(), ArgumentError);
  EXPECT_THROW(tune({}, {}, TuneConfig{}), ArgumentError);
}

TEST(Features, ExtractionIsPureAndMatchesDefinitions) {
  const auto& f = fixture();
  auto entries = f.dev_groups[0];
  auto again = entries;
  extract_features(again, f.dev_src, f.models.target_vocab, f.scorers());
  EXPECT_EQ(entries, again);
  const auto y = f.models.target_vocab.encode(entries[0].tokens);
  EXPECT_EQ(entries[0].features.at("channel"), f.channel->score(f.dev_src[0], y));
  EXPECT_EQ(entries[0].features.at("lm"), f.lm->sequence_logprob(y));
  EXPECT_EQ(entries[0].features.at("reverse"), f.reverse->score(f.dev_src[0], y));
}

TEST(Features, DirectFeatureMatchesDecoderSums) {
  const auto& f = fixture();
  DecoderConfig cfg;
  for (std::size_t i = 0; i < 50; ++i) {
    const auto hyps = beam_search_direct(f.dev_src[i], *f.direct, cfg);
    auto entries = to_nbest(hyps, static_cast<std::int64_t>(i), f.models.target_vocab, false);
    const auto decoded = entries;
    extract_features(entries, f.dev_src, f.models.target_vocab, f.scorers());
    for (std::size_t j = 0; j < entries.size(); ++j)
      EXPECT_NEAR(entries[j].features.at("direct"), decoded[j].features.at("direct"), 1e-6);
  }
}

TEST(Features, MissingSourceIsAnError) {
  const auto& f = fixture();
  std::vector<NBestEntry> entries{{5000, {"t01"}, {}, 0}};
  EXPECT_THROW(extract_features(entries, f.dev_src, f.models.target_vocab, f.scorers()), DataError);
}

TEST(PrefixRerank, FullSpecEqualsRerank) {
  const auto& f = fixture();
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const auto w = random_weights(rng);
    const auto pr = prefix_rerank(f.dev_groups, f.dev_src, f.corpus.dev.target, f.models.target_vocab,
                                  f.scorers(), PrefixSpec::full(), w, 4);
    EXPECT_EQ(pr.selections, rerank(f.dev_groups, w));
    EXPECT_EQ(pr.bleu, rerank_bleu(f.dev_groups, f.corpus.dev.target, w));
  }
}

TEST(PrefixRerank, BleuIsOnFullCandidates) {
  const auto& f = fixture();
  PrefixSpec spec;
  spec.axis = PrefixSpec::TargetAxis::kLength;
  spec.target_length = 1;
  spec.source_fraction = 0.5;
  const auto pr = prefix_rerank(f.dev_groups, f.dev_src, f.corpus.dev.target, f.models.target_vocab,
                                f.scorers(), spec, ScoreWeights{1, 1, 1, 0, 0}, 2);
  BleuStats st;
  for (std::size_t g = 0; g < pr.selections.size(); ++g) {
    const auto& sel = pr.selections[g];
    EXPECT_NE(std::find(f.dev_groups[g].begin(), f.dev_groups[g].end(), sel), f.dev_groups[g].end());
    accumulate(st, sel.tokens, f.corpus.dev.target[static_cast<std::size_t>(sel.sentence_id)]);
  }
  EXPECT_DOUBLE_EQ(pr.bleu, bleu(st));
}

TEST(PrefixRerank, TruncatedFeaturesUseTruncatedInputs) {
  const auto& f = fixture();
  const TokenSequence x{3, 4, 5, 6};
  const TokenSequence y{4, 5, 6};
  PrefixSpec spec;
  spec.axis = PrefixSpec::TargetAxis::kLength;
  spec.target_length = 2;
  spec.source_fraction = 0.5;
  const auto feats = prefix_features(x, y, spec, f.scorers());
  EXPECT_EQ(feats.at("channel"), f.channel->score({3, 4}, {4, 5}));
  EXPECT_EQ(feats.at("direct"), f.direct->prefix_logprob({3, 4}, {4, 5}));
  EXPECT_EQ(feats.at("lm"), f.lm->prefix_logprob({4, 5}));
  spec.direct_full_source = true;
  EXPECT_EQ(prefix_features(x, y, spec, f.scorers()).at("direct"), f.direct->prefix_logprob(x, {4, 5}));
  EXPECT_EQ(prefix_features(x, y, spec, f.scorers()).at("channel"), f.channel->score({3, 4}, {4, 5}));
}

TEST(Reranking, RightToLeftFeatureHelpsOnTest) {
  const auto& f = fixture();
  TuneConfig cfg;
  cfg.features = FeatureSet::parse("dir+rl");
  const auto rl = tune(f.dev_groups, f.corpus.dev.target, cfg);
  cfg.features = FeatureSet::parse("dir");
  const auto dir = tune(f.dev_groups, f.corpus.dev.target, cfg);
  EXPECT_GE(rerank_bleu(f.test_groups, f.corpus.test.target, rl.weights),
            rerank_bleu(f.test_groups, f.corpus.test.target, dir.weights));
}

TEST(Reranking, LargerListsNeverLowerOracleBleu) {
  const auto& f = fixture();
  for (std::size_t g = 0; g < f.dev_groups.size(); ++g) {
    const auto& list = f.dev_groups[g];
    const auto& ref = f.corpus.dev.target[g];
    double best_small = 0.0, best_all = 0.0;
    for (std::size_t i = 0; i < list.size(); ++i) {
      const double b = sentence_bleu_plus1(list[i].tokens, ref);
      if (i < 5) best_small = std::max(best_small, b);
      best_all = std::max(best_all, b);
    }
    EXPECT_GE(best_all, best_small);
  }
}
