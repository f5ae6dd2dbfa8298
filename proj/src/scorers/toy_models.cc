#include "noisychannel/scorers/toy_models.h"

#include <random>

#include "noisychannel/core/error.h"
#include "noisychannel/core/seed.h"

namespace nc {
namespace {

constexpr const char* kSourceVocab = "source.vocab";
constexpr const char* kTargetVocab = "target.vocab";
constexpr const char* kDirect = "direct.lex";
constexpr const char* kDirect2 = "direct2.lex";
constexpr const char* kChannel = "channel.lex";
constexpr const char* kPrefixChannel = "channel_prefix.lex";
constexpr const char* kReverse = "reverse.lex";
constexpr const char* kLm = "lm.ngram";

}  // namespace

ParallelCorpus ToyModels::encode(std::span<const Sentence> source,
                                 std::span<const Sentence> target) const {
  if (source.size() != target.size())
    throw DataError("parallel corpus sides differ in length (" + std::to_string(source.size()) +
                    " vs " + std::to_string(target.size()) + ")");
  ParallelCorpus out;
  out.reserve(source.size());
  for (std::size_t i = 0; i < source.size(); ++i)
    out.push_back({source_vocab.encode(source[i]), target_vocab.encode(target[i])});
  return out;
}

ToyModels ToyModels::train(std::span<const Sentence> source, std::span<const Sentence> target,
                           std::span<const Sentence> monolingual,
                           const ToyTrainOptions& options) {
  if (source.empty()) throw ArgumentError("empty corpus");
  ToyModels m;
  m.source_vocab = Vocabulary::build(source, options.min_count);
  std::vector<Sentence> all_target(target.begin(), target.end());
  all_target.insert(all_target.end(), monolingual.begin(), monolingual.end());
  m.target_vocab = Vocabulary::build(all_target, options.min_count);

  ParallelCorpus corpus = m.encode(source, target);

  LexiconTrainOptions lex_opts;
  lex_opts.iterations = options.em_iterations;
  lex_opts.source_vocab_size = m.source_vocab.size();
  lex_opts.target_vocab_size = m.target_vocab.size();

  lex_opts.direction = Direction::kSourceToTarget;
  lex_opts.seed = derive_seed(options.seed, "direct");
  m.direct = std::make_shared<LexiconTable>(train_lexicon_em(corpus, lex_opts));

  std::mt19937_64 rng(derive_seed(options.seed, "bootstrap"));
  std::uniform_int_distribution<std::size_t> pick(0, corpus.size() - 1);
  ParallelCorpus resample;
  resample.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) resample.push_back(corpus[pick(rng)]);
  lex_opts.seed = derive_seed(options.seed, "direct2");
  m.direct2 = std::make_shared<LexiconTable>(train_lexicon_em(resample, lex_opts));

  ParallelCorpus reversed_corpus = corpus;
  for (auto& p : reversed_corpus) p.target = reversed(p.target);
  lex_opts.seed = derive_seed(options.seed, "reverse");
  m.reverse = std::make_shared<LexiconTable>(train_lexicon_em(reversed_corpus, lex_opts));

  lex_opts.direction = Direction::kTargetToSource;
  lex_opts.seed = derive_seed(options.seed, "channel");
  m.channel = std::make_shared<LexiconTable>(train_lexicon_em(corpus, lex_opts));
  lex_opts.seed = derive_seed(options.seed, "prefix_channel");
  m.prefix_channel = std::make_shared<LexiconTable>(train_prefix_channel(corpus, lex_opts));

  std::vector<TokenSequence> lm_corpus;
  lm_corpus.reserve(all_target.size());
  for (const auto& s : all_target) lm_corpus.push_back(m.target_vocab.encode(s));
  m.lm = std::make_shared<NGramTable>(
      NGramTable::train(lm_corpus, options.lm_order, options.lm_alpha, m.target_vocab.size()));
  return m;
}

void ToyModels::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  source_vocab.save(dir / kSourceVocab);
  target_vocab.save(dir / kTargetVocab);
  direct->save(dir / kDirect, source_vocab, target_vocab);
  direct2->save(dir / kDirect2, source_vocab, target_vocab);
  reverse->save(dir / kReverse, source_vocab, target_vocab);
  channel->save(dir / kChannel, target_vocab, source_vocab);
  prefix_channel->save(dir / kPrefixChannel, target_vocab, source_vocab);
  lm->save(dir / kLm, target_vocab);
}

ToyModels ToyModels::load(const std::filesystem::path& dir) {
  ToyModels m;
  m.source_vocab = Vocabulary::load(dir / kSourceVocab);
  m.target_vocab = Vocabulary::load(dir / kTargetVocab);
  auto lex = [&](const char* name, bool s2t) {
    return std::make_shared<LexiconTable>(
        s2t ? LexiconTable::load(dir / name, m.source_vocab, m.target_vocab)
            : LexiconTable::load(dir / name, m.target_vocab, m.source_vocab));
  };
  m.direct = lex(kDirect, true);
  m.direct2 = lex(kDirect2, true);
  m.reverse = lex(kReverse, true);
  m.channel = lex(kChannel, false);
  m.prefix_channel = lex(kPrefixChannel, false);
  m.lm = std::make_shared<NGramTable>(NGramTable::load(dir / kLm, m.target_vocab));
  return m;
}

std::shared_ptr<const DirectScorer> ToyModels::direct_scorer() const {
  return std::make_shared<LexiconDirectScorer>(direct);
}

std::shared_ptr<const DirectScorer> ToyModels::ensemble_scorer() const {
  return make_ensemble({std::make_shared<LexiconDirectScorer>(direct),
                        std::make_shared<LexiconDirectScorer>(direct2)});
}

std::shared_ptr<const ChannelScorer> ToyModels::channel_scorer(bool prefix_trained) const {
  return std::make_shared<LexiconChannelScorer>(prefix_trained ? prefix_channel : channel);
}

std::shared_ptr<const LanguageModel> ToyModels::language_model() const {
  return std::make_shared<NGramLanguageModel>(lm);
}

std::shared_ptr<const ReversedDirectFeature> ToyModels::reverse_feature() const {
  return std::make_shared<ReversedDirectFeature>(std::make_shared<LexiconDirectScorer>(reverse));
}

}  // namespace nc
