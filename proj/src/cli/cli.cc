#include "noisychannel/cli/cli.h"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "noisychannel/bridge/client.h"
#include "noisychannel/bridge/server.h"
#include "noisychannel/core/error.h"
#include "noisychannel/core/nbest.h"
#include "noisychannel/core/parallel.h"
#include "noisychannel/core/seed.h"
#include "noisychannel/decoder/decoder.h"
#include "noisychannel/eval/bleu.h"
#include "noisychannel/oracle/oracle.h"
#include "noisychannel/reranker/reranker.h"
#include "noisychannel/scorers/toy_models.h"
#include "noisychannel/synthetic/synthetic.h"

namespace nc::cli {
namespace fs = std::filesystem;

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) return;
  if (!fs::is_regular_file(path)) throw DataError(std::string(what) + " not found: " + path);
}

void require_dir(const std::string& path, const char* what) {
  if (!fs::is_directory(path)) throw DataError(std::string(what) + " not found: " + path);
}

void require_parent(const std::string& path) {
  if (path.empty()) return;
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty() && !fs::is_directory(parent))
    throw DataError("output directory does not exist: " + parent.string());
}

std::vector<TokenSequence> encode_sources(const Vocabulary& vocab, const std::vector<Sentence>& corpus) {
  std::vector<TokenSequence> out;
  out.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus[i].empty()) throw DataError("empty source sentence on line " + std::to_string(i + 1));
    out.push_back(vocab.encode(corpus[i]));
  }
  return out;
}

std::vector<double> parse_fractions(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    char* end = nullptr;
    const double v = std::strtod(part.c_str(), &end);
    if (part.empty() || *end != '\0' || !(v > 0.0 && v <= 1.0))
      throw ArgumentError(std::string("bad ") + what + " '" + part + "' (expected values in (0, 1])");
    out.push_back(v);
  }
  if (out.empty()) throw ArgumentError(std::string("empty ") + what + " list");
  return out;
}

struct WeightFlags {
  std::string file;
  std::optional<double> direct, channel, lm, reverse, word_reward;

  void add_to(CLI::App* app) {
    app->add_option("--weights", file, "Weights file (name=value lines)");
    app->add_option("--w-direct", direct, "Override the direct weight");
    app->add_option("--w-channel", channel, "Override the channel weight");
    app->add_option("--w-lm", lm, "Override the LM weight");
    app->add_option("--w-reverse", reverse, "Override the right-to-left weight");
    app->add_option("--word-reward", word_reward, "Override the per-token reward");
  }

  ScoreWeights resolve() const {
    ScoreWeights w = file.empty() ? ScoreWeights{} : read_weights(file);
    if (direct) w.direct = *direct;
    if (channel) w.channel = *channel;
    if (lm) w.lm = *lm;
    if (reverse) w.reverse = *reverse;
    if (word_reward) w.word_reward = *word_reward;
    return w;
  }
};

// Optional on-the-fly feature extraction for commands reading n-best files.
struct FeatureFlags {
  std::string models;
  std::string source;
  bool prefix_channel = false;

  void add_to(CLI::App* app) {
    app->add_option("--models", models, "Toy model directory; recomputes all features");
    app->add_option("--source", source, "Source corpus aligned with the n-best sentence ids");
    app->add_flag("--prefix-channel", prefix_channel, "Use the prefix-trained channel model");
  }

  void validate() const {
    if (models.empty() != source.empty())
      throw ArgumentError("--models and --source must be given together");
    if (!models.empty()) require_dir(models, "model directory");
    require_file(source, "source corpus");
  }
};

struct LoadedFeatures {
  ToyModels models;
  std::vector<TokenSequence> sources;
  std::shared_ptr<const DirectScorer> direct;
  std::shared_ptr<const ChannelScorer> channel;
  std::shared_ptr<const LanguageModel> lm;
  std::shared_ptr<const ReversedDirectFeature> reverse;

  FeatureScorers scorers() const { return {direct.get(), channel.get(), lm.get(), reverse.get()}; }
};

LoadedFeatures load_features(const FeatureFlags& f) {
  LoadedFeatures l;
  l.models = ToyModels::load(f.models);
  l.sources = encode_sources(l.models.source_vocab, read_corpus(f.source));
  l.direct = l.models.direct_scorer();
  l.channel = l.models.channel_scorer(f.prefix_channel);
  l.lm = l.models.language_model();
  l.reverse = l.models.reverse_feature();
  return l;
}

std::vector<std::vector<NBestEntry>> load_groups(const std::string& nbest, const FeatureFlags& f, int jobs) {
  auto entries = read_nbest(nbest);
  if (entries.empty()) throw DataError("n-best file is empty: " + nbest);
  if (!f.models.empty()) {
    const auto l = load_features(f);
    extract_features(entries, l.sources, l.models.target_vocab, l.scorers(), jobs);
  }
  return group_by_sentence(entries);
}

void write_selections(const std::string& path, std::span<const NBestEntry> selections) {
  std::vector<Sentence> lines;
  lines.reserve(selections.size());
  for (const auto& s : selections) lines.push_back(s.tokens);
  write_corpus(path, lines);
}

std::string bleu_report(const BleuStats& stats) {
  const auto p = precisions(stats);
  std::ostringstream os;
  os << "BLEU = " << fixed(bleu(stats), 2) << ", " << fixed(100 * p[0], 1) << '/' << fixed(100 * p[1], 1)
     << '/' << fixed(100 * p[2], 1) << '/' << fixed(100 * p[3], 1) << " (BP=" << fixed(brevity_penalty(stats), 3)
     << ", hyp_len=" << stats.hyp_len << ", ref_len=" << stats.ref_len << ")";
  return os.str();
}

BleuStats selection_stats(std::span<const NBestEntry> selections, std::span<const Sentence> refs) {
  BleuStats stats;
  for (const auto& s : selections) {
    if (s.sentence_id < 0 || static_cast<std::size_t>(s.sentence_id) >= refs.size())
      throw DataError("missing reference for sentence " + std::to_string(s.sentence_id));
    accumulate(stats, s.tokens, refs[static_cast<std::size_t>(s.sentence_id)]);
  }
  return stats;
}

// ---------------------------------------------------------------- commands

struct MakeSyntheticOpts {
  std::string out;
  SyntheticConfig cfg;
  bool no_reverse = false;
};

void add_make_synthetic(CLI::App& app, MakeSyntheticOpts& o) {
  auto* c = app.add_subcommand("make-synthetic", "Generate a seeded synthetic parallel corpus");
  c->add_option("--out", o.out, "Output directory")->required();
  c->add_option("--seed", o.cfg.seed, "Random seed");
  c->add_option("--train", o.cfg.train, "Training pairs");
  c->add_option("--dev", o.cfg.dev, "Development pairs");
  c->add_option("--test", o.cfg.test, "Test pairs");
  c->add_option("--mono", o.cfg.monolingual, "Monolingual target sentences");
  c->add_option("--target-vocab", o.cfg.target_vocab, "Target word types");
  c->add_option("--source-vocab", o.cfg.source_vocab, "Source word types");
  c->add_option("--min-len", o.cfg.min_len, "Minimum sentence length");
  c->add_option("--max-len", o.cfg.max_len, "Maximum sentence length");
  c->add_option("--successors", o.cfg.successors, "Preferred successors per word in the target LM");
  c->add_option("--lm-noise", o.cfg.lm_noise, "Uniform mass mixed into every LM row");
  c->add_option("--primary-prob", o.cfg.primary_prob, "Probability of a word's main translation");
  c->add_option("--secondary-prob", o.cfg.secondary_prob, "Probability of its second translation");
  c->add_flag("--no-reverse", o.no_reverse, "Keep source word order");
}

int run_make_synthetic(MakeSyntheticOpts& o, std::ostream& out) {
  o.cfg.reverse_source = !o.no_reverse;
  o.cfg.validate();
  require_parent(o.out);
  const auto corpus = make_synthetic(o.cfg);
  corpus.save(o.out);
  out << "wrote " << o.cfg.train << " train, " << o.cfg.dev << " dev, " << o.cfg.test << " test pairs and "
      << o.cfg.monolingual << " monolingual sentences to " << o.out << "\n";
  return kExitOk;
}

struct TrainOpts {
  std::string src, tgt, mono, out;
  ToyTrainOptions train;
};

void add_train(CLI::App& app, TrainOpts& o) {
  auto* c = app.add_subcommand("train-toy", "Train the toy direct, channel, right-to-left and LM models");
  c->add_option("--src", o.src, "Source side of the parallel corpus")->required();
  c->add_option("--tgt", o.tgt, "Target side of the parallel corpus")->required();
  c->add_option("--mono", o.mono, "Extra monolingual target text for the LM");
  c->add_option("--out", o.out, "Model directory")->required();
  c->add_option("--seed", o.train.seed, "Random seed");
  c->add_option("--min-count", o.train.min_count, "Vocabulary count threshold");
  c->add_option("--em-iterations", o.train.em_iterations, "EM iterations");
  c->add_option("--lm-order", o.train.lm_order, "N-gram order");
  c->add_option("--lm-alpha", o.train.lm_alpha, "Add-alpha constant");
}

int run_train(const TrainOpts& o, std::ostream& out) {
  require_file(o.src, "source corpus");
  require_file(o.tgt, "target corpus");
  require_file(o.mono, "monolingual corpus");
  require_parent(o.out);
  const auto src = read_corpus(o.src);
  const auto tgt = read_corpus(o.tgt);
  if (src.size() != tgt.size())
    throw DataError("parallel corpus sides differ in length: " + std::to_string(src.size()) + " vs " +
                    std::to_string(tgt.size()));
  const auto mono = o.mono.empty() ? std::vector<Sentence>{} : read_corpus(o.mono);
  const auto models = ToyModels::train(src, tgt, mono, o.train);
  models.save(o.out);
  out << "trained toy models on " << src.size() << " pairs (" << models.source_vocab.size() << " source, "
      << models.target_vocab.size() << " target types) into " << o.out << "\n";
  return kExitOk;
}

struct DecodeOpts {
  std::string models, input, output, best, endpoint;
  std::string mode = "noisy-channel";
  DecoderConfig cfg;
  bool ensemble = false;
  bool prefix_channel = false;
  int jobs = 1;
  int timeout_ms = 30000;
};

void add_decode(CLI::App& app, DecodeOpts& o) {
  auto* c = app.add_subcommand("decode", "Beam-search decode a source corpus into an n-best file");
  c->add_option("--models", o.models, "Toy model directory (vocabularies, and scorers unless --endpoint)")
      ->required();
  c->add_option("--input", o.input, "Source corpus")->required();
  c->add_option("--output", o.output, "N-best output file")->required();
  c->add_option("--best", o.best, "Also write the top hypothesis per sentence here");
  c->add_option("--mode", o.mode, "direct or noisy-channel")
      ->check(CLI::IsMember({"direct", "noisy-channel"}));
  c->add_option("--k1", o.cfg.k1, "Beam size");
  c->add_option("--k2", o.cfg.k2, "Direct-model extensions per beam");
  c->add_option("--lambda1", o.cfg.lambda1, "Weight of channel + LM");
  c->add_option("--word-reward", o.cfg.word_reward, "Per-token reward");
  c->add_option("--per-word", o.cfg.per_word, "Length-normalize scores (true/false)");
  c->add_option("--max-len-ratio", o.cfg.max_len_ratio, "Maximum target length per source token");
  c->add_option("--max-len-slack", o.cfg.max_len_slack, "Constant added to the maximum length");
  c->add_option("--max-len", o.cfg.max_len, "Fixed maximum target length (0 = ratio + slack)");
  c->add_flag("--ensemble", o.ensemble, "Use the two-model direct ensemble");
  c->add_flag("--prefix-channel", o.prefix_channel, "Use the prefix-trained channel model");
  c->add_option("--endpoint", o.endpoint, "Remote scorer endpoint (tcp:host:port or stdio:<command>)");
  c->add_option("--timeout-ms", o.timeout_ms, "Remote call timeout");
  c->add_option("--jobs", o.jobs, "Sentences decoded in parallel");
}

int run_decode(const DecodeOpts& o, std::ostream& out) {
  o.cfg.validate();
  if (o.jobs < 1) throw ArgumentError("--jobs must be >= 1");
  if (o.timeout_ms < 1) throw ArgumentError("--timeout-ms must be >= 1");
  require_dir(o.models, "model directory");
  require_file(o.input, "input corpus");
  require_parent(o.output);
  require_parent(o.best);

  const ToyModels models = ToyModels::load(o.models);
  const auto sources = encode_sources(models.source_vocab, read_corpus(o.input));

  std::shared_ptr<const DirectScorer> direct;
  std::shared_ptr<const ChannelScorer> channel;
  std::shared_ptr<const LanguageModel> lm;
  if (!o.endpoint.empty()) {
    auto client = bridge::Client::connect(o.endpoint, {std::chrono::milliseconds(o.timeout_ms)});
    direct = std::make_shared<bridge::RemoteDirectScorer>(client, models.target_vocab.size());
    channel = std::make_shared<bridge::RemoteChannelScorer>(client);
    lm = std::make_shared<bridge::RemoteLanguageModel>(client);
  } else {
    direct = o.ensemble ? models.ensemble_scorer() : models.direct_scorer();
    channel = models.channel_scorer(o.prefix_channel);
    lm = models.language_model();
  }

  const bool noisy = o.mode == "noisy-channel";
  std::vector<std::vector<NBestEntry>> results(sources.size());
  parallel_for(sources.size(), o.jobs, [&](std::size_t i) {
    const auto hyps = noisy ? noisy_channel_beam_search(sources[i], {*direct, *channel, *lm}, o.cfg)
                            : beam_search_direct(sources[i], *direct, o.cfg);
    results[i] = to_nbest(hyps, static_cast<std::int64_t>(i), models.target_vocab, noisy);
  });

  std::vector<NBestEntry> all;
  std::vector<Sentence> best;
  for (auto& r : results) {
    best.push_back(r.empty() ? Sentence{} : r.front().tokens);
    for (auto& e : r) all.push_back(std::move(e));
  }
  write_nbest(o.output, all);
  if (!o.best.empty()) write_corpus(o.best, best);
  out << "decoded " << sources.size() << " sentences (" << all.size() << " n-best entries) to " << o.output << "\n";
  return kExitOk;
}

struct RerankOpts {
  std::string nbest, output, ref;
  WeightFlags weights;
  FeatureFlags features;
  int jobs = 1;
};

void add_rerank(CLI::App& app, RerankOpts& o) {
  auto* c = app.add_subcommand("rerank", "Select one candidate per sentence by a weighted feature sum");
  c->add_option("--nbest", o.nbest, "N-best file")->required();
  c->add_option("--output", o.output, "Selected translations, one per sentence id");
  c->add_option("--ref", o.ref, "Reference corpus; prints BLEU of the selections");
  o.weights.add_to(c);
  o.features.add_to(c);
  c->add_option("--jobs", o.jobs, "Threads for feature extraction");
}

int run_rerank(const RerankOpts& o, std::ostream& out) {
  require_file(o.nbest, "n-best file");
  require_file(o.ref, "reference corpus");
  require_file(o.weights.file, "weights file");
  require_parent(o.output);
  o.features.validate();
  const ScoreWeights w = o.weights.resolve();
  const auto groups = load_groups(o.nbest, o.features, o.jobs);
  const auto selections = rerank(groups, w);
  if (!o.output.empty()) write_selections(o.output, selections);
  if (!o.ref.empty()) out << bleu_report(selection_stats(selections, read_corpus(o.ref))) << "\n";
  return kExitOk;
}

struct OracleOpts {
  std::string nbest, output;
  WeightFlags weights;
};

void add_oracle(CLI::App& app, OracleOpts& o) {
  auto* c = app.add_subcommand("oracle", "Exhaustive reranking reference (for test harnesses)");
  c->group("");
  c->add_option("--nbest", o.nbest, "N-best file")->required();
  c->add_option("--output", o.output, "Selected translations")->required();
  o.weights.add_to(c);
}

int run_oracle(const OracleOpts& o) {
  require_file(o.nbest, "n-best file");
  require_file(o.weights.file, "weights file");
  require_parent(o.output);
  const ScoreWeights w = o.weights.resolve();
  const auto groups = group_by_sentence(read_nbest(o.nbest));
  std::vector<NBestEntry> selections;
  for (const auto& g : groups) selections.push_back(exhaustive_rerank(g, w));
  write_selections(o.output, selections);
  return kExitOk;
}

struct TuneOpts {
  std::string nbest, ref, output;
  std::string features = "ch+dir+lm";
  TuneConfig cfg;
  FeatureFlags extract;
  int jobs = 1;
};

void add_tune(CLI::App& app, TuneOpts& o) {
  auto* c = app.add_subcommand("tune", "Tune reranking weights for BLEU on a development n-best file");
  c->add_option("--nbest", o.nbest, "Development n-best file")->required();
  c->add_option("--ref", o.ref, "Development references")->required();
  c->add_option("--output", o.output, "Weights file to write")->required();
  c->add_option("--features", o.features, "Feature set, e.g. dir, dir+lm, ch+dir+lm, dir+rl");
  c->add_option("--trials", o.cfg.trials, "Random-search trials");
  c->add_option("--seed", o.cfg.seed, "Random seed");
  c->add_option("--weight-min", o.cfg.weight_min, "Lower bound for feature weights");
  c->add_option("--weight-max", o.cfg.weight_max, "Upper bound for feature weights");
  c->add_option("--reward-min", o.cfg.reward_min, "Lower bound for the word reward");
  c->add_option("--reward-max", o.cfg.reward_max, "Upper bound for the word reward");
  c->add_option("--refine-rounds", o.cfg.refine_rounds, "Coordinate refinement rounds");
  o.extract.add_to(c);
  c->add_option("--jobs", o.jobs, "Threads for feature extraction");
}

int run_tune(TuneOpts& o, std::ostream& out) {
  require_file(o.nbest, "n-best file");
  require_file(o.ref, "reference corpus");
  require_parent(o.output);
  o.extract.validate();
  o.cfg.features = FeatureSet::parse(o.features);
  o.cfg.seed = derive_seed(o.cfg.seed, "tune");
  o.cfg.validate();
  const auto groups = load_groups(o.nbest, o.extract, o.jobs);
  const auto refs = read_corpus(o.ref);
  const TuneResult r = tune(groups, refs, o.cfg);
  write_weights(o.output, r.weights);
  out << "dev BLEU = " << fixed(r.bleu, 2) << " after " << r.evaluations << " evaluations\n"
      << format_weights(r.weights);
  return kExitOk;
}

struct AnalyzeOpts {
  std::string nbest, source, ref, models, output, label;
  std::string target_lengths;
  std::string target_fractions;
  std::string source_fractions = "0.25,0.5,0.75,1";
  WeightFlags weights;
  bool prefix_channel = false;
  bool direct_full_source = false;
  int jobs = 1;
};

void add_analyze(CLI::App& app, AnalyzeOpts& o) {
  auto* c = app.add_subcommand("analyze-prefix",
                               "Rerank with truncated targets/sources and report BLEU of the full selections");
  c->add_option("--nbest", o.nbest, "N-best file")->required();
  c->add_option("--source", o.source, "Source corpus")->required();
  c->add_option("--ref", o.ref, "Reference corpus")->required();
  c->add_option("--models", o.models, "Toy model directory")->required();
  c->add_option("--output", o.output, "TSV output (default: stdout)");
  c->add_option("--label", o.label, "Feature-set label in the output (default: from the weights)");
  c->add_option("--target-lengths", o.target_lengths, "Comma-separated prefix lengths; 'full' allowed");
  c->add_option("--target-fractions", o.target_fractions, "Comma-separated target fractions");
  c->add_option("--source-fractions", o.source_fractions, "Comma-separated source fractions");
  o.weights.add_to(c);
  c->add_flag("--prefix-channel", o.prefix_channel, "Use the prefix-trained channel model");
  c->add_flag("--direct-full-source", o.direct_full_source, "Score the direct feature on the full source");
  c->add_option("--jobs", o.jobs, "Threads");
}

std::string label_for(const ScoreWeights& w) {
  FeatureSet fs{w.direct != 0.0, w.channel != 0.0, w.lm != 0.0, w.reverse != 0.0};
  return fs.name();
}

int run_analyze(const AnalyzeOpts& o, std::ostream& out) {
  require_file(o.nbest, "n-best file");
  require_file(o.source, "source corpus");
  require_file(o.ref, "reference corpus");
  require_dir(o.models, "model directory");
  require_file(o.weights.file, "weights file");
  require_parent(o.output);
  if (!o.target_lengths.empty() && !o.target_fractions.empty())
    throw ArgumentError("--target-lengths and --target-fractions are exclusive");

  // (label, spec template) per target setting.
  std::vector<std::pair<std::string, PrefixSpec>> targets;
  if (!o.target_fractions.empty()) {
    for (double f : parse_fractions(o.target_fractions, "target fraction")) {
      PrefixSpec p;
      p.target_fraction = f;
      targets.emplace_back(format_float(f), p);
    }
  } else {
    std::stringstream ss(o.target_lengths.empty() ? std::string("full") : o.target_lengths);
    std::string part;
    while (std::getline(ss, part, ',')) {
      PrefixSpec p;
      if (part != "full") {
        char* end = nullptr;
        const long k = std::strtol(part.c_str(), &end, 10);
        if (part.empty() || *end != '\0' || k < 1) throw ArgumentError("bad target length '" + part + "'");
        p.axis = PrefixSpec::TargetAxis::kLength;
        p.target_length = static_cast<std::size_t>(k);
      }
      targets.emplace_back(part, p);
    }
  }
  const auto source_fracs = parse_fractions(o.source_fractions, "source fraction");
  const ScoreWeights w = o.weights.resolve();
  const std::string label = o.label.empty() ? label_for(w) : o.label;

  FeatureFlags ff{o.models, o.source, o.prefix_channel};
  const auto loaded = load_features(ff);
  auto entries = read_nbest(o.nbest);
  if (entries.empty()) throw DataError("n-best file is empty: " + o.nbest);
  extract_features(entries, loaded.sources, loaded.models.target_vocab, loaded.scorers(), o.jobs);
  const auto groups = group_by_sentence(entries);
  const auto refs = read_corpus(o.ref);

  std::ostringstream table;
  table << "prefix_len\tsource_frac\tfeature_set\tbleu\n";
  for (const auto& [tlabel, base] : targets) {
    for (double sf : source_fracs) {
      PrefixSpec spec = base;
      spec.source_fraction = sf;
      spec.direct_full_source = o.direct_full_source;
      const auto r = prefix_rerank(groups, loaded.sources, refs, loaded.models.target_vocab, loaded.scorers(),
                                   spec, w, o.jobs);
      table << tlabel << '\t' << format_float(sf) << '\t' << label << '\t' << fixed(r.bleu, 4) << '\n';
    }
  }
  if (o.output.empty()) {
    out << table.str();
  } else {
    std::ofstream f(o.output, std::ios::binary);
    if (!f) throw DataError("cannot write " + o.output);
    f << table.str();
  }
  return kExitOk;
}

struct BleuOpts {
  std::string hyp, ref;
};

void add_bleu(CLI::App& app, BleuOpts& o) {
  auto* c = app.add_subcommand("bleu", "Corpus BLEU of a hypothesis file against one reference");
  c->add_option("--hyp", o.hyp, "Hypotheses, one tokenized sentence per line")->required();
  c->add_option("--ref", o.ref, "References, one tokenized sentence per line")->required();
}

int run_bleu(const BleuOpts& o, std::ostream& out) {
  require_file(o.hyp, "hypothesis file");
  require_file(o.ref, "reference file");
  const auto hyp = read_corpus(o.hyp);
  const auto ref = read_corpus(o.ref);
  if (hyp.size() != ref.size())
    throw DataError("hypothesis and reference line counts differ: " + std::to_string(hyp.size()) + " vs " +
                    std::to_string(ref.size()));
  if (hyp.empty()) throw DataError("empty corpus");
  BleuStats stats;
  for (std::size_t i = 0; i < hyp.size(); ++i) accumulate(stats, hyp[i], ref[i]);
  out << bleu_report(stats) << "\n";
  return kExitOk;
}

struct ServeOpts {
  std::string models;
  std::string endpoint = "stdio";
  bool ensemble = false;
  bool prefix_channel = false;
  bridge::ServeOptions serve;
};

void add_serve(CLI::App& app, ServeOpts& o) {
  auto* c = app.add_subcommand("serve-scorer", "Serve the toy scorers over the binary protocol");
  c->add_option("--models", o.models, "Toy model directory")->required();
  c->add_option("--endpoint", o.endpoint, "tcp:host:port (port 0 = ephemeral) or stdio");
  c->add_option("--workers", o.serve.workers, "Concurrent requests per connection");
  c->add_flag("--ensemble", o.ensemble, "Serve the direct ensemble");
  c->add_flag("--prefix-channel", o.prefix_channel, "Serve the prefix-trained channel");
  c->add_option("--fail-after", o.serve.fail_after, "Drop each connection after N replies (testing)")
      ->group("");
}

int run_serve(const ServeOpts& o, std::ostream& err) {
  require_dir(o.models, "model directory");
  if (o.serve.workers < 1) throw ArgumentError("--workers must be >= 1");
  const ToyModels models = ToyModels::load(o.models);
  bridge::ScorerSet scorers{o.ensemble ? models.ensemble_scorer() : models.direct_scorer(),
                            models.channel_scorer(o.prefix_channel), models.language_model(),
                            models.source_vocab.size(), models.target_vocab.size()};
  bridge::serve(o.endpoint, scorers, o.serve, [&](std::uint16_t port) {
    const auto ep = bridge::Endpoint::parse(o.endpoint);
    err << "listening on tcp:" << ep.host << ':' << port << std::endl;
  });
  return kExitOk;
}

}  // namespace

std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> rest;
  std::optional<std::string> config;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw ArgumentError("--config needs a file");
      config = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (!config) return args;
  std::ifstream in(*config);
  if (!in) throw DataError("config file not found: " + *config);
  std::vector<std::string> flags;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("malformed config line " + std::to_string(n) + ": " + line);
    std::string key = trim(line.substr(0, eq));
    std::replace(key.begin(), key.end(), '_', '-');
    if (key.empty() || key == "config") throw DataError("bad config key on line " + std::to_string(n));
    flags.push_back("--" + key + "=" + trim(line.substr(eq + 1)));
  }
  // Subcommand first, then file values, then the command line.
  std::vector<std::string> out;
  auto it = rest.begin();
  if (it != rest.end() && it->rfind("-", 0) != 0) out.push_back(*it++);
  out.insert(out.end(), flags.begin(), flags.end());
  out.insert(out.end(), it, rest.end());
  return out;
}

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Noisy-channel decoding, reranking and analysis toolkit", "nc"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.set_version_flag("--version", "nc 0.1.0");

  MakeSyntheticOpts synth;
  TrainOpts train;
  DecodeOpts decode;
  RerankOpts rerank_opts;
  OracleOpts oracle;
  TuneOpts tune_opts;
  AnalyzeOpts analyze;
  BleuOpts bleu_opts;
  ServeOpts serve_opts;
  add_make_synthetic(app, synth);
  add_train(app, train);
  add_decode(app, decode);
  add_rerank(app, rerank_opts);
  add_tune(app, tune_opts);
  add_analyze(app, analyze);
  add_bleu(app, bleu_opts);
  add_serve(app, serve_opts);
  add_oracle(app, oracle);

  try {
    auto args = expand_config(raw_args);
    std::reverse(args.begin(), args.end());
    try {
      app.parse(args);
    } catch (const CLI::CallForHelp&) {
      out << app.help();
      for (auto* sub : app.get_subcommands()) out << sub->help();
      return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
      out << app.help("", CLI::AppFormatMode::All);
      return kExitOk;
    } catch (const CLI::CallForVersion&) {
      out << "nc 0.1.0\n";
      return kExitOk;
    } catch (const CLI::ParseError& e) {
      err << "error: " << e.what() << "\n";
      return kExitUsage;
    }

    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "make-synthetic") return run_make_synthetic(synth, out);
    if (cmd == "train-toy") return run_train(train, out);
    if (cmd == "decode") return run_decode(decode, out);
    if (cmd == "rerank") return run_rerank(rerank_opts, out);
    if (cmd == "oracle") return run_oracle(oracle);
    if (cmd == "tune") return run_tune(tune_opts, out);
    if (cmd == "analyze-prefix") return run_analyze(analyze, out);
    if (cmd == "bleu") return run_bleu(bleu_opts, out);
    if (cmd == "serve-scorer") return run_serve(serve_opts, err);
    err << "error: unknown command " << cmd << "\n";
    return kExitUsage;
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace nc::cli
