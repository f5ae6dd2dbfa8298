#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "noisychannel/cli/cli.h"
#include "noisychannel/core/error.h"
#include "noisychannel/core/nbest.h"
#include "noisychannel/core/parallel.h"
#include "noisychannel/decoder/decoder.h"
#include "noisychannel/eval/bleu.h"
#include "noisychannel/oracle/oracle.h"
#include "noisychannel/reranker/reranker.h"
#include "noisychannel/scorers/toy_models.h"
#include "noisychannel/synthetic/synthetic.h"

namespace py = pybind11;
using namespace nc;

namespace {

// Trained toy models plus the scorer objects built from them.
class Models {
 public:
  explicit Models(ToyModels m) : m_(std::move(m)) {
    direct_ = m_.direct_scorer();
    ensemble_ = m_.ensemble_scorer();
    channel_ = m_.channel_scorer(false);
    prefix_channel_ = m_.channel_scorer(true);
    lm_ = m_.language_model();
    reverse_ = m_.reverse_feature();
  }

  const ToyModels& toy() const { return m_; }

  const DirectScorer& direct(bool ensemble) const { return ensemble ? *ensemble_ : *direct_; }
  const ChannelScorer& channel(bool prefix) const { return prefix ? *prefix_channel_ : *channel_; }

  FeatureScorers scorers(bool prefix) const {
    return {direct_.get(), &channel(prefix), lm_.get(), reverse_.get()};
  }

  std::vector<TokenSequence> encode_sources(const std::vector<Sentence>& sources) const {
    std::vector<TokenSequence> out;
    out.reserve(sources.size());
    for (const auto& s : sources) out.push_back(m_.source_vocab.encode(s));
    return out;
  }

  std::vector<NBestEntry> decode(const Sentence& source, const DecoderConfig& cfg, bool noisy, bool ensemble,
                                 bool prefix_channel) const {
    const auto x = m_.source_vocab.encode(source);
    const auto hyps = noisy ? noisy_channel_beam_search(x, {direct(ensemble), channel(prefix_channel), *lm_}, cfg)
                            : beam_search_direct(x, direct(ensemble), cfg);
    return to_nbest(hyps, 0, m_.target_vocab, noisy);
  }

  double lm_logprob(const Sentence& target) const {
    return lm_->sequence_logprob(m_.target_vocab.encode(target));
  }
  double channel_score(const Sentence& source, const Sentence& target, bool prefix) const {
    return channel(prefix).score(m_.source_vocab.encode(source), m_.target_vocab.encode(target));
  }
  double direct_logprob(const Sentence& source, const Sentence& target) const {
    return direct_->sequence_logprob(m_.source_vocab.encode(source), m_.target_vocab.encode(target));
  }

 private:
  ToyModels m_;
  std::shared_ptr<const DirectScorer> direct_, ensemble_;
  std::shared_ptr<const ChannelScorer> channel_, prefix_channel_;
  std::shared_ptr<const LanguageModel> lm_;
  std::shared_ptr<const ReversedDirectFeature> reverse_;
};

std::string repr_weights(const ScoreWeights& w) {
  std::ostringstream s;
  s << "ScoreWeights(direct=" << w.direct << ", channel=" << w.channel << ", lm=" << w.lm
    << ", reverse=" << w.reverse << ", word_reward=" << w.word_reward << ")";
  return s.str();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Noisy-channel decoding, reranking and evaluation over toy models";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<ArgumentError>(m, "ArgumentError", base.ptr());
  py::register_exception<TransportError>(m, "TransportError", base.ptr());

  py::class_<Vocabulary>(m, "Vocabulary")
      .def_static("build", [](const std::vector<Sentence>& corpus, int min_count) {
        return Vocabulary::build(corpus, min_count);
      }, py::arg("corpus"), py::arg("min_count") = 1)
      .def("encode", [](const Vocabulary& v, const Sentence& s) { return v.encode(s); })
      .def("decode", [](const Vocabulary& v, const TokenSequence& ids) { return v.decode(ids); })
      .def("id", [](const Vocabulary& v, const std::string& t) { return v.id(t); })
      .def_property_readonly("tokens", &Vocabulary::tokens)
      .def("__len__", &Vocabulary::size);

  py::class_<DecoderConfig>(m, "DecoderConfig")
      .def(py::init([](int k1, int k2, double lambda1, double word_reward, bool per_word, double max_len_ratio,
                       int max_len_slack, int max_len) {
             DecoderConfig c{k1, k2, lambda1, word_reward, per_word, max_len_ratio, max_len_slack, max_len};
             c.validate();
             return c;
           }),
           py::arg("k1") = 5, py::arg("k2") = 10, py::arg("lambda1") = 1.0, py::arg("word_reward") = 0.0,
           py::arg("per_word") = true, py::arg("max_len_ratio") = 2.0, py::arg("max_len_slack") = 5,
           py::arg("max_len") = 0)
      .def_readwrite("k1", &DecoderConfig::k1)
      .def_readwrite("k2", &DecoderConfig::k2)
      .def_readwrite("lambda1", &DecoderConfig::lambda1)
      .def_readwrite("word_reward", &DecoderConfig::word_reward)
      .def_readwrite("per_word", &DecoderConfig::per_word)
      .def_readwrite("max_len_ratio", &DecoderConfig::max_len_ratio)
      .def_readwrite("max_len_slack", &DecoderConfig::max_len_slack)
      .def_readwrite("max_len", &DecoderConfig::max_len);

  m.def("combine", &combine, py::arg("direct_sum"), py::arg("channel_sum"), py::arg("lm_sum"), py::arg("t"),
        py::arg("s"), py::arg("config"));

  py::class_<NBestEntry>(m, "NBestEntry")
      .def(py::init([](std::int64_t id, Sentence tokens, std::map<std::string, double> features, double total) {
             return NBestEntry{id, std::move(tokens), std::move(features), total};
           }),
           py::arg("sentence_id"), py::arg("tokens"), py::arg("features"), py::arg("total") = 0.0)
      .def_readwrite("sentence_id", &NBestEntry::sentence_id)
      .def_readwrite("tokens", &NBestEntry::tokens)
      .def_readwrite("features", &NBestEntry::features)
      .def_readwrite("total", &NBestEntry::total)
      .def("__eq__", [](const NBestEntry& a, const NBestEntry& b) { return a == b; })
      .def("__repr__", [](const NBestEntry& e) { return "NBestEntry(" + format_nbest_line(e) + ")"; });

  m.def("read_nbest", py::overload_cast<const std::filesystem::path&>(&read_nbest), py::arg("path"));
  m.def("write_nbest",
        [](const std::filesystem::path& p, const std::vector<NBestEntry>& e) { write_nbest(p, e); },
        py::arg("path"), py::arg("entries"));
  m.def("group_by_sentence", [](const std::vector<NBestEntry>& e) { return group_by_sentence(e); });

  py::class_<ScoreWeights>(m, "ScoreWeights")
      .def(py::init<double, double, double, double, double>(), py::arg("direct") = 1.0, py::arg("channel") = 0.0,
           py::arg("lm") = 0.0, py::arg("reverse") = 0.0, py::arg("word_reward") = 0.0)
      .def_readwrite("direct", &ScoreWeights::direct)
      .def_readwrite("channel", &ScoreWeights::channel)
      .def_readwrite("lm", &ScoreWeights::lm)
      .def_readwrite("reverse", &ScoreWeights::reverse)
      .def_readwrite("word_reward", &ScoreWeights::word_reward)
      .def("scaled", &ScoreWeights::scaled)
      .def("__eq__", [](const ScoreWeights& a, const ScoreWeights& b) { return a == b; })
      .def("__repr__", &repr_weights);

  m.def("parse_weights", &parse_weights, py::arg("text"));
  m.def("format_weights", &format_weights, py::arg("weights"));
  m.def("rerank_score", &rerank_score, py::arg("entry"), py::arg("weights"));
  m.def("select_best", [](const std::vector<NBestEntry>& l, const ScoreWeights& w) { return select_best(l, w); },
        py::arg("entries"), py::arg("weights"));
  m.def("rerank",
        [](const std::vector<std::vector<NBestEntry>>& g, const ScoreWeights& w) { return rerank(g, w); },
        py::arg("groups"), py::arg("weights"));
  m.def("exhaustive_rerank",
        [](const std::vector<NBestEntry>& l, const ScoreWeights& w) { return exhaustive_rerank(l, w); },
        py::arg("entries"), py::arg("weights"));

  py::class_<TuneResult>(m, "TuneResult")
      .def_readonly("weights", &TuneResult::weights)
      .def_readonly("bleu", &TuneResult::bleu)
      .def_readonly("evaluations", &TuneResult::evaluations);

  m.def(
      "tune",
      [](const std::vector<std::vector<NBestEntry>>& groups, const std::vector<Sentence>& refs,
         const std::string& features, int trials, std::uint64_t seed) {
        TuneConfig cfg;
        cfg.features = FeatureSet::parse(features);
        cfg.trials = trials;
        cfg.seed = seed;
        py::gil_scoped_release release;
        return tune(groups, refs, cfg);
      },
      py::arg("groups"), py::arg("references"), py::arg("features") = "ch+dir+lm", py::arg("trials") = 200,
      py::arg("seed") = 1);

  m.def(
      "rerank_bleu",
      [](const std::vector<std::vector<NBestEntry>>& g, const std::vector<Sentence>& r, const ScoreWeights& w) {
        return rerank_bleu(g, r, w);
      },
      py::arg("groups"), py::arg("references"), py::arg("weights"));

  m.def(
      "bleu",
      [](const std::vector<Sentence>& hyps, const std::vector<Sentence>& refs) {
        if (hyps.size() != refs.size()) throw ArgumentError("hypothesis and reference counts differ");
        BleuStats st;
        for (std::size_t i = 0; i < hyps.size(); ++i) accumulate(st, hyps[i], refs[i]);
        return bleu(st);
      },
      py::arg("hypotheses"), py::arg("references"));
  m.def(
      "sentence_precisions",
      [](const Sentence& hyp, const Sentence& ref) { return precisions(sentence_stats(hyp, ref)); },
      py::arg("hypothesis"), py::arg("reference"));

  py::class_<SyntheticConfig>(m, "SyntheticConfig")
      .def(py::init<>())
      .def_readwrite("seed", &SyntheticConfig::seed)
      .def_readwrite("target_vocab", &SyntheticConfig::target_vocab)
      .def_readwrite("source_vocab", &SyntheticConfig::source_vocab)
      .def_readwrite("train", &SyntheticConfig::train)
      .def_readwrite("dev", &SyntheticConfig::dev)
      .def_readwrite("test", &SyntheticConfig::test)
      .def_readwrite("monolingual", &SyntheticConfig::monolingual)
      .def_readwrite("min_len", &SyntheticConfig::min_len)
      .def_readwrite("max_len", &SyntheticConfig::max_len);

  py::class_<SyntheticSplit>(m, "SyntheticSplit")
      .def_readonly("source", &SyntheticSplit::source)
      .def_readonly("target", &SyntheticSplit::target);
  py::class_<SyntheticCorpus>(m, "SyntheticCorpus")
      .def_readonly("train", &SyntheticCorpus::train)
      .def_readonly("dev", &SyntheticCorpus::dev)
      .def_readonly("test", &SyntheticCorpus::test)
      .def_readonly("monolingual", &SyntheticCorpus::monolingual)
      .def("save", &SyntheticCorpus::save);
  m.def("make_synthetic", &make_synthetic, py::arg("config") = SyntheticConfig{});

  py::class_<Models>(m, "Models")
      .def_static(
          "train",
          [](const std::vector<Sentence>& src, const std::vector<Sentence>& tgt, const std::vector<Sentence>& mono,
             std::uint64_t seed, int em_iterations, int lm_order) {
            ToyTrainOptions opts;
            opts.seed = seed;
            opts.em_iterations = em_iterations;
            opts.lm_order = lm_order;
            py::gil_scoped_release release;
            return Models(ToyModels::train(src, tgt, mono, opts));
          },
          py::arg("source"), py::arg("target"), py::arg("monolingual") = std::vector<Sentence>{},
          py::arg("seed") = 1, py::arg("em_iterations") = 10, py::arg("lm_order") = 3)
      .def_static("load", [](const std::filesystem::path& dir) { return Models(ToyModels::load(dir)); })
      .def("save", [](const Models& self, const std::filesystem::path& dir) { self.toy().save(dir); })
      .def_property_readonly("source_vocab", [](const Models& self) { return self.toy().source_vocab; })
      .def_property_readonly("target_vocab", [](const Models& self) { return self.toy().target_vocab; })
      .def("decode", &Models::decode, py::arg("source"), py::arg("config") = DecoderConfig{},
           py::arg("noisy_channel") = true, py::arg("ensemble") = false, py::arg("prefix_channel") = false,
           py::call_guard<py::gil_scoped_release>())
      .def(
          "extract_features",
          [](const Models& self, std::vector<NBestEntry> entries, const std::vector<Sentence>& sources,
             bool prefix_channel, int jobs) {
            const auto xs = self.encode_sources(sources);
            py::gil_scoped_release release;
            extract_features(entries, xs, self.toy().target_vocab, self.scorers(prefix_channel), jobs);
            return entries;
          },
          py::arg("entries"), py::arg("sources"), py::arg("prefix_channel") = false, py::arg("jobs") = 1)
      .def(
          "prefix_rerank",
          [](const Models& self, const std::vector<std::vector<NBestEntry>>& groups,
             const std::vector<Sentence>& sources, const std::vector<Sentence>& refs, const ScoreWeights& w,
             double target_fraction, int target_length, double source_fraction, bool prefix_channel, int jobs) {
            PrefixSpec spec;
            if (target_length > 0) {
              spec.axis = PrefixSpec::TargetAxis::kLength;
              spec.target_length = target_length;
            } else {
              spec.target_fraction = target_fraction;
            }
            spec.source_fraction = source_fraction;
            const auto xs = self.encode_sources(sources);
            PrefixRerankResult r;
            {
              py::gil_scoped_release release;
              r = prefix_rerank(groups, xs, refs, self.toy().target_vocab, self.scorers(prefix_channel), spec, w,
                                jobs);
            }
            return py::make_tuple(r.selections, r.bleu);
          },
          py::arg("groups"), py::arg("sources"), py::arg("references"), py::arg("weights"),
          py::arg("target_fraction") = 1.0, py::arg("target_length") = 0, py::arg("source_fraction") = 1.0,
          py::arg("prefix_channel") = false, py::arg("jobs") = 1)
      .def("lm_logprob", &Models::lm_logprob, py::arg("target"))
      .def("channel_score", &Models::channel_score, py::arg("source"), py::arg("target"),
           py::arg("prefix_channel") = false)
      .def("direct_logprob", &Models::direct_logprob, py::arg("source"), py::arg("target"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs one `nc` subcommand in-process; returns (exit code, stdout, stderr).");
}
