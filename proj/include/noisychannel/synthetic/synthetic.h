#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "noisychannel/core/vocabulary.h"

namespace nc {

// Ground-truth generator: targets come from a sparse bigram LM; every target
// word emits one source word from a peaked lexical distribution in which
// several target words share a preferred source word; the source side is the
// reversed emission sequence.
struct SyntheticConfig {
  std::uint64_t seed = 1;
  int target_vocab = 50;
  int source_vocab = 40;
  int train = 2000;
  int dev = 1000;
  int test = 1000;
  int monolingual = 20000;
  int min_len = 3;
  int max_len = 7;
  int successors = 4;
  double lm_noise = 0.05;
  double primary_prob = 0.8;
  double secondary_prob = 0.15;
  bool reverse_source = true;

  void validate() const;
};

struct SyntheticSplit {
  std::vector<Sentence> source;
  std::vector<Sentence> target;
};

struct SyntheticCorpus {
  SyntheticSplit train;
  SyntheticSplit dev;
  SyntheticSplit test;
  std::vector<Sentence> monolingual;

  // Writes {train,dev,test}.{src,tgt} and mono.tgt.
  void save(const std::filesystem::path& dir) const;
  static SyntheticCorpus load(const std::filesystem::path& dir);
};

SyntheticCorpus make_synthetic(const SyntheticConfig& cfg);

}  // namespace nc
