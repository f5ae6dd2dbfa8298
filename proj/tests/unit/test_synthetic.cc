#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "noisychannel/core/error.h"
#include "noisychannel/synthetic/synthetic.h"
#include "test_util.h"

using namespace nc;

namespace {

SyntheticConfig small() {
  SyntheticConfig cfg;
  cfg.train = 300;
  cfg.dev = 50;
  cfg.test = 50;
  cfg.monolingual = 500;
  return cfg;
}

}  // namespace

TEST(Synthetic, SizesAndLengths) {
  const auto cfg = small();
  const auto c = make_synthetic(cfg);
  EXPECT_EQ(c.train.source.size(), 300u);
  EXPECT_EQ(c.dev.target.size(), 50u);
  EXPECT_EQ(c.test.source.size(), 50u);
  EXPECT_EQ(c.monolingual.size(), 500u);
  std::set<std::string> tgt_words, src_words;
  for (std::size_t i = 0; i < c.train.source.size(); ++i) {
    const auto& y = c.train.target[i];
    EXPECT_GE(y.size(), static_cast<std::size_t>(cfg.min_len));
    EXPECT_LE(y.size(), static_cast<std::size_t>(cfg.max_len));
    EXPECT_EQ(c.train.source[i].size(), y.size());
    tgt_words.insert(y.begin(), y.end());
    src_words.insert(c.train.source[i].begin(), c.train.source[i].end());
  }
  EXPECT_LE(tgt_words.size(), static_cast<std::size_t>(cfg.target_vocab));
  EXPECT_LE(src_words.size(), static_cast<std::size_t>(cfg.source_vocab));
  EXPECT_GT(tgt_words.size(), 30u);
}

TEST(Synthetic, DeterministicPerSeed) {
  auto cfg = small();
  const auto a = make_synthetic(cfg);
  const auto b = make_synthetic(cfg);
  EXPECT_EQ(a.train.source, b.train.source);
  EXPECT_EQ(a.test.target, b.test.target);
  EXPECT_EQ(a.monolingual, b.monolingual);
  cfg.seed = 2;
  EXPECT_NE(make_synthetic(cfg).train.target, a.train.target);
}

TEST(Synthetic, SplitSizesDoNotChangeOtherSplits) {
  auto cfg = small();
  const auto a = make_synthetic(cfg);
  cfg.dev = 80;
  const auto b = make_synthetic(cfg);
  EXPECT_EQ(a.train.target, b.train.target);
  EXPECT_EQ(a.test.target, b.test.target);
}

TEST(Synthetic, SaveLoadRoundTrip) {
  test::TempDir dir;
  const auto c = make_synthetic(small());
  c.save(dir.path());
  for (const char* f : {"train.src", "train.tgt", "dev.src", "dev.tgt", "test.src", "test.tgt", "mono.tgt"})
    EXPECT_TRUE(std::filesystem::exists(dir.path() / f)) << f;
  const auto back = SyntheticCorpus::load(dir.path());
  EXPECT_EQ(back.train.source, c.train.source);
  EXPECT_EQ(back.dev.target, c.dev.target);
  EXPECT_EQ(back.monolingual, c.monolingual);
}

TEST(Synthetic, LoadRejectsMismatchedSides) {
  test::TempDir dir;
  make_synthetic(small()).save(dir.path());
  std::ofstream(dir / "dev.src", std::ios::app) << "extra line\n";
  EXPECT_THROW(SyntheticCorpus::load(dir.path()), DataError);
}

TEST(Synthetic, ConfigValidation) {
  auto cfg = small();
  cfg.min_len = 0;
  EXPECT_THROW(make_synthetic(cfg), ArgumentError);
  cfg = small();
  cfg.max_len = 2;
  EXPECT_THROW(make_synthetic(cfg), ArgumentError);
  cfg = small();
  cfg.primary_prob = 0.9;
  cfg.secondary_prob = 0.2;
  EXPECT_THROW(make_synthetic(cfg), ArgumentError);
  cfg = small();
  cfg.target_vocab = 1;
  EXPECT_THROW(make_synthetic(cfg), ArgumentError);
}
