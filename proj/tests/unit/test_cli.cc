#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "noisychannel/cli/cli.h"
#include "test_util.h"

using namespace nc;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// Shared corpus and models, built once through the CLI itself.
struct Workspace {
  test::TempDir dir;
  std::string data, models;

  Workspace() {
    data = dir / "data";
    models = dir / "models";
    const auto a = run({"make-synthetic", "--out", data, "--train", "400", "--dev", "40", "--test", "40",
                        "--mono", "1000"});
    EXPECT_EQ(a.code, 0) << a.err;
    const auto b = run({"train-toy", "--src", data + "/train.src", "--tgt", data + "/train.tgt", "--mono",
                        data + "/mono.tgt", "--out", models});
    EXPECT_EQ(b.code, 0) << b.err;
  }
  std::string src() const { return data + "/dev.src"; }
  std::string ref() const { return data + "/dev.tgt"; }
};

Workspace& ws() {
  static Workspace w;
  return w;
}

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

}  // namespace

TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run({}).code, 1);
  const auto unknown = run({"frobnicate"});
  EXPECT_EQ(unknown.code, 1);
  EXPECT_EQ(unknown.err.rfind("error:", 0), 0u);
  EXPECT_EQ(run({"bleu", "--hyp", "x"}).code, 1);
  EXPECT_EQ(run({"decode", "--k1", "abc"}).code, 1);
  EXPECT_EQ(run({"bleu", "--hyp", "a", "--ref", "b", "--bogus"}).code, 1);
  EXPECT_EQ(run({"--help"}).code, 0);
  EXPECT_EQ(run({"decode", "--help"}).code, 0);
}

TEST(Cli, DataErrorsExitTwo) {
  test::TempDir dir;
  const auto r = run({"bleu", "--hyp", dir / "missing.txt", "--ref", dir / "missing.txt"});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(r.err.rfind("error:", 0), 0u);
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);
  EXPECT_EQ(run({"decode", "--models", dir / "nomodels", "--input", ws().src(), "--output", dir / "o"}).code, 2);
  EXPECT_FALSE(std::filesystem::exists(dir / "o"));
}

TEST(Cli, InvalidValuesExitOne) {
  test::TempDir dir;
  EXPECT_EQ(run({"decode", "--models", ws().models, "--input", ws().src(), "--output", dir / "o", "--k1", "0"})
                .code,
            1);
}

TEST(Cli, BleuOfIdenticalFilesIsHundred) {
  const auto r = run({"bleu", "--hyp", ws().ref(), "--ref", ws().ref()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("BLEU = 100.00, 100.0/100.0/100.0/100.0", 0), 0u) << r.out;
}

TEST(Cli, DecodeIsIdempotentAndJobsIndependent) {
  test::TempDir dir;
  const std::vector<std::string> base{"decode", "--models", ws().models, "--input", ws().src(), "--mode",
                                      "noisy-channel", "--k1", "5", "--k2", "10", "--lambda1", "0.8"};
  auto with = [&](std::vector<std::string> extra) {
    auto a = base;
    a.insert(a.end(), extra.begin(), extra.end());
    return a;
  };
  ASSERT_EQ(run(with({"--output", dir / "a", "--jobs", "1"})).code, 0);
  ASSERT_EQ(run(with({"--output", dir / "b", "--jobs", "1"})).code, 0);
  ASSERT_EQ(run(with({"--output", dir / "c", "--jobs", "4"})).code, 0);
  EXPECT_FALSE(slurp(dir / "a").empty());
  EXPECT_EQ(slurp(dir / "a"), slurp(dir / "b"));
  EXPECT_EQ(slurp(dir / "a"), slurp(dir / "c"));
}

TEST(Cli, DirectRerankReproducesDecoderTop) {
  test::TempDir dir;
  for (const std::string mode : {"direct", "noisy-channel"}) {
    const auto d = run({"decode", "--models", ws().models, "--input", ws().src(), "--output", dir / "nb",
                        "--best", dir / "best", "--mode", mode, "--lambda1", "0", "--per-word", "false",
                        "--word-reward", "0.3", "--k1", "5"});
    ASSERT_EQ(d.code, 0) << d.err;
    const auto r = run({"rerank", "--nbest", dir / "nb", "--output", dir / "sel", "--w-direct", "1", "--w-channel",
                        "0", "--w-lm", "0", "--w-reverse", "0", "--word-reward", "0.3"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(slurp(dir / "sel"), slurp(dir / "best")) << mode;
  }
}

TEST(Cli, AnalyzePrefixAtFullEqualsRerank) {
  test::TempDir dir;
  ASSERT_EQ(run({"decode", "--models", ws().models, "--input", ws().src(), "--output", dir / "nb", "--k1", "8"})
                .code,
            0);
  const std::vector<std::string> w{"--w-direct", "1", "--w-channel", "0.7", "--w-lm", "0.4", "--word-reward", "0.2"};
  std::vector<std::string> rerank{"rerank", "--nbest", dir / "nb", "--ref", ws().ref(), "--models", ws().models,
                                  "--source", ws().src()};
  rerank.insert(rerank.end(), w.begin(), w.end());
  const auto r = run(rerank);
  ASSERT_EQ(r.code, 0) << r.err;
  std::vector<std::string> analyze{"analyze-prefix", "--nbest", dir / "nb", "--source", ws().src(), "--ref",
                                   ws().ref(), "--models", ws().models, "--target-lengths", "full",
                                   "--source-fractions", "1"};
  analyze.insert(analyze.end(), w.begin(), w.end());
  const auto a = run(analyze);
  ASSERT_EQ(a.code, 0) << a.err;
  std::istringstream rows(a.out);
  std::string header, len, frac, label;
  double b = -1;
  std::getline(rows, header);
  EXPECT_EQ(header, "prefix_len\tsource_frac\tfeature_set\tbleu");
  rows >> len >> frac >> label >> b;
  EXPECT_EQ(len, "full");
  EXPECT_EQ(label, "ch+dir+lm");
  char expected[64];
  std::snprintf(expected, sizeof expected, "BLEU = %.2f,", b);
  EXPECT_EQ(r.out.rfind(expected, 0), 0u) << r.out << " vs " << a.out;
}

TEST(Cli, AnalyzePrefixGrid) {
  test::TempDir dir;
  ASSERT_EQ(run({"decode", "--models", ws().models, "--input", ws().src(), "--output", dir / "nb"}).code, 0);
  const auto a = run({"analyze-prefix", "--nbest", dir / "nb", "--source", ws().src(), "--ref", ws().ref(),
                      "--models", ws().models, "--target-lengths", "1,2,full", "--source-fractions", "0.5,1",
                      "--w-lm", "1", "--output", dir / "t.tsv"});
  ASSERT_EQ(a.code, 0) << a.err;
  const auto table = slurp(dir / "t.tsv");
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 7);
  EXPECT_EQ(run({"analyze-prefix", "--nbest", dir / "nb", "--source", ws().src(), "--ref", ws().ref(), "--models",
                 ws().models, "--target-lengths", "1", "--target-fractions", "0.5"})
                .code,
            1);
}

TEST(Cli, TuneIsIdempotentAndWritesLoadableWeights) {
  test::TempDir dir;
  ASSERT_EQ(run({"decode", "--models", ws().models, "--input", ws().src(), "--output", dir / "nb"}).code, 0);
  const std::vector<std::string> tune{"tune", "--nbest", dir / "nb", "--ref", ws().ref(), "--models", ws().models,
                                      "--source", ws().src(), "--trials", "20", "--seed", "3"};
  auto a = tune, b = tune;
  a.insert(a.end(), {"--output", dir / "w1"});
  b.insert(b.end(), {"--output", dir / "w2", "--jobs", "3"});
  const auto ra = run(a);
  ASSERT_EQ(ra.code, 0) << ra.err;
  EXPECT_EQ(first_line(ra.out).rfind("dev BLEU = ", 0), 0u);
  ASSERT_EQ(run(b).code, 0);
  EXPECT_EQ(slurp(dir / "w1"), slurp(dir / "w2"));
  const auto r = run({"rerank", "--nbest", dir / "nb", "--weights", dir / "w1", "--ref", ws().ref(), "--models",
                      ws().models, "--source", ws().src()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto tuned = first_line(ra.out).substr(11, first_line(ra.out).find(' ', 11) - 11);
  EXPECT_EQ(r.out.rfind("BLEU = " + tuned + ",", 0), 0u) << r.out << " vs " << ra.out;
}

TEST(Cli, OracleCommandMatchesRerank) {
  test::TempDir dir;
  ASSERT_EQ(run({"decode", "--models", ws().models, "--input", ws().src(), "--output", dir / "nb", "--mode",
                 "noisy-channel"})
                .code,
            0);
  const std::vector<std::string> w{"--w-direct", "0.5", "--w-channel", "1", "--w-lm", "0.25"};
  std::vector<std::string> a{"rerank", "--nbest", dir / "nb", "--output", dir / "r"};
  std::vector<std::string> b{"oracle", "--nbest", dir / "nb", "--output", dir / "o"};
  a.insert(a.end(), w.begin(), w.end());
  b.insert(b.end(), w.begin(), w.end());
  ASSERT_EQ(run(a).code, 0);
  ASSERT_EQ(run(b).code, 0);
  EXPECT_EQ(slurp(dir / "r"), slurp(dir / "o"));
}

TEST(Cli, MakeSyntheticIsIdempotent) {
  test::TempDir dir;
  ASSERT_EQ(run({"make-synthetic", "--out", dir / "a", "--train", "50", "--dev", "5", "--test", "5", "--mono", "20",
                 "--seed", "9"})
                .code,
            0);
  ASSERT_EQ(run({"make-synthetic", "--out", dir / "b", "--train", "50", "--dev", "5", "--test", "5", "--mono", "20",
                 "--seed", "9"})
                .code,
            0);
  for (const char* f : {"train.src", "train.tgt", "dev.src", "test.tgt", "mono.tgt"})
    EXPECT_EQ(slurp(dir / (std::string("a/") + f)), slurp(dir / (std::string("b/") + f))) << f;
}

TEST(Cli, ConfigFileWithFlagOverride) {
  test::TempDir dir;
  std::ofstream(dir / "run.cfg") << "# decode settings\nk1 = 3\nmode = noisy-channel\nmax_len_ratio = 1.5\n";
  const std::vector<std::string> common{"decode", "--models", ws().models, "--input", ws().src()};
  auto a = common, b = common, c = common;
  a.insert(a.end(), {"--config", dir / "run.cfg", "--output", dir / "a"});
  b.insert(b.end(), {"--output", dir / "b", "--k1", "3", "--mode", "noisy-channel", "--max-len-ratio", "1.5"});
  c.insert(c.end(), {"--config", dir / "run.cfg", "--output", dir / "c", "--k1", "2"});
  ASSERT_EQ(run(a).code, 0);
  ASSERT_EQ(run(b).code, 0);
  ASSERT_EQ(run(c).code, 0);
  EXPECT_EQ(slurp(dir / "a"), slurp(dir / "b"));
  auto d = common;
  d.insert(d.end(), {"--output", dir / "d", "--k1", "2", "--mode", "noisy-channel", "--max-len-ratio", "1.5"});
  ASSERT_EQ(run(d).code, 0);
  EXPECT_EQ(slurp(dir / "c"), slurp(dir / "d"));
  EXPECT_NE(slurp(dir / "a"), slurp(dir / "c"));

  std::ofstream(dir / "bad.cfg") << "no_such_key = 1\n";
  auto e = common;
  e.insert(e.end(), {"--config", dir / "bad.cfg", "--output", dir / "e"});
  EXPECT_EQ(run(e).code, 1);
  auto f = common;
  f.insert(f.end(), {"--config", dir / "none.cfg", "--output", dir / "f"});
  EXPECT_EQ(run(f).code, 2);
}

TEST(Cli, ExpandConfigPlacesFileValuesFirst) {
  test::TempDir dir;
  std::ofstream(dir / "x.cfg") << "k1=4  # beam\n\nlambda1 = 0.5\n";
  const auto args = cli::expand_config({"decode", "--config=" + dir / "x.cfg", "--k1", "2"});
  EXPECT_EQ(args, (std::vector<std::string>{"decode", "--k1=4", "--lambda1=0.5", "--k1", "2"}));
}

#ifdef NC_BINARY
TEST(Cli, StdioRemoteDecodeMatchesLocal) {
  test::TempDir dir;
  const std::vector<std::string> common{"decode", "--models", ws().models, "--input", ws().src(), "--mode",
                                        "noisy-channel", "--k1", "3", "--k2", "6"};
  auto local = common, remote = common, failing = common;
  local.insert(local.end(), {"--output", dir / "local"});
  const std::string server = std::string(NC_BINARY) + " serve-scorer --models " + ws().models;
  remote.insert(remote.end(), {"--output", dir / "remote", "--endpoint", "stdio:" + server, "--jobs", "3"});
  failing.insert(failing.end(), {"--output", dir / "failing", "--endpoint", "stdio:" + server + " --fail-after 20"});
  ASSERT_EQ(run(local).code, 0);
  const auto r = run(remote);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(dir / "local"), slurp(dir / "remote"));
  const auto f = run(failing);
  EXPECT_EQ(f.code, 2);
  EXPECT_EQ(f.err.rfind("error:", 0), 0u);
  EXPECT_FALSE(std::filesystem::exists(dir / "failing"));
}
#endif
