#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "fixtures.hpp"
#include "support.hpp"
#include "windguard/corpus.hpp"

using namespace windguard;
using windguard::testing::TempDir;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run cli(const std::string& args) {
  const char* bin = std::getenv("WINDGUARD_CLI");
  if (bin == nullptr) throw std::runtime_error("WINDGUARD_CLI is not set");
  const std::string cmd = std::string(bin) + " " + args + " 2>/dev/null";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  Run r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

}  // namespace

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    if (std::getenv("WINDGUARD_CLI") == nullptr) GTEST_SKIP() << "WINDGUARD_CLI not set";
  }
  std::string dir(const std::string& name) { return (tmp / name).string(); }
  TempDir tmp;
};

TEST_F(Cli, GenerateAndCalibrate) {
  ASSERT_EQ(cli("gen --seed 5 --out " + dir("data")).code, 0);
  EXPECT_EQ(load_corpus(tmp / "data" / "corpus.jsonl").size(), 200u);
  const auto r = cli("calibrate --corpus " + dir("data/corpus.jsonl") + " --dict " + dir("data/dictionary.jsonl") +
                     " --metric both --out " + dir("cal"));
  ASSERT_EQ(r.code, 0);
  const std::string table =
      "metric,1,2,3,4,5,6,7,8,9,10\n"
      "emd,100,100,100,100,100,100,100,100,100,100\n"
      "cosine,100,100,100,100,100,100,100,100,100,100\n";
  EXPECT_EQ(read_file(tmp / "cal" / "accuracy_table.csv"), table);
  EXPECT_EQ(r.out.substr(0, table.size()), table);
  const auto thresholds = nlohmann::json::parse(read_file(tmp / "cal" / "thresholds.json"));
  EXPECT_EQ(thresholds["emd"].size(), 10u);
  EXPECT_EQ(thresholds["cosine"].size(), 10u);

  // Same seed, same bytes.
  ASSERT_EQ(cli("gen --seed 5 --out " + dir("again")).code, 0);
  EXPECT_EQ(read_file(tmp / "data" / "corpus.jsonl"), read_file(tmp / "again" / "corpus.jsonl"));

  const auto f = cli("filter --corpus " + dir("data/corpus.jsonl") + " --dict " + dir("data/dictionary.jsonl") +
                     " --thresholds " + dir("cal/thresholds.json") + " --out " + dir("flt"));
  ASSERT_EQ(f.code, 0);
  EXPECT_EQ(nlohmann::json::parse(f.out)["accuracy"], 100.0);
  const auto lines = read_file(tmp / "flt" / "filter.jsonl");
  EXPECT_EQ(std::count(lines.begin(), lines.end(), '\n'), 200);

  const auto roc = cli("roc --corpus " + dir("data/corpus.jsonl") + " --dict " + dir("data/dictionary.jsonl") +
                       " --metric emd --out " + dir("roc"));
  ASSERT_EQ(roc.code, 0);
  EXPECT_TRUE(std::filesystem::exists(tmp / "roc" / "roc" / "emd_3.csv"));
  EXPECT_TRUE(std::filesystem::exists(tmp / "roc" / "roc" / "emd_pooled.csv"));
  EXPECT_EQ(nlohmann::json::parse(read_file(tmp / "roc" / "roc_summary.json"))["emd"]["mean_auc"], 1.0);
}

TEST_F(Cli, DetectFlagsTheOutlier) {
  std::vector<SentenceRecord> records;
  for (const auto& v : fixtures::nine_and_one_outlier(3, 64, 4)) records.push_back({"r", 1, Label::unlabeled, v});
  for (std::size_t i = 0; i < records.size(); ++i) records[i].text = "response " + std::to_string(i);
  save_corpus(tmp / "samples.jsonl", records);
  const auto r = cli("detect --samples " + dir("samples.jsonl") + " --dim 64 --out " + dir("det"));
  ASSERT_EQ(r.code, 0);
  const auto doc = nlohmann::json::parse(read_file(tmp / "det" / "detect.json"));
  const auto flags = doc["results"][0]["flags"];
  ASSERT_EQ(flags.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(flags[i].get<bool>(), i == 4);
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(cli("").code, 2);
  EXPECT_EQ(cli("nonsense").code, 2);
  EXPECT_EQ(cli("calibrate --corpus x.jsonl").code, 2);
  EXPECT_EQ(cli("calibrate --metric euclid --corpus a --dict b").code, 2);
  EXPECT_EQ(cli("calibrate --corpus " + dir("missing.jsonl") + " --dict " + dir("missing.jsonl")).code, 3);
  {
    std::ofstream out(tmp / "bad.jsonl");
    out << R"({"text": "a", "category": 1, "label": "safe"})" << "\n{oops\n";
  }
  EXPECT_EQ(cli("filter --tau 0.1 --corpus " + dir("bad.jsonl") + " --dict " + dir("bad.jsonl")).code, 3);
  EXPECT_EQ(cli("--help").code, 0);
}
