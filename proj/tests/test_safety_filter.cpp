#include <gtest/gtest.h>

#include <random>

#include "support.hpp"
#include "windguard/corpus.hpp"
#include "windguard/errors.hpp"
#include "windguard/safety_filter.hpp"

using namespace windguard;
using windguard::testing::random_vector;
using windguard::testing::record;
using windguard::testing::TempDir;
using windguard::testing::vec;

namespace {

UnsafeConceptsDictionary small_dictionary() {
  return UnsafeConceptsDictionary({
      record("climb without a harness", 1, Label::unsafe, vec({0.0, 0.0, 1.0})),
      record("skip the lockout", 2, Label::unsafe, vec({0.0, 1.0, 2.0})),
      record("work under a suspended load", 2, Label::unsafe, vec({5.0, 5.0, 5.0})),
  });
}

ThresholdConfig uniform(const UnsafeConceptsDictionary& dict, Metric metric, double tau) {
  ThresholdConfig cfg;
  for (const auto& [c, idx] : dict.categories()) cfg.set(c, metric, tau);
  return cfg;
}

}  // namespace

TEST(Dictionary, ValidatesEntries) {
  EXPECT_THROW(UnsafeConceptsDictionary({record("x", 1, Label::safe, vec({1}))}), ContractError);
  EXPECT_THROW(UnsafeConceptsDictionary({record("x", 1, Label::unsafe)}), ContractError);
  EXPECT_THROW(UnsafeConceptsDictionary({record("x", 1, Label::unsafe, vec({1})),
                                         record("y", 1, Label::unsafe, vec({1, 2}))}),
               ContractError);
  const auto d = small_dictionary();
  EXPECT_EQ(d.size(), 3u);
  EXPECT_EQ(d.dimension(), 3u);
  EXPECT_EQ(d.categories().at(2), (std::vector<std::size_t>{1, 2}));
}

TEST(Dictionary, AddBumpsVersionAndRejectsDuplicates) {
  auto d = small_dictionary();
  const auto v0 = d.version();
  EXPECT_TRUE(d.add(record("open the hatch in high wind", 3, Label::unsafe, vec({1, 1, 1}))));
  EXPECT_EQ(d.version(), v0 + 1);
  EXPECT_FALSE(d.add(record("open the hatch in high wind", 3, Label::unsafe, vec({1, 1, 1}))));
  EXPECT_EQ(d.version(), v0 + 1);
  EXPECT_TRUE(d.add(record("open the hatch in high wind", 4, Label::unsafe, vec({1, 1, 1}))));
  EXPECT_THROW(d.add(record("z", 1, Label::unsafe, vec({1}))), ContractError);
}

TEST(Thresholds, RangesAndJson) {
  ThresholdConfig cfg;
  EXPECT_THROW(cfg.set(1, Metric::cosine, 1.2), ContractError);
  EXPECT_THROW(cfg.set(1, Metric::cosine, -0.1), ContractError);
  EXPECT_THROW(cfg.set(1, Metric::emd, -0.1), ContractError);
  EXPECT_THROW(cfg.set(1, Metric::emd, NAN), ContractError);
  cfg.set(1, Metric::emd, 2.5);
  cfg.set(3, Metric::cosine, 0.8);
  const auto j = to_json(cfg);
  EXPECT_EQ(j["emd"]["1"], 2.5);
  EXPECT_EQ(thresholds_from_json(j), cfg);
  EXPECT_THROW(thresholds_from_json(nlohmann::json::parse(R"({"l2": {"1": 0.1}})")), ContractError);
  EXPECT_THROW(thresholds_from_json(nlohmann::json::parse(R"({"emd": {"one": 0.1}})")), ContractError);
}

TEST(Classify, IdenticalResponseIsUnsafeWithZeroScore) {
  HashingEmbedder e(64);
  const std::string text = "No fall protection measures should be required as the gearbox is away from hatches.";
  UnsafeConceptsDictionary dict({record(text, 5, Label::unsafe, e.embed(text)),
                                 record("Remove the guard while the rotor turns.", 6, Label::unsafe,
                                        e.embed("Remove the guard while the rotor turns."))});
  const auto d = classify(e.embed(text), dict, Metric::emd, uniform(dict, Metric::emd, 0.1));
  EXPECT_EQ(d.verdict, Verdict::unsafe);
  EXPECT_EQ(d.score, 0.0);
  EXPECT_EQ(d.category, 5);
  EXPECT_EQ(d.matched_entry, 0u);
  EXPECT_EQ(d.matched_text, text);
}

TEST(Classify, ZeroThresholdNeverFiresOnPositiveDistance) {
  const auto dict = small_dictionary();
  std::mt19937_64 rng(1);
  const auto cfg = uniform(dict, Metric::emd, 0.0);
  for (int t = 0; t < 200; ++t) {
    const auto d = classify(random_vector(rng, 3), dict, Metric::emd, cfg);
    EXPECT_EQ(d.verdict, Verdict::safe);
    EXPECT_GT(d.score, 0.0);
  }
}

TEST(Classify, StrictInequalityAtTheThreshold) {
  const auto dict = small_dictionary();
  // EMD to entry 0 ({0,0,1}) is exactly 1/3.
  const auto response = vec({0.0, 0.0, 0.0});
  EXPECT_DOUBLE_EQ(wasserstein_distance(response, vec({0, 0, 1})), 1.0 / 3.0);
  ThresholdConfig cfg = uniform(dict, Metric::emd, 0.0);
  cfg.set(1, Metric::emd, 1.0 / 3.0);
  EXPECT_EQ(classify(response, dict, Metric::emd, cfg).verdict, Verdict::safe);
  cfg.set(1, Metric::emd, std::nextafter(1.0 / 3.0, 1.0));
  EXPECT_EQ(classify(response, dict, Metric::emd, cfg).verdict, Verdict::unsafe);

  const auto c = cosine_similarity(vec({1, 1, 1}), vec({5, 5, 5}));
  ThresholdConfig ccfg = uniform(dict, Metric::cosine, 1.0);
  ccfg.set(2, Metric::cosine, c);
  EXPECT_EQ(classify(vec({1, 1, 1}), dict, Metric::cosine, ccfg).verdict, Verdict::safe);
  ccfg.set(2, Metric::cosine, std::nextafter(c, 0.0));
  EXPECT_EQ(classify(vec({1, 1, 1}), dict, Metric::cosine, ccfg).verdict, Verdict::unsafe);
}

TEST(Classify, ConfigurationErrors) {
  ThresholdConfig cfg;
  EXPECT_THROW(classify(vec({1, 2, 3}), UnsafeConceptsDictionary{}, Metric::emd, cfg), ConfigurationError);
  const auto dict = small_dictionary();
  cfg.set(1, Metric::emd, 0.5);
  EXPECT_THROW(classify(vec({1, 2, 3}), dict, Metric::emd, cfg), ConfigurationError);
  cfg.set(2, Metric::emd, 0.5);
  EXPECT_NO_THROW(classify(vec({1, 2, 3}), dict, Metric::emd, cfg));
  EXPECT_THROW(classify(vec({1, 2}), dict, Metric::emd, cfg), ContractError);
}

TEST(Classify, SafeDecisionReportsGlobalNearest) {
  const auto dict = small_dictionary();
  const auto d = classify(vec({4.9, 5.0, 5.1}), dict, Metric::emd, uniform(dict, Metric::emd, 0.0));
  EXPECT_EQ(d.verdict, Verdict::safe);
  EXPECT_EQ(d.category, 2);
  EXPECT_EQ(d.matched_entry, 2u);
}

TEST(Classify, UnsafeDecisionReportsNearestFiringCategory) {
  const auto dict = small_dictionary();
  // Nearest entry overall is in category 2, but only category 1 fires.
  const auto response = vec({0.0, 0.9, 1.9});
  ThresholdConfig cfg;
  cfg.set(1, Metric::emd, 10.0);
  cfg.set(2, Metric::emd, 0.0);
  const auto d = classify(response, dict, Metric::emd, cfg);
  EXPECT_EQ(d.verdict, Verdict::unsafe);
  EXPECT_EQ(d.category, 1);
  EXPECT_EQ(d.matched_entry, 0u);
}

TEST(Classify, TiesGoToLowestIndex) {
  // Entries 1 and 2 are permutations of each other, so EMD cannot tell them apart.
  UnsafeConceptsDictionary dict({record("a", 1, Label::unsafe, vec({9, 9, 9})),
                                 record("b", 2, Label::unsafe, vec({1, 2, 3})),
                                 record("c", 2, Label::unsafe, vec({3, 2, 1}))});
  const auto cfg = uniform(dict, Metric::emd, 0.5);
  const auto d = classify(vec({1, 2, 3.3}), dict, Metric::emd, cfg);
  EXPECT_EQ(d.matched_entry, 1u);
  UnsafeConceptsDictionary swapped({record("a", 1, Label::unsafe, vec({9, 9, 9})),
                                    record("c", 2, Label::unsafe, vec({3, 2, 1})),
                                    record("b", 2, Label::unsafe, vec({1, 2, 3}))});
  const auto d2 = classify(vec({1, 2, 3.3}), swapped, Metric::emd, cfg);
  EXPECT_EQ(d2.matched_entry, 1u);
  EXPECT_EQ(d2.verdict, d.verdict);
  EXPECT_EQ(d2.score, d.score);
}

TEST(Classify, MonotoneInThresholdAndDictionary) {
  std::mt19937_64 rng(77);
  for (int t = 0; t < 200; ++t) {
    std::vector<SentenceRecord> entries;
    for (int k = 0; k < 6; ++k) {
      entries.push_back(record("e" + std::to_string(k), 1 + k % 3, Label::unsafe, random_vector(rng, 8)));
    }
    UnsafeConceptsDictionary dict(entries);
    const auto response = random_vector(rng, 8);
    const double tau = std::uniform_real_distribution<double>(0.0, 0.6)(rng);
    const auto before = classify(response, dict, Metric::emd, uniform(dict, Metric::emd, tau));
    const auto raised = classify(response, dict, Metric::emd, uniform(dict, Metric::emd, tau + 0.1));
    if (before.verdict == Verdict::unsafe) EXPECT_EQ(raised.verdict, Verdict::unsafe);

    auto grown = dict;
    grown.add(record("new", 1 + t % 3, Label::unsafe, random_vector(rng, 8)));
    const auto after = classify(response, grown, Metric::emd, uniform(grown, Metric::emd, tau));
    if (before.verdict == Verdict::unsafe) EXPECT_EQ(after.verdict, Verdict::unsafe);

    // Pure function of its inputs.
    EXPECT_EQ(classify(response, dict, Metric::emd, uniform(dict, Metric::emd, tau)), before);
  }
}

TEST(SplitSentences, Boundaries) {
  EXPECT_EQ(split_sentences("One. Two! Three? Four"),
            (std::vector<std::string>{"One.", "Two!", "Three?", "Four"}));
  EXPECT_EQ(split_sentences("Torque to 4.5 kNm. Done."), (std::vector<std::string>{"Torque to 4.5 kNm.", "Done."}));
  EXPECT_EQ(split_sentences("Wait... what?!  Ok"), (std::vector<std::string>{"Wait...", "what?!", "Ok"}));
  EXPECT_TRUE(split_sentences("   ").empty());
}

TEST(ClassifyResponse, AnyUnsafeSentenceMakesTheResponseUnsafe) {
  HashingEmbedder e(64);
  const std::string bad = "Disable the brake before climbing.";
  UnsafeConceptsDictionary dict({record(bad, 2, Label::unsafe, e.embed(bad))});
  ThresholdConfig cfg;
  cfg.set(2, Metric::emd, 1e-9);
  const auto rd = classify_response("Check the oil level. " + bad + " Then log the job.", dict, e, Metric::emd, cfg);
  EXPECT_EQ(rd.decision.verdict, Verdict::unsafe);
  EXPECT_EQ(rd.sentence, bad);
  ASSERT_EQ(rd.per_sentence.size(), 3u);
  EXPECT_EQ(rd.per_sentence[0].verdict, Verdict::safe);
  EXPECT_EQ(rd.per_sentence[1].verdict, Verdict::unsafe);

  const auto ok = classify_response("Check the oil level. Then log the job.", dict, e, Metric::emd, cfg);
  EXPECT_EQ(ok.decision.verdict, Verdict::safe);
  EXPECT_THROW(classify_response("  ", dict, e, Metric::emd, cfg), ContractError);
}

TEST(AddVerifiedUnsafe, GrowsTheDictionary) {
  HashingEmbedder e(32);
  UnsafeConceptsDictionary dict({record("Stand under the nacelle during lifting.", 1, Label::unsafe,
                                        e.embed("Stand under the nacelle during lifting."))});
  const auto sentence = record("Skip the pre-climb inspection.", 1, Label::unlabeled);
  const auto out = add_verified_unsafe(sentence, dict, e);
  EXPECT_TRUE(out.added);
  EXPECT_EQ(out.dictionary.size(), dict.size() + 1);
  EXPECT_EQ(out.dictionary.version(), dict.version() + 1);
  EXPECT_EQ(out.dictionary.entries().back().label, Label::unsafe);

  ThresholdConfig cfg;
  cfg.set(1, Metric::emd, 1e-6);
  const auto d = classify(e.embed(sentence.text), out.dictionary, Metric::emd, cfg);
  EXPECT_EQ(d.verdict, Verdict::unsafe);
  EXPECT_EQ(d.score, 0.0);

  const auto dup = add_verified_unsafe(sentence, out.dictionary, e);
  EXPECT_FALSE(dup.added);
  EXPECT_FALSE(dup.notice.empty());
  EXPECT_EQ(dup.dictionary.size(), out.dictionary.size());
  EXPECT_EQ(dup.dictionary.version(), out.dictionary.version());
}

TEST(DictionaryFiles, SaveLoadWithHeader) {
  TempDir dir;
  HashingEmbedder e(16);
  auto dict = small_dictionary();
  dict = UnsafeConceptsDictionary(dict.entries(), 7);
  save_dictionary(dir / "d.jsonl", dict, {{"emd", 0.02}});
  EXPECT_TRUE(std::filesystem::exists(dir / "d.header.json"));
  const auto header = nlohmann::json::parse(read_file(dir / "d.header.json"));
  EXPECT_EQ(header["version"], 7);
  EXPECT_EQ(header["dimension"], 3);
  EXPECT_EQ(header["metric_defaults"]["emd"], 0.02);
  const auto loaded = load_dictionary(dir / "d.jsonl");
  EXPECT_EQ(loaded.entries(), dict.entries());
  EXPECT_EQ(loaded.version(), 7u);
}

TEST(DictionaryFiles, EmbedsMissingVectorsAndSkipsSafeLines) {
  TempDir dir;
  HashingEmbedder e(16);
  save_corpus(dir / "d.jsonl", {record("Do not wear gloves near the slip ring.", 1, Label::unsafe),
                                record("Wear gloves.", 1, Label::safe),
                                record("Bypass the overspeed sensor.", 2, Label::unlabeled)});
  const auto dict = load_dictionary(dir / "d.jsonl", &e);
  ASSERT_EQ(dict.size(), 2u);
  EXPECT_EQ(dict.entries()[1].label, Label::unsafe);
  EXPECT_EQ(*dict.entries()[0].embedding, e.embed("Do not wear gloves near the slip ring."));
  EXPECT_THROW(load_dictionary(dir / "d.jsonl"), ContractError);
}
