#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "fixtures.hpp"
#include "support.hpp"
#include "windguard/errors.hpp"
#include "windguard/hallucination.hpp"

using namespace windguard;
using windguard::testing::random_vector;
using windguard::testing::record;
using windguard::testing::vec;

TEST(HallucinationConfig, DefaultsAndValidation) {
  HallucinationConfig cfg;
  EXPECT_EQ(cfg.limiting_threshold, 0.0042);
  EXPECT_EQ(cfg.occurrence_threshold, 0.40);
  EXPECT_EQ(cfg.metric, Metric::emd);
  EXPECT_NO_THROW(cfg.validate());
  cfg.samples = 1;
  EXPECT_THROW(cfg.validate(), ContractError);
  cfg.samples = 10;
  cfg.occurrence_threshold = 1.5;
  EXPECT_THROW(cfg.validate(), ContractError);
  cfg.occurrence_threshold = 0.0;
  EXPECT_THROW(cfg.validate(), ContractError);
  cfg.occurrence_threshold = 1.0;
  cfg.limiting_threshold = -0.1;
  EXPECT_THROW(cfg.validate(), ContractError);
}

TEST(Detect, NineAndOneOutlier) {
  const auto responses = fixtures::nine_and_one_outlier();
  const auto v = detect_inconsistency(responses, HallucinationConfig{});
  ASSERT_EQ(v.flags.size(), 10u);
  EXPECT_EQ(v.flagged_count(), 1u);
  EXPECT_TRUE(v.flags[9]);
  EXPECT_TRUE(v.any_hallucination);
  EXPECT_DOUBLE_EQ(v.exceed_fractions[9], 1.0);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_DOUBLE_EQ(v.exceed_fractions[i], 1.0 / 9.0) << i;
}

TEST(Detect, IdenticalResponsesAreNotFlagged) {
  const std::vector<EmbeddingVector> same(6, vec({0.1, 0.2, 0.3}));
  const auto v = detect_inconsistency(same, HallucinationConfig{});
  EXPECT_EQ(v.flagged_count(), 0u);
  EXPECT_FALSE(v.any_hallucination);
}

TEST(Detect, ZeroLimitFlagsAllDistinctResponses) {
  std::mt19937_64 rng(4);
  std::vector<EmbeddingVector> r;
  for (int i = 0; i < 8; ++i) r.push_back(random_vector(rng, 5));
  HallucinationConfig cfg;
  cfg.limiting_threshold = 0.0;
  EXPECT_EQ(detect_inconsistency(r, cfg).flagged_count(), 8u);
}

TEST(Detect, NeedsTwoResponses) {
  const std::vector<EmbeddingVector> one{vec({1.0})};
  EXPECT_THROW(detect_inconsistency(one, HallucinationConfig{}), ContractError);
}

TEST(Detect, CosineUsesOneMinusSimilarity) {
  // cos = 0.8 -> deviation 0.2.
  const std::vector<EmbeddingVector> r{vec({1, 0}), vec({0.8, 0.6})};
  HallucinationConfig cfg;
  cfg.metric = Metric::cosine;
  cfg.limiting_threshold = 0.19;
  EXPECT_EQ(detect_inconsistency(r, cfg).flagged_count(), 2u);
  cfg.limiting_threshold = 0.21;
  EXPECT_EQ(detect_inconsistency(r, cfg).flagged_count(), 0u);
}

TEST(Detect, OccurrenceBoundaryCounts) {
  // 6 responses, one at distance 1 from the others (which coincide). The
  // outlier exceeds 5/5; each other response exceeds 1/5 = 0.2.
  std::vector<EmbeddingVector> r(5, vec({0, 0}));
  r.push_back(vec({1, 1}));
  HallucinationConfig cfg;
  cfg.occurrence_threshold = 0.2;
  EXPECT_EQ(detect_inconsistency(r, cfg).flagged_count(), 6u);
  cfg.occurrence_threshold = std::nextafter(0.2, 1.0);
  EXPECT_EQ(detect_inconsistency(r, cfg).flagged_count(), 1u);
}

TEST(Detect, PermutationEquivariant) {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 50; ++t) {
    std::vector<EmbeddingVector> r;
    for (int i = 0; i < 7; ++i) r.push_back(random_vector(rng, 6, 0.0, 0.02));
    HallucinationConfig cfg;
    cfg.limiting_threshold = 0.004;
    const auto base = detect_inconsistency(r, cfg);
    std::vector<std::size_t> perm(r.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<EmbeddingVector> shuffled;
    for (auto p : perm) shuffled.push_back(r[p]);
    const auto v = detect_inconsistency(shuffled, cfg);
    for (std::size_t i = 0; i < perm.size(); ++i) {
      EXPECT_EQ(v.flags[i], base.flags[perm[i]]);
      EXPECT_EQ(v.exceed_fractions[i], base.exceed_fractions[perm[i]]);
    }
  }
}

TEST(Detect, LoweringThresholdsNeverUnflags) {
  std::mt19937_64 rng(22);
  for (int t = 0; t < 100; ++t) {
    std::vector<EmbeddingVector> r;
    for (int i = 0; i < 10; ++i) r.push_back(random_vector(rng, 6, 0.0, 0.03));
    HallucinationConfig hi;
    hi.limiting_threshold = std::uniform_real_distribution<double>(0.0, 0.01)(rng);
    hi.occurrence_threshold = std::uniform_real_distribution<double>(0.1, 1.0)(rng);
    auto lower_limit = hi;
    lower_limit.limiting_threshold /= 2;
    auto lower_occ = hi;
    lower_occ.occurrence_threshold /= 2;
    const auto a = detect_inconsistency(r, hi);
    const auto b = detect_inconsistency(r, lower_limit);
    const auto c = detect_inconsistency(r, lower_occ);
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (a.flags[i]) {
        EXPECT_TRUE(b.flags[i]);
        EXPECT_TRUE(c.flags[i]);
      }
    }
  }
}

TEST(Detect, SampleSetOverload) {
  ResponseSampleSet set;
  set.prompt = "Alarm 312: pitch motor over-temperature";
  for (const auto& v : fixtures::nine_and_one_outlier(5, 64, 2)) {
    set.responses.push_back(record("r", 1, Label::unlabeled, v));
  }
  const auto v = detect_inconsistency(set, HallucinationConfig{});
  EXPECT_EQ(v.flagged_count(), 1u);
  EXPECT_TRUE(v.flags[2]);
  set.responses[0].embedding.reset();
  EXPECT_THROW(detect_inconsistency(set, HallucinationConfig{}), ContractError);
}

TEST(Deviation, MatrixAndFidelity) {
  const std::vector<EmbeddingVector> h{vec({1, 3}), vec({0, 0})};
  const std::vector<EmbeddingVector> f{vec({2, 2}), vec({1, 1})};
  const auto r = deviation_matrix(h, f, Metric::emd);
  ASSERT_EQ(r.n, 2u);
  EXPECT_DOUBLE_EQ(r(0, 0), 1.0);  // (|1-2| + |3-2|) / 2
  EXPECT_DOUBLE_EQ(r(0, 1), 1.0);  // (|1-1| + |3-1|) / 2
  EXPECT_DOUBLE_EQ(r(1, 0), 2.0);
  EXPECT_DOUBLE_EQ(r(1, 1), 1.0);
  const auto same = deviation_matrix(h, h, Metric::emd);
  EXPECT_EQ(same(0, 0), 0.0);
  EXPECT_EQ(same(1, 1), 0.0);
  EXPECT_THROW(deviation_matrix(h, std::vector<EmbeddingVector>{vec({1, 1})}, Metric::emd), ContractError);

  // n = 1 with deviation 0.5.
  const auto one = deviation_matrix(std::vector<EmbeddingVector>{vec({0.0})},
                                    std::vector<EmbeddingVector>{vec({0.5})}, Metric::emd);
  EXPECT_EQ(one.data, std::vector<double>{0.5});
}

TEST(Fidelity, Constants) {
  EXPECT_EQ(fidelity_constant(0.0), 1.0);
  EXPECT_EQ(fidelity_constant(1.0), 0.5);
  EXPECT_EQ(fidelity_constant(3.0), 0.25);
  EXPECT_THROW(fidelity_constant(-1.0), ContractError);
  for (double d = 0.0; d < 5.0; d += 0.25) EXPECT_GT(fidelity_constant(d), fidelity_constant(d + 0.25));
  const std::vector<EmbeddingVector> h{vec({1, 3}), vec({0, 0})};
  const std::vector<EmbeddingVector> g{vec({1, 3}), vec({1, 1})};
  EXPECT_EQ(fidelity_constants(h, g, Metric::emd), (std::vector<double>{1.0, 0.5}));
}

TEST(Consistency, HandComputedFixture) {
  Matrix r{2, {0.1, 0.9, 0.9, 0.1}};
  const std::vector<double> f{0.8, 0.3};
  const auto c = consistency_scores(r, f, 0.5);
  EXPECT_NEAR(c.c_r, 0.5, 1e-12);
  EXPECT_NEAR(c.c_f, 0.5, 1e-12);
}

TEST(Consistency, AlignedAndMisaligned) {
  Matrix zeros{3, std::vector<double>(9, 0.0)};
  const std::vector<double> ones(3, 1.0);
  for (double theta : {0.01, 0.5, 0.99}) {
    const auto c = consistency_scores(zeros, ones, theta);
    EXPECT_EQ(c.c_r, 1.0);
    EXPECT_EQ(c.c_f, 1.0);
  }
  Matrix far{2, {0.5, 0.7, 0.6, 0.5}};
  const auto c = consistency_scores(far, std::vector<double>{0.5, 0.2}, 0.5);
  EXPECT_EQ(c.c_r, 0.0);  // 0.5 is not < 0.5
  EXPECT_EQ(c.c_f, 0.0);  // 0.5 is not > 0.5
}

TEST(Consistency, ThetaMustBeOpenUnitInterval) {
  Matrix r{1, {0.0}};
  const std::vector<double> f{1.0};
  EXPECT_THROW(consistency_scores(r, f, 0.0), ContractError);
  EXPECT_THROW(consistency_scores(r, f, 1.0), ContractError);
  EXPECT_THROW(consistency_scores(r, std::vector<double>{1.0, 1.0}, 0.5), ContractError);
}

TEST(Consistency, ScoresStayInUnitRange) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 1 + t % 6;
    Matrix r{n, std::vector<double>(n * n)};
    for (auto& x : r.data) x = u(rng);
    std::vector<double> f(n);
    for (auto& x : f) x = fidelity_constant(u(rng));
    const auto c = consistency_scores(r, f, std::uniform_real_distribution<double>(0.01, 0.99)(rng));
    EXPECT_GE(c.c_r, 0.0);
    EXPECT_LE(c.c_r, 1.0);
    EXPECT_GE(c.c_f, 0.0);
    EXPECT_LE(c.c_f, 1.0);
  }
}

TEST(CombinedMetric, Examples) {
  EXPECT_EQ(combined_metric(1, 1, 0.5, 0.5), 1.0);
  EXPECT_EQ(combined_metric(0, 0, 3, 7), 0.0);
  EXPECT_EQ(combined_metric(0.5, 0.5, 1, 1), 1.0);
  EXPECT_EQ(combined_metric(1, 1), 1.0);
  EXPECT_THROW(combined_metric(1, 1, -0.1, 1), ContractError);
  EXPECT_THROW(combined_metric(1, 1, 1, -0.1), ContractError);
  EXPECT_LE(combined_metric(0.3, 0.6, 2, 1), combined_metric(0.4, 0.6, 2, 1));
}

TEST(FidelityReport, AlignedInputGivesFullMarks) {
  std::mt19937_64 rng(41);
  std::vector<EmbeddingVector> h;
  for (int i = 0; i < 4; ++i) h.push_back(random_vector(rng, 8));
  // All-aligned: every hypothesis equals every fact.
  const std::vector<EmbeddingVector> same(4, h[0]);
  const auto rep = fidelity_report(same, same, Metric::emd, 0.1, 0.3, 0.7);
  EXPECT_EQ(rep.c_r, 1.0);
  EXPECT_EQ(rep.c_f, 1.0);
  EXPECT_NEAR(rep.m, 0.3 + 0.7, 1e-12);
  const auto j = to_json(rep);
  EXPECT_EQ(j["deviation_matrix"].size(), 4u);
  EXPECT_EQ(j["m"], rep.m);
}
