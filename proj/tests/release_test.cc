// Copyright 2026 The Validation Server Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "vserver/release.h"

#include <cmath>
#include <regex>

#include "gmock/gmock.h"
#include "gtest/gtest.h"
#include "vserver/synthetic.h"

namespace vserver {
namespace {

using ::testing::HasSubstr;
using ::testing::Not;

Schema Wages() {
  return Schema{"wages",
                {ColumnSpec::Numeric("income", 0, 100),
                 ColumnSpec::Categorical("region", {"north", "south"}),
                 ColumnSpec::Numeric("age", 18, 90)}};
}

Dataset Data(std::size_t n, std::uint64_t seed) {
  return *GeneratePlaceholder(Wages(), n, seed);
}

MechanismResult NoisyCount(double true_count, double epsilon, RandomSource& rng) {
  ExactStatistics stats;
  stats.query_id = "c";
  stats.kind = QueryKind::kCount;
  stats.count = true_count;
  return Perturb(stats, *PrivacyCost::Create(epsilon), rng, {});
}

TEST(ConfidenceIntervalTest, CountHalfWidthFromTranslation) {
  const double epsilon = EpsilonForCount(5, 0.05)->epsilon();
  EXPECT_NEAR(epsilon, 0.5991, 1e-4);
  RandomSource rng = RandomSource::Seeded(1);
  MechanismResult r = NoisyCount(100, epsilon, rng);
  r.estimate = {103.2};
  ConfidenceInterval ci = *ComputeConfidenceInterval(r, 0.05);
  EXPECT_EQ(ci.method, IntervalMethod::kLaplaceTail);
  EXPECT_NEAR(ci.low[0], 98.2, 1e-9);
  EXPECT_NEAR(ci.high[0], 108.2, 1e-9);
  EXPECT_DOUBLE_EQ(ci.confidence, 0.95);
}

TEST(ConfidenceIntervalTest, NoiseOffZeroWidth) {
  RandomSource off = RandomSource::NoiseOffForTesting();
  for (const Query& q : {Query{"c", CountQuery{}}, Query{"m", MeanQuery{"income", {}}},
                         Query{"o", OlsQuery{"income", {"age"}, {}}}}) {
    MechanismResult r = *RunMechanism(Data(100, 1), q, *PrivacyCost::Create(1), off, {});
    ConfidenceInterval ci = *ComputeConfidenceInterval(r, 0.05);
    EXPECT_TRUE(ci.test_mode);
    EXPECT_EQ(ci.low, ci.high);
    EXPECT_EQ(ci.low, r.estimate);
  }
}

TEST(ConfidenceIntervalTest, RejectsBadBeta) {
  RandomSource rng = RandomSource::Seeded(1);
  MechanismResult r = NoisyCount(10, 1, rng);
  EXPECT_FALSE(ComputeConfidenceInterval(r, 0).ok());
  EXPECT_FALSE(ComputeConfidenceInterval(r, 1).ok());
}

TEST(ConfidenceIntervalTest, CountCoverage) {
  RandomSource rng = RandomSource::Seeded(2024);
  const int runs = 100000;
  int covered = 0;
  for (int i = 0; i < runs; ++i) {
    MechanismResult r = NoisyCount(250, 0.5991, rng);
    ConfidenceInterval ci = *ComputeConfidenceInterval(r, 0.05);
    covered += ci.low[0] <= 250 && 250 <= ci.high[0];
  }
  EXPECT_NEAR(covered / double(runs), 0.95, 0.01);
}

TEST(ConfidenceIntervalTest, HistogramPerCell) {
  RandomSource rng = RandomSource::Seeded(3);
  MechanismResult r = *RunMechanism(Data(200, 2), Query{"h", HistogramQuery{"region", {}}},
                                    *PrivacyCost::Create(0.5), rng, {});
  ConfidenceInterval ci = *ComputeConfidenceInterval(r, 0.1);
  ASSERT_EQ(ci.low.size(), 2u);
  for (int i = 0; i < 2; ++i) {
    EXPECT_NEAR(ci.high[i] - ci.low[i], 2 * std::log(10.0) / 0.5, 1e-9);
  }
}

// Re-evaluating the rebuilt statistics reproduces the released estimate.
TEST(StatisticsFromResultTest, RoundTrip) {
  const Dataset data = Data(400, 4);
  RandomSource rng = RandomSource::Seeded(5);
  for (const Query& q : {Query{"m", MeanQuery{"income", {}}},
                         Query{"p", QuantileQuery{"age", 0.25, {}}},
                         Query{"o", OlsQuery{"income", {"age"}, {}}}}) {
    MechanismResult r = *RunMechanism(data, q, *PrivacyCost::Create(2), rng, {});
    ExactStatistics stats = *StatisticsFromResult(r);
    EXPECT_EQ(ExactResult(stats, OptionsFromResult(r)).estimate, r.estimate)
        << q.query_id;
  }
}

TEST(StatisticsFromResultTest, IncompleteModelRejected) {
  MechanismResult r;
  r.kind = QueryKind::kMean;
  r.epsilon = 1;
  r.noise_model.components.push_back({"sum", 1, 1, 0.5, 2});
  r.estimate = {1};
  EXPECT_FALSE(ComputeConfidenceInterval(r, 0.05).ok());
}

TEST(ConfidenceIntervalTest, BootstrapDeterministicAndBracketsEstimate) {
  RandomSource rng = RandomSource::Seeded(6);
  MechanismResult r = *RunMechanism(Data(1000, 7), Query{"m", MeanQuery{"income", {}}},
                                    *PrivacyCost::Create(1), rng, {});
  ConfidenceInterval a = *ComputeConfidenceInterval(r, 0.05, {10000, 9});
  ConfidenceInterval b = *ComputeConfidenceInterval(r, 0.05, {10000, 9});
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.method, IntervalMethod::kParametricBootstrap);
  EXPECT_EQ(a.replicates, 10000u);
  EXPECT_LT(a.low[0], r.estimate[0]);
  EXPECT_GT(a.high[0], r.estimate[0]);
}

TEST(ConfidenceIntervalTest, MeanCoverageSmallStudy) {
  const Dataset data = Data(2000, 8);
  Query q{"m", MeanQuery{"income", {}}};
  RandomSource off = RandomSource::NoiseOffForTesting();
  const double truth = RunMechanism(data, q, *PrivacyCost::Create(1), off, {})->estimate[0];
  RandomSource rng = RandomSource::Seeded(10);
  const int runs = 300;
  int covered = 0;
  for (int i = 0; i < runs; ++i) {
    MechanismResult r = *RunMechanism(data, q, *PrivacyCost::Create(0.5), rng, {});
    ConfidenceInterval ci = *ComputeConfidenceInterval(r, 0.05, {2000, std::uint64_t(i)});
    covered += ci.low[0] <= truth && truth <= ci.high[0];
  }
  // Binomial(300, 0.95) has standard deviation near 0.0126.
  EXPECT_NEAR(covered / double(runs), 0.95, 0.04);
}

Release CountRelease(double estimate, double epsilon, bool disclose) {
  RandomSource rng = RandomSource::Seeded(1);
  ReleasedQuery rq;
  rq.query = Query{"q1", CountQuery{Filter{{Predicate::Equals("region", "north")}}}};
  rq.spec = AccuracySpec{5, 0.05};
  rq.result = NoisyCount(100, epsilon, rng);
  rq.result.query_id = "q1";
  rq.result.estimate = {estimate};
  rq.interval = *ComputeConfidenceInterval(rq.result, 0.05);
  return Release{"p-1", "wages", "Regional counts", 1, 0, disclose, {rq}};
}

TEST(RenderTest, SingleCountOneRow) {
  const std::string csv = RenderResultsCsv(CountRelease(103.2, 0.5991464547107982, true));
  EXPECT_EQ(csv,
            "query_id,statistic,estimate,ci_low,ci_high,confidence,units\n"
            "q1,count,103.2,98.2,108.2,0.95,records\n");
}

TEST(RenderTest, Deterministic) {
  Release r = CountRelease(103.2, 0.6, true);
  const Release copy = r;
  EXPECT_EQ(RenderReleaseDocument(r), RenderReleaseDocument(r));
  EXPECT_EQ(RenderMethodsText(r), RenderMethodsText(r));
  EXPECT_EQ(r, copy);
}

TEST(RenderTest, DisclosureOffHasNoPrivacyNumerals) {
  Release r = CountRelease(103.2, 0.6123, false);
  const std::string doc = RenderReleaseDocument(r);
  EXPECT_THAT(doc, Not(HasSubstr("epsilon")));
  EXPECT_THAT(doc, Not(HasSubstr("0.6123")));
  // scale 1/0.6123
  EXPECT_THAT(doc, Not(HasSubstr("1.63319")));
  const std::string on = RenderReleaseDocument(CountRelease(103.2, 0.6123, true));
  EXPECT_THAT(on, HasSubstr("epsilon 0.6123"));
  EXPECT_THAT(on, HasSubstr("1.63319"));
}

TEST(RenderTest, MethodsTextForCounts) {
  const std::string text = RenderMethodsText(CountRelease(103.2, 0.6, true));
  EXPECT_THAT(text, HasSubstr("were computed on confidential data with calibrated "
                              "random noise added to protect privacy"));
  EXPECT_THAT(text, HasSubstr("Laplace"));
  EXPECT_THAT(text, HasSubstr("exact tail of the Laplace noise"));
  EXPECT_THAT(text, HasSubstr("different researchers return different values"));
  EXPECT_THAT(text, HasSubstr("do not account for sampling error"));
  EXPECT_THAT(text, Not(HasSubstr("bootstrap")));
}

TEST(RenderTest, MethodsTextForOls) {
  RandomSource rng = RandomSource::Seeded(3);
  ReleasedQuery rq;
  rq.query = Query{"reg", OlsQuery{"income", {"age"}, {}}};
  rq.result = *RunMechanism(Data(500, 3), rq.query, *PrivacyCost::Create(5), rng, {});
  rq.interval = *ComputeConfidenceInterval(rq.result, 0.05, {10000, 1});
  Release r{"p", "wages", "t", 1, 0, true, {rq}};
  const std::string text = RenderMethodsText(r);
  EXPECT_THAT(text, HasSubstr("sufficient-statistic perturbation"));
  EXPECT_THAT(text, HasSubstr("parametric bootstrap"));
  EXPECT_THAT(text, HasSubstr("10000 times"));
  EXPECT_THAT(RenderResultsCsv(r), HasSubstr("reg,age,"));
  EXPECT_THAT(RenderResultsCsv(r), HasSubstr(",income per age\n"));
}

TEST(RenderTest, SameStructureDiffersOnlyInNumbers) {
  const std::regex number("[0-9]+(\\.[0-9]+)?(e[-+]?[0-9]+)?");
  const std::string a = RenderMethodsText(CountRelease(103.2, 0.6, true));
  const std::string b = RenderMethodsText(CountRelease(87.0, 0.6, true));
  EXPECT_NE(a, b);
  EXPECT_EQ(std::regex_replace(a, number, "#"), std::regex_replace(b, number, "#"));
}

}  // namespace
}  // namespace vserver
