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

#include "vserver/translation.h"

#include <cmath>

#include <gtest/gtest.h>

#include "vserver/random.h"

namespace vserver {
namespace {

const double kE = std::exp(1.0);

Schema SynthSchema() {
  return Schema{"s", {ColumnSpec::Numeric("v", 0, 100),
                      ColumnSpec::Numeric("x", 0, 1),
                      ColumnSpec::Categorical("c", {"A", "B", "C", "D"})}};
}

PublicDataset Synthetic(std::size_t n, double constant = -1) {
  RandomSource rng = RandomSource::Seeded(n);
  std::vector<std::vector<double>> cols(3);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.UniformOpen();
    cols[0].push_back(constant >= 0 ? constant : 100 * u);
    cols[1].push_back(std::clamp(0.2 + 0.5 * u + 0.1 * (rng.UniformOpen() - 0.5), 0.0, 1.0));
    cols[2].push_back(static_cast<double>(i % 4));
  }
  return *PublicDataset::Wrap(*Dataset::Create(SynthSchema(), cols, false));
}

TEST(EpsilonForCountTest, Examples) {
  EXPECT_NEAR(EpsilonForCount(1, 1 / kE)->epsilon(), 1.0, 1e-15);
  const double five = EpsilonForCount(5, 0.05)->epsilon();
  EXPECT_NEAR(five, std::log(20.0) / 5, 1e-15);
  EXPECT_NEAR(five, 0.5991, 1e-4);
  const double ten = EpsilonForCount(10, 0.05)->epsilon();
  EXPECT_NEAR(ten, 0.2996, 1e-4);
  EXPECT_DOUBLE_EQ(ten, five / 2);
}

TEST(EpsilonForCountTest, TailFrequencyMatchesBeta) {
  const double eps = EpsilonForCount(5, 0.05)->epsilon();
  RandomSource rng = RandomSource::Seeded(1);
  int misses = 0;
  for (int i = 0; i < 100000; ++i) misses += std::fabs(rng.Laplace(1 / eps)) > 5;
  EXPECT_NEAR(misses / 1e5, 0.05, 0.005);
}

TEST(EpsilonForCountTest, RejectsInvalidSpecs) {
  EXPECT_FALSE(EpsilonForCount(0, 0.05).ok());
  EXPECT_FALSE(EpsilonForCount(-1, 0.05).ok());
  EXPECT_FALSE(EpsilonForCount(1, 0).ok());
  EXPECT_FALSE(EpsilonForCount(1, 1).ok());
}

TEST(EpsilonForCountTest, MonotoneInAlphaAndBeta) {
  RandomSource rng = RandomSource::Seeded(3);
  for (int i = 0; i < 1000; ++i) {
    const double a = 0.01 + 100 * rng.UniformOpen();
    const double b = 0.001 + 0.99 * rng.UniformOpen();
    const double base = EpsilonForCount(a, b)->epsilon();
    ASSERT_LT(EpsilonForCount(a * 1.01, b)->epsilon(), base);
    ASSERT_GT(EpsilonForCount(a, b * 0.99)->epsilon(), base);
  }
}

TEST(EpsilonForHistogramTest, Examples) {
  for (HistogramTarget t : {HistogramTarget::kWholeQuery, HistogramTarget::kPerCell}) {
    EXPECT_DOUBLE_EQ(EpsilonForHistogram(5, 0.05, 1, t)->epsilon(),
                     EpsilonForCount(5, 0.05)->epsilon());
  }
  const double whole =
      EpsilonForHistogram(5, 0.05, 4, HistogramTarget::kWholeQuery)->epsilon();
  EXPECT_NEAR(whole, std::log(80.0) / 5, 1e-15);
  EXPECT_NEAR(whole, 0.8764, 1e-4);
  for (std::size_t k = 2; k < 50; ++k) {
    EXPECT_GE(EpsilonForHistogram(3, 0.1, k, HistogramTarget::kWholeQuery)->epsilon(),
              EpsilonForHistogram(3, 0.1, k, HistogramTarget::kPerCell)->epsilon());
  }
  EXPECT_FALSE(EpsilonForHistogram(5, 0.05, 0, HistogramTarget::kPerCell).ok());
}

TEST(EpsilonForHistogramTest, WholeQueryCoverageByMonteCarlo) {
  const double eps =
      EpsilonForHistogram(5, 0.05, 4, HistogramTarget::kWholeQuery)->epsilon();
  RandomSource rng = RandomSource::Seeded(4);
  int any_miss = 0;
  const int runs = 100000;
  for (int i = 0; i < runs; ++i) {
    bool miss = false;
    for (int k = 0; k < 4; ++k) miss |= std::fabs(rng.Laplace(1 / eps)) > 5;
    any_miss += miss;
  }
  // Exact simultaneous miss rate is 1 - (1 - 0.05/4)^4 = 0.0491.
  EXPECT_NEAR(any_miss / double(runs), 1 - std::pow(1 - 0.0125, 4), 0.005);
  EXPECT_LE(any_miss / double(runs), 0.05 + 0.003);
}

TEST(EpsilonBySimulationTest, DegenerateMeanMatchesAnalyticSumBound) {
  // A column pinned at its lower bound has a zero sum, so the only error is
  // sum noise divided by n: |err| <= alpha iff |sum noise| <= alpha * n / (U-L).
  const std::size_t n = 1000;
  PublicDataset synth = Synthetic(n, 0.0);
  const double alpha = 1.0, beta = 0.05;
  const double induced_margin = alpha * n / 100.0;
  const double analytic_sum_eps = std::log(1 / beta) / induced_margin;
  TranslationOptions options;
  auto r = EpsilonBySimulation(Query{"m", MeanQuery{"v", {}}}, {alpha, beta}, synth,
                               options, 42);
  ASSERT_TRUE(r.ok()) << r.status();
  ASSERT_TRUE(r->feasible);
  EXPECT_EQ(r->method, TranslationMethod::kSimulation);
  const double sum_eps = r->epsilon * options.mechanism.mean_sum_share;
  EXPECT_NEAR(sum_eps / analytic_sum_eps, 1.0, 0.25);
}

TEST(EpsilonBySimulationTest, CurveIsMonotoneAndResultInBracket) {
  PublicDataset synth = Synthetic(2000);
  TranslationOptions options;
  options.n_sims = 1000;
  const std::vector<Query> queries = {
      {"m", MeanQuery{"v", {}}},
      {"q", QuantileQuery{"v", 0.5, {}}},
      {"o", OlsQuery{"x", {"v"}, {}}}};
  const std::vector<AccuracySpec> specs = {{2.0, 0.05}, {0.03, 0.1}, {0.2, 0.1}};
  for (std::size_t i = 0; i < queries.size(); ++i) {
    auto r = EpsilonBySimulation(queries[i], specs[i], synth, options, 7);
    ASSERT_TRUE(r.ok()) << r.status();
    ASSERT_TRUE(r->feasible) << queries[i].query_id;
    EXPECT_GE(r->epsilon, options.epsilon_lo);
    EXPECT_LE(r->epsilon, options.epsilon_hi);
    const SimulationDetail& d = *r->simulation;
    EXPECT_GE(d.achieved_attainment, 1 - specs[i].beta);
    EXPECT_LE(d.achieved_attainment, 1 - specs[i].beta + options.tolerance);
    const double slack = 3 * std::sqrt(0.25 / options.n_sims);
    EXPECT_TRUE(AttainmentCurveMonotone(d.curve, slack)) << queries[i].query_id;

    // A fresh stream at the returned epsilon lands within tolerance.
    auto stats = *ComputeStatistics(synth.data(), queries[i], options.mechanism);
    const double again = SimulatedAttainment(stats, specs[i].alpha, r->epsilon,
                                             4000, 12345, options.mechanism);
    EXPECT_NEAR(again, d.target_attainment, options.tolerance) << queries[i].query_id;
  }
}

TEST(EpsilonBySimulationTest, Deterministic) {
  PublicDataset synth = Synthetic(500);
  TranslationOptions options;
  options.n_sims = 300;
  Query q{"m", MeanQuery{"v", {}}};
  auto a = EpsilonBySimulation(q, {3.0, 0.1}, synth, options, 5);
  auto b = EpsilonBySimulation(q, {3.0, 0.1}, synth, options, 5);
  ASSERT_TRUE(a.ok() && b.ok());
  EXPECT_TRUE(*a == *b);
}

TEST(EpsilonBySimulationTest, InfeasibleCarriesCurve) {
  PublicDataset synth = Synthetic(50);
  TranslationOptions options;
  options.epsilon_hi = 0.01;
  options.n_sims = 200;
  auto r = EpsilonBySimulation(Query{"m", MeanQuery{"v", {}}}, {0.001, 0.05},
                               synth, options, 1);
  ASSERT_TRUE(r.ok());
  EXPECT_FALSE(r->feasible);
  EXPECT_FALSE(r->message.empty());
  EXPECT_FALSE(r->simulation->curve.empty());
}

TEST(EpsilonBySimulationTest, RejectsClosedFormQueries) {
  PublicDataset synth = Synthetic(50);
  EXPECT_FALSE(EpsilonBySimulation(Query{"c", CountQuery{}}, {1, 0.05}, synth, {}, 1).ok());
}

TEST(TranslateTest, DispatchesByVariant) {
  PublicDataset synth = Synthetic(100);
  auto c = Translate(Query{"c", CountQuery{}}, {5, 0.05}, synth, {}, 1);
  EXPECT_EQ(c->method, TranslationMethod::kClosedForm);
  EXPECT_NEAR(c->epsilon, 0.5991, 1e-4);
  auto h = Translate(Query{"h", HistogramQuery{"c", {}}}, {5, 0.05}, synth, {}, 1);
  EXPECT_NEAR(h->epsilon, std::log(80.0) / 5, 1e-12);
  auto bad = Translate(Query{"h", MeanQuery{"c", {}}}, {5, 0.05}, synth, {}, 1);
  EXPECT_FALSE(bad.ok());
}

TEST(PreviewOutputsTest, CountRowComposesTranslationAndDraw) {
  PublicDataset synth = Synthetic(100);
  Query q{"cnt", CountQuery{}};
  auto rows = PreviewOutputs({q}, {{5, 0.05}}, synth, {}, 99);
  ASSERT_TRUE(rows.ok());
  ASSERT_EQ(rows->size(), 1u);
  const PreviewRow& row = rows->front();
  EXPECT_EQ(row.synthetic_value, std::vector<double>{100.0});
  EXPECT_DOUBLE_EQ(row.ci_half_width, 5.0);
  const double eps = std::log(20.0) / 5;
  EXPECT_NEAR(row.translation.epsilon, eps, 1e-12);
  // The draw is 100 + Laplace(1/eps) from the row's derived stream.
  RandomSource rng = RandomSource::Seeded(DeriveSeed(99, "draw:cnt"));
  EXPECT_DOUBLE_EQ(row.noisy_draw[0], 100.0 + rng.Laplace(1 / eps));
}

TEST(PreviewOutputsTest, EmptyAndDeterministic) {
  PublicDataset synth = Synthetic(200);
  EXPECT_TRUE(PreviewOutputs({}, {}, synth, {}, 1)->empty());
  TranslationOptions options;
  options.n_sims = 200;
  std::vector<Query> qs = {{"a", CountQuery{}}, {"b", MeanQuery{"v", {}}},
                           {"c", HistogramQuery{"c", {}}}};
  std::vector<AccuracySpec> specs = {{5, 0.05}, {4, 0.1}, {3, 0.05}};
  auto a = PreviewOutputs(qs, specs, synth, options, 8);
  auto b = PreviewOutputs(qs, specs, synth, options, 8);
  ASSERT_TRUE(a.ok());
  EXPECT_TRUE(*a == *b);
  EXPECT_EQ(PreviewToCsv(*a, true), PreviewToCsv(*b, true));
  EXPECT_EQ(PreviewToCsv(*a, false).find("epsilon"), std::string::npos);
}

TEST(PreviewOutputsTest, InfeasibleRowDoesNotFailTable) {
  PublicDataset synth = Synthetic(40);
  TranslationOptions options;
  options.n_sims = 100;
  options.epsilon_hi = 0.005;
  auto rows = PreviewOutputs({{"a", CountQuery{}}, {"b", MeanQuery{"v", {}}}},
                             {{5, 0.05}, {0.01, 0.05}}, synth, options, 1);
  ASSERT_TRUE(rows.ok());
  EXPECT_TRUE((*rows)[0].translation.feasible);
  EXPECT_FALSE((*rows)[1].translation.feasible);
  EXPECT_TRUE((*rows)[1].noisy_draw.empty());
}

TEST(PreviewOutputsTest, InvalidQueryFailsValidation) {
  PublicDataset synth = Synthetic(40);
  auto rows = PreviewOutputs({{"a", MeanQuery{"nope", {}}}}, {{1, 0.05}}, synth, {}, 1);
  EXPECT_EQ(rows.status().code(), absl::StatusCode::kInvalidArgument);
}

TEST(RoundTripTest, CountAtTranslatedEpsilonMissesWithProbabilityBeta) {
  const double eps = EpsilonForCount(5, 0.05)->epsilon();
  PublicDataset synth = Synthetic(100);
  auto stats = *ComputeStatistics(synth.data(), Query{"c", CountQuery{}}, {});
  RandomSource rng = RandomSource::Seeded(10);
  int misses = 0;
  for (int i = 0; i < 100000; ++i) {
    misses += std::fabs(Perturb(stats, *PrivacyCost::Create(eps), rng, {}).estimate[0] -
                        100.0) > 5;
  }
  EXPECT_NEAR(misses / 1e5, 0.05, 0.01);
}

}  // namespace
}  // namespace vserver
