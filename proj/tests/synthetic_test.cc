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

#include "vserver/synthetic.h"

#include <cmath>
#include <numeric>
#include <random>

#include "gmock/gmock.h"
#include "gtest/gtest.h"
#include "vserver/csv.h"

namespace vserver {
namespace {

using ::testing::ElementsAre;
using ::testing::HasSubstr;
using ::testing::IsEmpty;

Schema Wages() {
  return Schema{"wages",
                {ColumnSpec::Numeric("income", 0, 100),
                 ColumnSpec::Categorical("region", {"north", "south", "east"}),
                 ColumnSpec::Numeric("age", 18, 90)}};
}

TEST(PlaceholderTest, RowsWithinDomain) {
  Dataset d = *GeneratePlaceholder(Wages(), 100, 1);
  EXPECT_EQ(d.num_rows(), 100u);
  EXPECT_FALSE(d.confidential());
  for (std::size_t r = 0; r < d.num_rows(); ++r) {
    EXPECT_TRUE(Bounds({0, 100}).Contains(d.value(r, 0)));
    EXPECT_TRUE(Bounds({18, 90}).Contains(d.value(r, 2)));
  }
}

TEST(PlaceholderTest, DeterministicGivenSeed) {
  Dataset a = *GeneratePlaceholder(Wages(), 500, 42);
  Dataset b = *GeneratePlaceholder(Wages(), 500, 42);
  Dataset c = *GeneratePlaceholder(Wages(), 500, 43);
  EXPECT_EQ(WriteCsv(a), WriteCsv(b));
  EXPECT_NE(WriteCsv(a), WriteCsv(c));
}

TEST(PlaceholderTest, ZeroRowsRejected) {
  EXPECT_EQ(GeneratePlaceholder(Wages(), 0, 1).status().code(),
            absl::StatusCode::kInvalidArgument);
}

TEST(PlaceholderTest, NumericMeanNearMidpoint) {
  Dataset d = *GeneratePlaceholder(Wages(), 100000, 9);
  std::span<const double> v = d.column(0);
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  EXPECT_GE(mean, 49.5);
  EXPECT_LE(mean, 50.5);
}

TEST(PlaceholderTest, CategoricalMarginalsUniform) {
  const std::size_t n = 100000;
  Schema schema{"s", {ColumnSpec::Categorical("c", {"a", "b", "c", "d", "e"})}};
  Dataset d = *GeneratePlaceholder(schema, n, 3);
  std::vector<double> counts(5, 0.0);
  for (double code : d.column(0)) counts[static_cast<int>(code)] += 1;
  const double p = 0.2;
  const double band = 3 * std::sqrt(p * (1 - p) / n);
  for (double c : counts) EXPECT_NEAR(c / n, p, band);
}

TEST(PlaceholderTest, ColumnsIndependent) {
  Schema schema{"s", {ColumnSpec::Numeric("x", 0, 1), ColumnSpec::Numeric("y", 0, 1)}};
  const std::size_t n = 50000;
  Dataset d = *GeneratePlaceholder(schema, n, 5);
  double sxy = 0, sx = 0, sy = 0, sxx = 0, syy = 0;
  for (std::size_t r = 0; r < n; ++r) {
    const double x = d.value(r, 0), y = d.value(r, 1);
    sx += x; sy += y; sxy += x * y; sxx += x * x; syy += y * y;
  }
  const double cov = sxy / n - (sx / n) * (sy / n);
  const double corr = cov / std::sqrt((sxx / n - sx * sx / n / n) * (syy / n - sy * sy / n / n));
  EXPECT_LT(std::abs(corr), 4 / std::sqrt(double(n)));
}

// Round trip: every placeholder validates against its own schema.
TEST(ValidateSyntheticTest, PlaceholderRoundTrip) {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 50; ++trial) {
    Schema schema{"s", {}};
    const int cols = 1 + gen() % 6;
    for (int c = 0; c < cols; ++c) {
      const std::string name = "c" + std::to_string(c);
      if (gen() % 2) {
        const double lo = static_cast<double>(gen() % 1000) - 500;
        schema.columns.push_back(ColumnSpec::Numeric(name, lo, lo + 1 + gen() % 100));
      } else {
        std::vector<std::string> cats;
        for (std::size_t k = 0; k < 1 + gen() % 8; ++k) cats.push_back("k" + std::to_string(k));
        schema.columns.push_back(ColumnSpec::Categorical(name, cats));
      }
    }
    Dataset d = *GeneratePlaceholder(schema, 1 + gen() % 200, gen());
    EXPECT_THAT(ValidateSynthetic(schema, d), IsEmpty());
  }
}

TEST(ValidateSyntheticTest, MissingColumnNamed) {
  Schema partial{"wages", {Wages().columns[0], Wages().columns[1]}};
  Dataset d = *GeneratePlaceholder(partial, 10, 1);
  EXPECT_THAT(ValidateSynthetic(Wages(), d),
              ElementsAre("column 'age': column absent"));
}

TEST(ValidateSyntheticTest, OutOfBoundsNamesRowAndColumn) {
  Schema wide = Wages();
  wide.columns[0].bounds = {0, 200};
  Dataset d = *Dataset::FromRows(wide, {{50.0, std::string("north"), 30.0},
                                        {150.0, std::string("south"), 40.0}},
                                 false);
  std::vector<std::string> v = ValidateSynthetic(Wages(), d);
  EXPECT_THAT(v, ::testing::Contains(HasSubstr("bounds differ")));
  EXPECT_THAT(v, ::testing::Contains("row 2, column 'income': value 150 outside [0, 100]"));
}

TEST(ValidateSyntheticTest, ConfidentialCandidateFlagged) {
  Dataset d = *GeneratePlaceholder(Wages(), 5, 1);
  Dataset conf = *Dataset::Create(d.schema(), {{d.column(0).begin(), d.column(0).end()},
                                                {d.column(1).begin(), d.column(1).end()},
                                                {d.column(2).begin(), d.column(2).end()}},
                                  true);
  EXPECT_THAT(ValidateSynthetic(Wages(), conf), ElementsAre(HasSubstr("confidential")));
  EXPECT_FALSE(SyntheticRegistration::Create(Wages(), conf,
                                             SyntheticProvenance::kCuratorSupplied,
                                             std::nullopt, "").ok());
}

TEST(ParseSyntheticCsvTest, ReportsInsteadOfClamping) {
  auto bad = ParseSyntheticCsv(Wages(), "income,region,age\n10,north,20\n101,east,30\n");
  ASSERT_FALSE(bad.ok());
  EXPECT_THAT(bad.status().message(), HasSubstr("row 2, column 'income'"));
  auto missing = ParseSyntheticCsv(Wages(), "income,region\n10,north\n");
  EXPECT_THAT(missing.status().message(), HasSubstr("column 'age': column absent"));
  auto ok = ParseSyntheticCsv(Wages(), "age,income,region\n20,10,north\n");
  ASSERT_TRUE(ok.ok()) << ok.status();
  EXPECT_EQ(ok->value(0, 0), 10.0);
  EXPECT_EQ(ok->label(0, 1), "north");
  EXPECT_EQ(ok->value(0, 2), 20.0);
}

TEST(RegistrationTest, RecordsProvenance) {
  auto reg = SyntheticRegistration::Create(
      Wages(), *GeneratePlaceholder(Wages(), 10, 7),
      SyntheticProvenance::kPlaceholderGenerated, 7, "metadata only");
  ASSERT_TRUE(reg.ok()) << reg.status();
  EXPECT_EQ(reg->dataset_id(), "wages");
  EXPECT_EQ(reg->seed(), 7u);
  EXPECT_STREQ(SyntheticProvenanceName(reg->provenance()), "placeholder-generated");
  EXPECT_FALSE(SyntheticRegistration::Create(
                   Wages(), *GeneratePlaceholder(Wages(), 10, 7),
                   SyntheticProvenance::kPlaceholderGenerated, std::nullopt, "")
                   .ok());
}

PublicDataset Placeholder(std::size_t n) {
  return *PublicDataset::Wrap(*GeneratePlaceholder(Wages(), n, 1));
}

TEST(RunPreviewTest, ExactCount) {
  auto r = RunPreview(Query{"q", CountQuery{}}, Placeholder(100), std::nullopt, 0);
  ASSERT_TRUE(r.ok());
  EXPECT_THAT(r->exact.estimate, ElementsAre(100.0));
  EXPECT_FALSE(r->noisy.has_value());
}

TEST(RunPreviewTest, NoisyDrawDeterministicPerSeed) {
  Query q{"m", MeanQuery{"income", {}}};
  auto a = RunPreview(q, Placeholder(500), 1.0, 77);
  auto b = RunPreview(q, Placeholder(500), 1.0, 77);
  auto c = RunPreview(q, Placeholder(500), 1.0, 78);
  ASSERT_TRUE(a.ok() && b.ok() && c.ok());
  EXPECT_EQ(a->noisy->estimate, b->noisy->estimate);
  EXPECT_NE(a->noisy->estimate, c->noisy->estimate);
  EXPECT_NE(a->noisy->estimate, a->exact.estimate);
}

TEST(RunPreviewTest, CollinearOlsFlagVisible) {
  Schema s{"s", {ColumnSpec::Numeric("x", 0, 10), ColumnSpec::Numeric("x2", 0, 10),
                 ColumnSpec::Numeric("y", 0, 10)}};
  // x2 duplicates x, so the design matrix is singular.
  std::vector<std::vector<Cell>> rows;
  for (int i = 0; i < 50; ++i) {
    rows.push_back({i / 5.0, i / 5.0, static_cast<double>(i % 10)});
  }
  auto r = RunPreview(Query{"o", OlsQuery{"y", {"x", "x2"}, {}}},
                      *PublicDataset::Wrap(*Dataset::FromRows(s, rows, false)),
                      std::nullopt, 0);
  ASSERT_TRUE(r.ok()) << r.status();
  EXPECT_TRUE(r->exact.noise_model.rank_deficient);
}

TEST(RunPreviewTest, InvalidQueryReported) {
  auto r = RunPreview(Query{"m", MeanQuery{"region", {}}}, Placeholder(10), std::nullopt, 0);
  EXPECT_EQ(r.status().code(), absl::StatusCode::kInvalidArgument);
}

TEST(RunPreviewTest, ConfidentialDataCannotBeWrapped) {
  Dataset d = *GeneratePlaceholder(Wages(), 5, 1);
  Dataset conf = *Dataset::Create(d.schema(), {{d.column(0).begin(), d.column(0).end()},
                                                {d.column(1).begin(), d.column(1).end()},
                                                {d.column(2).begin(), d.column(2).end()}},
                                  true);
  EXPECT_EQ(PublicDataset::Wrap(conf).status().code(),
            absl::StatusCode::kFailedPrecondition);
}

}  // namespace
}  // namespace vserver
