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

#include "vserver/domain.h"

#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "vserver/csv.h"

namespace vserver {
namespace {

Schema PeopleSchema() {
  return Schema{"people",
                {ColumnSpec::Numeric("age", 0, 100),
                 ColumnSpec::Categorical("group", {"A", "B"})}};
}

bool HasViolation(const std::vector<std::string>& v, std::string_view text) {
  return std::any_of(v.begin(), v.end(), [&](const std::string& s) {
    return s.find(text) != std::string::npos;
  });
}

TEST(ValidateSchemaTest, AcceptsOrdinaryNumericBounds) {
  EXPECT_TRUE(ValidateSchema(PeopleSchema()).empty());
}

TEST(ValidateSchemaTest, DegenerateBounds) {
  Schema schema{"d", {ColumnSpec::Numeric("x", 5, 5)}};
  auto v = ValidateSchema(schema);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_TRUE(HasViolation(v, "column 'x'"));
  EXPECT_TRUE(HasViolation(v, "bounds degenerate"));
}

TEST(ValidateSchemaTest, DuplicateName) {
  Schema schema{"d", {ColumnSpec::Numeric("age", 0, 1),
                      ColumnSpec::Numeric("age", 0, 2)}};
  EXPECT_TRUE(HasViolation(ValidateSchema(schema), "duplicate name"));
}

TEST(ValidateSchemaTest, OtherRules) {
  EXPECT_TRUE(HasViolation(ValidateSchema(Schema{"d", {}}), "no columns"));
  EXPECT_TRUE(HasViolation(
      ValidateSchema(Schema{"d", {ColumnSpec::Numeric("x", 0, INFINITY)}}),
      "not finite"));
  EXPECT_TRUE(HasViolation(
      ValidateSchema(Schema{"d", {ColumnSpec::Categorical("c", {})}}),
      "no categories"));
  EXPECT_TRUE(HasViolation(
      ValidateSchema(Schema{"d", {ColumnSpec::Categorical("c", {"a", "a"})}}),
      "duplicate category"));
  EXPECT_TRUE(HasViolation(
      ValidateSchema(Schema{"bad id", {ColumnSpec::Numeric("x", 0, 1)}}),
      "dataset_id"));
}

TEST(IngestCsvTest, ClampsOutOfBoundsNumbers) {
  auto result = IngestCsv("age,group\n150,A\n-3,B\n50,A\n", PeopleSchema(), true);
  ASSERT_TRUE(result.ok()) << result.status();
  EXPECT_EQ(result->stats.clamped, 2u);
  EXPECT_EQ(result->stats.rejected, 0u);
  EXPECT_EQ(result->dataset.value(0, 0), 100);
  EXPECT_EQ(result->dataset.value(1, 0), 0);
  EXPECT_TRUE(result->dataset.confidential());
}

TEST(IngestCsvTest, RejectsRowsWithUnknownCategory) {
  auto result = IngestCsv("age,group\n20,XX\n30,B\n", PeopleSchema(), false);
  ASSERT_TRUE(result.ok()) << result.status();
  EXPECT_EQ(result->stats.rejected, 1u);
  EXPECT_EQ(result->dataset.num_rows(), 1u);
  EXPECT_EQ(result->dataset.label(0, 1), "B");
}

TEST(IngestCsvTest, EmptyBody) {
  auto result = IngestCsv("age,group\n", PeopleSchema(), false);
  ASSERT_TRUE(result.ok());
  EXPECT_EQ(result->dataset.num_rows(), 0u);
  EXPECT_EQ(result->stats.clamped, 0u);
  EXPECT_EQ(result->stats.rejected, 0u);
}

TEST(IngestCsvTest, ErrorsNameTheLine) {
  auto header = IngestCsv("group,age\n1,A\n", PeopleSchema(), false);
  EXPECT_EQ(header.status().code(), absl::StatusCode::kInvalidArgument);
  EXPECT_NE(header.status().message().find("header mismatch line 1"),
            std::string::npos);

  auto number = IngestCsv("age,group\n1,A\nabc,B\n", PeopleSchema(), false);
  EXPECT_NE(number.status().message().find("line 3"), std::string::npos)
      << number.status();

  auto empty_cell = IngestCsv("age,group\n,A\n", PeopleSchema(), false);
  EXPECT_NE(empty_cell.status().message().find("line 2"), std::string::npos);

  auto quote = IngestCsv("age,group\n1,\"A\n", PeopleSchema(), false);
  EXPECT_NE(quote.status().message().find("malformed CSV"), std::string::npos);

  auto fields = IngestCsv("age,group\n1,A,extra\n", PeopleSchema(), false);
  EXPECT_NE(fields.status().message().find("line 2"), std::string::npos);
}

TEST(ParseCsvTest, QuotingAndLineEnds) {
  auto records = ParseCsv("a,\"b,\"\"c\"\"\"\r\n\"x\ny\",z");
  ASSERT_TRUE(records.ok());
  ASSERT_EQ(records->size(), 2u);
  EXPECT_EQ((*records)[0].fields[1], "b,\"c\"");
  EXPECT_EQ((*records)[1].fields[0], "x\ny");
  EXPECT_EQ((*records)[1].line, 2u);
}

TEST(IngestCsvTest, ReserializeIsAFixedPoint) {
  Schema schema{"q", {ColumnSpec::Numeric("x", -1, 1),
                      ColumnSpec::Categorical("c", {"a,1", "b\"2", "c"})}};
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> wide(-3, 3);
  for (int trial = 0; trial < 20; ++trial) {
    std::string csv = "x,c\n";
    for (int r = 0; r < 50; ++r) {
      csv += FormatDouble(wide(gen)) + "," +
             EscapeCsvField(schema.columns[1].categories[gen() % 3]) + "\n";
    }
    auto first = IngestCsv(csv, schema, false);
    ASSERT_TRUE(first.ok()) << first.status();
    const std::string text = WriteCsv(first->dataset);
    auto second = IngestCsv(text, schema, false);
    ASSERT_TRUE(second.ok());
    EXPECT_EQ(second->stats.clamped, 0u);
    EXPECT_EQ(WriteCsv(second->dataset), text);
  }
}

Dataset Ages(std::vector<double> ages) {
  std::vector<std::vector<Cell>> rows;
  for (double a : ages) rows.push_back({a, std::string("A")});
  return *Dataset::FromRows(PeopleSchema(), rows, false);
}

TEST(ApplyFilterTest, Examples) {
  Dataset data = Ages({25, 34, 61});
  auto older = ApplyFilter(data, Filter{{Predicate::AtLeast("age", 30)}});
  ASSERT_TRUE(older.ok());
  EXPECT_EQ(older->num_rows(), 2u);
  EXPECT_EQ(older->value(0, 0), 34);

  auto all = ApplyFilter(data, Filter{});
  EXPECT_EQ(all->num_rows(), 3u);

  auto none = ApplyFilter(data, Filter{{Predicate::AtLeast("age", 30),
                                        Predicate::AtMost("age", 20)}});
  EXPECT_EQ(none->num_rows(), 0u);
}

TEST(ApplyFilterTest, ValidationFailures) {
  Dataset data = Ages({1});
  EXPECT_FALSE(ApplyFilter(data, Filter{{Predicate::AtLeast("height", 1)}}).ok());
  EXPECT_FALSE(ApplyFilter(data, Filter{{Predicate::Equals("age", "A")}}).ok());
  EXPECT_FALSE(ApplyFilter(data, Filter{{Predicate::AtLeast("group", 1)}}).ok());
  EXPECT_FALSE(ApplyFilter(data, Filter{{Predicate::Between("age", 9, 3)}}).ok());
  EXPECT_FALSE(ApplyFilter(data, Filter{{Predicate::AtLeast("age", 101)}}).ok());
  EXPECT_FALSE(ApplyFilter(data, Filter{{Predicate::Equals("group", "Z")}}).ok());
}

TEST(ApplyFilterTest, IdempotentAndShrinking) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> age(0, 100);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::vector<Cell>> rows;
    for (int r = 0; r < 40; ++r) {
      rows.push_back({std::floor(age(gen)), std::string(gen() % 2 ? "A" : "B")});
    }
    Dataset data = *Dataset::FromRows(PeopleSchema(), rows, false);
    double lo = std::floor(age(gen)), hi = std::floor(age(gen));
    if (lo > hi) std::swap(lo, hi);
    Filter filter{{Predicate::Between("age", lo, hi)}};
    if (gen() % 2) filter.conjuncts.push_back(Predicate::NotEquals("group", "B"));
    Dataset once = *ApplyFilter(data, filter);
    Dataset twice = *ApplyFilter(once, filter);
    ASSERT_EQ(WriteCsv(once), WriteCsv(twice));
    ASSERT_LE(once.num_rows(), data.num_rows());
    bool every_row_matches = true;
    for (std::size_t r = 0; r < data.num_rows(); ++r) {
      const double a = data.value(r, 0);
      bool keep = a >= lo && a <= hi;
      if (filter.conjuncts.size() > 1) keep = keep && data.label(r, 1) != "B";
      every_row_matches = every_row_matches && keep;
    }
    ASSERT_EQ(once.num_rows() == data.num_rows(), every_row_matches);
  }
}

TEST(QueryTest, Validation) {
  Schema schema{"s", {ColumnSpec::Numeric("x", 0, 1), ColumnSpec::Numeric("y", 0, 1),
                      ColumnSpec::Categorical("c", {"a"})}};
  EXPECT_TRUE(ValidateQuery(schema, Query{"q", MeanQuery{"x", {}}}).ok());
  EXPECT_FALSE(ValidateQuery(schema, Query{"q", MeanQuery{"c", {}}}).ok());
  EXPECT_FALSE(ValidateQuery(schema, Query{"q", HistogramQuery{"x", {}}}).ok());
  EXPECT_FALSE(ValidateQuery(schema, Query{"q", QuantileQuery{"x", 1.0, {}}}).ok());
  EXPECT_FALSE(ValidateQuery(schema, Query{"q", OlsQuery{"y", {}, {}}}).ok());
  EXPECT_FALSE(ValidateQuery(schema, Query{"q", OlsQuery{"y", {"y"}, {}}}).ok());
  EXPECT_FALSE(ValidateQuery(schema, Query{"q", OlsQuery{"y", {"x", "x"}, {}}}).ok());
  EXPECT_TRUE(ValidateQuery(schema, Query{"q", OlsQuery{"y", {"x"}, {}}}).ok());
  EXPECT_FALSE(ValidateQuery(schema, Query{"bad id", CountQuery{}}).ok());
}

TEST(ScaleUnitTest, Endpoints) {
  Bounds b{-4, 12};
  EXPECT_EQ(ScaleToUnit(-4, b), 0.0);
  EXPECT_EQ(ScaleToUnit(12, b), 1.0);
  EXPECT_EQ(ScaleToUnit(4, b), 0.5);
}

TEST(ScaleUnitTest, MonotoneAndInvertible) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int trial = 0; trial < 1000; ++trial) {
    double lo = u(gen), hi = u(gen);
    if (lo == hi) continue;
    if (lo > hi) std::swap(lo, hi);
    Bounds b{lo, hi};
    std::uniform_real_distribution<double> inside(lo, hi);
    double a = inside(gen), c = inside(gen);
    if (a > c) std::swap(a, c);
    if (a < c) ASSERT_LT(ScaleToUnit(a, b), ScaleToUnit(c, b));
    const double back = ScaleFromUnit(ScaleToUnit(a, b), b);
    ASSERT_LE(std::fabs(back - a), 1e-12 * std::max({std::fabs(a), std::fabs(lo), std::fabs(hi)}));
  }
}

TEST(ScaleUnitDeathTest, OutsideBoundsIsAContractViolation) {
  EXPECT_DEATH(ScaleToUnit(2.0, Bounds{0, 1}), "outside bounds");
}

TEST(PublicDatasetTest, RejectsConfidential) {
  auto conf = *Dataset::FromRows(PeopleSchema(), {{1.0, std::string("A")}}, true);
  EXPECT_EQ(PublicDataset::Wrap(conf).status().code(),
            absl::StatusCode::kFailedPrecondition);
}

}  // namespace
}  // namespace vserver
