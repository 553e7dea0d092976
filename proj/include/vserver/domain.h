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

// Typed tabular data: schemas with declared per-column domains, immutable
// columnar datasets, conjunctive row filters and the structured query
// variants that every mechanism consumes.

#ifndef VSERVER_DOMAIN_H_
#define VSERVER_DOMAIN_H_

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"

namespace vserver {

enum class ColumnKind { kNumeric, kCategorical };

const char* ColumnKindName(ColumnKind kind);

struct Bounds {
  double lower = 0.0;
  double upper = 1.0;

  double width() const { return upper - lower; }
  bool Contains(double v) const { return v >= lower && v <= upper; }
  bool operator==(const Bounds&) const = default;
};

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::kNumeric;
  Bounds bounds;                        // numeric only
  std::vector<std::string> categories;  // categorical only, public order

  static ColumnSpec Numeric(std::string name, double lower, double upper);
  static ColumnSpec Categorical(std::string name,
                                std::vector<std::string> categories);

  std::optional<int> CategoryCode(std::string_view label) const;
  bool is_numeric() const { return kind == ColumnKind::kNumeric; }

  bool operator==(const ColumnSpec&) const = default;
};

struct Schema {
  std::string dataset_id;
  std::vector<ColumnSpec> columns;

  std::optional<std::size_t> ColumnIndex(std::string_view name) const;
  const ColumnSpec* FindColumn(std::string_view name) const;

  bool operator==(const Schema&) const = default;
};

// True for non-empty names made of [A-Za-z0-9_.-]. Identifiers end up in
// file names and URLs, so nothing else is accepted.
bool IsIdentifier(std::string_view s);

// Every violated schema invariant, each naming the column and the rule.
// An empty result means the schema is valid.
std::vector<std::string> ValidateSchema(const Schema& schema);

// ValidateSchema folded into a single InvalidArgument status.
absl::Status CheckSchema(const Schema& schema);

// A cell as seen by callers building datasets from literal rows.
using Cell = std::variant<double, std::string>;

// Immutable columnar table. Numeric cells hold the value, categorical cells
// hold the index into ColumnSpec::categories. Every cell lies in its declared
// domain; construction fails otherwise.
class Dataset {
 public:
  static absl::StatusOr<Dataset> Create(
      Schema schema, std::vector<std::vector<double>> columns,
      bool confidential);
  static absl::StatusOr<Dataset> FromRows(
      Schema schema, const std::vector<std::vector<Cell>>& rows,
      bool confidential);

  const Schema& schema() const { return *schema_; }
  std::size_t num_rows() const { return num_rows_; }
  std::size_t num_columns() const { return columns_.size(); }
  bool confidential() const { return confidential_; }

  std::span<const double> column(std::size_t index) const {
    return columns_[index];
  }
  double value(std::size_t row, std::size_t col) const {
    return columns_[col][row];
  }
  const std::string& label(std::size_t row, std::size_t col) const;

  // Rows at the given indices, order preserved, same schema and flag.
  Dataset Subset(std::span<const std::size_t> rows) const;

 private:
  Dataset(std::shared_ptr<const Schema> schema,
          std::vector<std::vector<double>> columns, std::size_t num_rows,
          bool confidential)
      : schema_(std::move(schema)),
        columns_(std::move(columns)),
        num_rows_(num_rows),
        confidential_(confidential) {}

  std::shared_ptr<const Schema> schema_;
  std::vector<std::vector<double>> columns_;
  std::size_t num_rows_ = 0;
  bool confidential_ = false;
};

// A dataset statically known to be public. Code that must never observe
// confidential records (translation, previews) takes this type.
class PublicDataset {
 public:
  static absl::StatusOr<PublicDataset> Wrap(
      std::shared_ptr<const Dataset> data);
  static absl::StatusOr<PublicDataset> Wrap(Dataset data);

  const Dataset& data() const { return *data_; }
  const Schema& schema() const { return data_->schema(); }
  std::shared_ptr<const Dataset> shared() const { return data_; }

 private:
  explicit PublicDataset(std::shared_ptr<const Dataset> data)
      : data_(std::move(data)) {}
  std::shared_ptr<const Dataset> data_;
};

enum class FilterOp { kEq, kNe, kGe, kLe, kRange };

const char* FilterOpName(FilterOp op);
std::optional<FilterOp> ParseFilterOp(std::string_view name);

struct Predicate {
  std::string column;
  FilterOp op = FilterOp::kEq;
  std::string label;  // kEq / kNe
  double lo = 0.0;    // kGe, kRange
  double hi = 0.0;    // kLe, kRange

  static Predicate Equals(std::string column, std::string label);
  static Predicate NotEquals(std::string column, std::string label);
  static Predicate AtLeast(std::string column, double lo);
  static Predicate AtMost(std::string column, double hi);
  static Predicate Between(std::string column, double lo, double hi);

  bool operator==(const Predicate&) const = default;
};

// Conjunction of predicates. An empty list selects every row.
struct Filter {
  std::vector<Predicate> conjuncts;
  bool operator==(const Filter&) const = default;
};

absl::Status ValidateFilter(const Schema& schema, const Filter& filter);

// Indices of the rows satisfying every conjunct, in order.
absl::StatusOr<std::vector<std::size_t>> SelectRows(const Dataset& data,
                                                    const Filter& filter);
absl::StatusOr<Dataset> ApplyFilter(const Dataset& data, const Filter& filter);

struct CountQuery {
  Filter filter;
  bool operator==(const CountQuery&) const = default;
};
struct HistogramQuery {
  std::string column;
  Filter filter;
  bool operator==(const HistogramQuery&) const = default;
};
struct MeanQuery {
  std::string column;
  Filter filter;
  bool operator==(const MeanQuery&) const = default;
};
struct QuantileQuery {
  std::string column;
  double q = 0.5;
  Filter filter;
  bool operator==(const QuantileQuery&) const = default;
};
struct OlsQuery {
  std::string outcome;
  std::vector<std::string> predictors;
  Filter filter;
  bool operator==(const OlsQuery&) const = default;
};

enum class QueryKind { kCount, kHistogram, kMean, kQuantile, kOls };

const char* QueryKindName(QueryKind kind);
std::optional<QueryKind> ParseQueryKind(std::string_view name);

struct Query {
  std::string query_id;
  std::variant<CountQuery, HistogramQuery, MeanQuery, QuantileQuery, OlsQuery>
      body;

  QueryKind kind() const { return static_cast<QueryKind>(body.index()); }
  const Filter& filter() const;

  bool operator==(const Query&) const = default;
};

absl::Status ValidateQuery(const Schema& schema, const Query& query);

// Affine map of [L, U] onto [0, 1]. Values outside the bounds are a contract
// violation: ingestion clamps before anything reaches here.
double ScaleToUnit(double value, Bounds bounds);
double ScaleFromUnit(double unit, Bounds bounds);

}  // namespace vserver

#endif  // VSERVER_DOMAIN_H_
