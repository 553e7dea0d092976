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
#include <cmath>
#include <set>
#include <utility>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_join.h"
#include "vserver/check.h"

namespace vserver {

const char* ColumnKindName(ColumnKind kind) {
  return kind == ColumnKind::kNumeric ? "numeric" : "categorical";
}

ColumnSpec ColumnSpec::Numeric(std::string name, double lower, double upper) {
  ColumnSpec spec;
  spec.name = std::move(name);
  spec.kind = ColumnKind::kNumeric;
  spec.bounds = {lower, upper};
  return spec;
}

ColumnSpec ColumnSpec::Categorical(std::string name,
                                   std::vector<std::string> categories) {
  ColumnSpec spec;
  spec.name = std::move(name);
  spec.kind = ColumnKind::kCategorical;
  spec.bounds = {0.0, 0.0};
  spec.categories = std::move(categories);
  return spec;
}

std::optional<int> ColumnSpec::CategoryCode(std::string_view label) const {
  for (std::size_t i = 0; i < categories.size(); ++i) {
    if (categories[i] == label) return static_cast<int>(i);
  }
  return std::nullopt;
}

std::optional<std::size_t> Schema::ColumnIndex(std::string_view name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i].name == name) return i;
  }
  return std::nullopt;
}

const ColumnSpec* Schema::FindColumn(std::string_view name) const {
  auto index = ColumnIndex(name);
  return index ? &columns[*index] : nullptr;
}

bool IsIdentifier(std::string_view s) {
  if (s.empty() || s.size() > 128) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
           (c >= '0' && c <= '9') || c == '_' || c == '-' || c == '.';
  }) && s != "." && s != "..";
}

std::vector<std::string> ValidateSchema(const Schema& schema) {
  std::vector<std::string> violations;
  if (!IsIdentifier(schema.dataset_id)) {
    violations.push_back(
        absl::StrCat("dataset_id '", schema.dataset_id, "': not an identifier"));
  }
  if (schema.columns.empty()) {
    violations.push_back("schema: no columns");
  }
  std::set<std::string> seen;
  for (const ColumnSpec& col : schema.columns) {
    const std::string where = absl::StrCat("column '", col.name, "': ");
    if (!IsIdentifier(col.name)) {
      violations.push_back(where + "name is not an identifier");
    }
    if (!seen.insert(col.name).second) {
      violations.push_back(where + "duplicate name");
    }
    if (col.kind == ColumnKind::kNumeric) {
      if (!std::isfinite(col.bounds.lower) ||
          !std::isfinite(col.bounds.upper)) {
        violations.push_back(where + "bounds not finite");
      } else if (col.bounds.lower == col.bounds.upper) {
        violations.push_back(where + "bounds degenerate");
      } else if (col.bounds.lower > col.bounds.upper) {
        violations.push_back(where + "bounds inverted");
      }
    } else {
      if (col.categories.empty()) {
        violations.push_back(where + "no categories");
      }
      std::set<std::string> labels;
      for (const std::string& label : col.categories) {
        if (label.empty()) violations.push_back(where + "empty category label");
        if (!labels.insert(label).second) {
          violations.push_back(
              absl::StrCat(where, "duplicate category '", label, "'"));
        }
      }
    }
  }
  return violations;
}

absl::Status CheckSchema(const Schema& schema) {
  std::vector<std::string> violations = ValidateSchema(schema);
  if (violations.empty()) return absl::OkStatus();
  return absl::InvalidArgumentError(absl::StrJoin(violations, "; "));
}

absl::StatusOr<Dataset> Dataset::Create(
    Schema schema, std::vector<std::vector<double>> columns,
    bool confidential) {
  if (absl::Status s = CheckSchema(schema); !s.ok()) return s;
  if (columns.size() != schema.columns.size()) {
    return absl::InvalidArgumentError(
        absl::StrCat("expected ", schema.columns.size(), " columns, got ",
                     columns.size()));
  }
  const std::size_t rows = columns.front().size();
  for (std::size_t c = 0; c < columns.size(); ++c) {
    const ColumnSpec& spec = schema.columns[c];
    if (columns[c].size() != rows) {
      return absl::InvalidArgumentError(
          absl::StrCat("column '", spec.name, "': ragged length"));
    }
    for (std::size_t r = 0; r < rows; ++r) {
      const double v = columns[c][r];
      if (spec.is_numeric()) {
        if (!std::isfinite(v) || !spec.bounds.Contains(v)) {
          return absl::InvalidArgumentError(absl::StrCat(
              "row ", r, ", column '", spec.name, "': value ", v,
              " outside [", spec.bounds.lower, ", ", spec.bounds.upper, "]"));
        }
      } else {
        const double max_code = static_cast<double>(spec.categories.size());
        if (!(v >= 0 && v < max_code) || v != std::floor(v)) {
          return absl::InvalidArgumentError(absl::StrCat(
              "row ", r, ", column '", spec.name, "': bad category code"));
        }
      }
    }
  }
  return Dataset(std::make_shared<const Schema>(std::move(schema)),
                 std::move(columns), rows, confidential);
}

absl::StatusOr<Dataset> Dataset::FromRows(
    Schema schema, const std::vector<std::vector<Cell>>& rows,
    bool confidential) {
  std::vector<std::vector<double>> columns(schema.columns.size());
  for (auto& col : columns) col.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != schema.columns.size()) {
      return absl::InvalidArgumentError(
          absl::StrCat("row ", r, ": wrong number of cells"));
    }
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      const ColumnSpec& spec = schema.columns[c];
      const Cell& cell = rows[r][c];
      if (spec.is_numeric()) {
        if (!std::holds_alternative<double>(cell)) {
          return absl::InvalidArgumentError(absl::StrCat(
              "row ", r, ", column '", spec.name, "': expected a number"));
        }
        columns[c].push_back(std::get<double>(cell));
      } else {
        if (!std::holds_alternative<std::string>(cell)) {
          return absl::InvalidArgumentError(absl::StrCat(
              "row ", r, ", column '", spec.name, "': expected a label"));
        }
        auto code = spec.CategoryCode(std::get<std::string>(cell));
        if (!code) {
          return absl::InvalidArgumentError(
              absl::StrCat("row ", r, ", column '", spec.name,
                           "': unknown category '", std::get<std::string>(cell),
                           "'"));
        }
        columns[c].push_back(*code);
      }
    }
  }
  return Create(std::move(schema), std::move(columns), confidential);
}

const std::string& Dataset::label(std::size_t row, std::size_t col) const {
  const ColumnSpec& spec = schema_->columns[col];
  VSERVER_CHECK(!spec.is_numeric(), "label() on a numeric column");
  return spec.categories[static_cast<std::size_t>(columns_[col][row])];
}

Dataset Dataset::Subset(std::span<const std::size_t> rows) const {
  std::vector<std::vector<double>> columns(columns_.size());
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    columns[c].reserve(rows.size());
    for (std::size_t r : rows) columns[c].push_back(columns_[c][r]);
  }
  return Dataset(schema_, std::move(columns), rows.size(), confidential_);
}

absl::StatusOr<PublicDataset> PublicDataset::Wrap(
    std::shared_ptr<const Dataset> data) {
  if (data == nullptr) return absl::InvalidArgumentError("null dataset");
  if (data->confidential()) {
    return absl::FailedPreconditionError(
        "dataset is flagged confidential; only public data is accepted here");
  }
  return PublicDataset(std::move(data));
}

absl::StatusOr<PublicDataset> PublicDataset::Wrap(Dataset data) {
  return Wrap(std::make_shared<const Dataset>(std::move(data)));
}

const char* FilterOpName(FilterOp op) {
  switch (op) {
    case FilterOp::kEq: return "=";
    case FilterOp::kNe: return "!=";
    case FilterOp::kGe: return ">=";
    case FilterOp::kLe: return "<=";
    case FilterOp::kRange: return "range";
  }
  return "?";
}

std::optional<FilterOp> ParseFilterOp(std::string_view name) {
  if (name == "=" || name == "==") return FilterOp::kEq;
  if (name == "!=" || name == "<>") return FilterOp::kNe;
  if (name == ">=") return FilterOp::kGe;
  if (name == "<=") return FilterOp::kLe;
  if (name == "range") return FilterOp::kRange;
  return std::nullopt;
}

Predicate Predicate::Equals(std::string column, std::string label) {
  return {std::move(column), FilterOp::kEq, std::move(label)};
}
Predicate Predicate::NotEquals(std::string column, std::string label) {
  return {std::move(column), FilterOp::kNe, std::move(label)};
}
Predicate Predicate::AtLeast(std::string column, double lo) {
  return {std::move(column), FilterOp::kGe, "", lo, 0.0};
}
Predicate Predicate::AtMost(std::string column, double hi) {
  return {std::move(column), FilterOp::kLe, "", 0.0, hi};
}
Predicate Predicate::Between(std::string column, double lo, double hi) {
  return {std::move(column), FilterOp::kRange, "", lo, hi};
}

absl::Status ValidateFilter(const Schema& schema, const Filter& filter) {
  for (const Predicate& p : filter.conjuncts) {
    const ColumnSpec* spec = schema.FindColumn(p.column);
    if (spec == nullptr) {
      return absl::InvalidArgumentError(
          absl::StrCat("filter: unknown column '", p.column, "'"));
    }
    const bool categorical_op = p.op == FilterOp::kEq || p.op == FilterOp::kNe;
    if (categorical_op == spec->is_numeric()) {
      return absl::InvalidArgumentError(absl::StrCat(
          "filter: operator '", FilterOpName(p.op), "' not valid on ",
          ColumnKindName(spec->kind), " column '", p.column, "'"));
    }
    if (categorical_op) {
      if (!spec->CategoryCode(p.label)) {
        return absl::InvalidArgumentError(absl::StrCat(
            "filter: '", p.label, "' is not a category of '", p.column, "'"));
      }
      continue;
    }
    const bool uses_lo = p.op != FilterOp::kLe;
    const bool uses_hi = p.op != FilterOp::kGe;
    if ((uses_lo && !spec->bounds.Contains(p.lo)) ||
        (uses_hi && !spec->bounds.Contains(p.hi))) {
      return absl::InvalidArgumentError(absl::StrCat(
          "filter: operand outside the declared bounds of '", p.column, "'"));
    }
    if (p.op == FilterOp::kRange && p.lo > p.hi) {
      return absl::InvalidArgumentError(
          absl::StrCat("filter: range on '", p.column, "' has lo > hi"));
    }
  }
  return absl::OkStatus();
}

absl::StatusOr<std::vector<std::size_t>> SelectRows(const Dataset& data,
                                                    const Filter& filter) {
  if (absl::Status s = ValidateFilter(data.schema(), filter); !s.ok()) {
    return s;
  }
  struct Compiled {
    std::span<const double> values;
    FilterOp op;
    double a;
    double b;
  };
  std::vector<Compiled> compiled;
  for (const Predicate& p : filter.conjuncts) {
    const std::size_t col = *data.schema().ColumnIndex(p.column);
    const ColumnSpec& spec = data.schema().columns[col];
    double a = p.lo;
    if (!spec.is_numeric()) a = *spec.CategoryCode(p.label);
    compiled.push_back({data.column(col), p.op, a, p.hi});
  }
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < data.num_rows(); ++r) {
    bool keep = true;
    for (const Compiled& c : compiled) {
      const double v = c.values[r];
      switch (c.op) {
        case FilterOp::kEq: keep = v == c.a; break;
        case FilterOp::kNe: keep = v != c.a; break;
        case FilterOp::kGe: keep = v >= c.a; break;
        case FilterOp::kLe: keep = v <= c.b; break;
        case FilterOp::kRange: keep = v >= c.a && v <= c.b; break;
      }
      if (!keep) break;
    }
    if (keep) rows.push_back(r);
  }
  return rows;
}

absl::StatusOr<Dataset> ApplyFilter(const Dataset& data, const Filter& filter) {
  absl::StatusOr<std::vector<std::size_t>> rows = SelectRows(data, filter);
  if (!rows.ok()) return rows.status();
  return data.Subset(*rows);
}

const char* QueryKindName(QueryKind kind) {
  switch (kind) {
    case QueryKind::kCount: return "count";
    case QueryKind::kHistogram: return "histogram";
    case QueryKind::kMean: return "mean";
    case QueryKind::kQuantile: return "quantile";
    case QueryKind::kOls: return "ols";
  }
  return "?";
}

std::optional<QueryKind> ParseQueryKind(std::string_view name) {
  for (QueryKind k : {QueryKind::kCount, QueryKind::kHistogram,
                      QueryKind::kMean, QueryKind::kQuantile, QueryKind::kOls}) {
    if (std::string_view(QueryKindName(k)) == name) return k;
  }
  return std::nullopt;
}

const Filter& Query::filter() const {
  return std::visit([](const auto& q) -> const Filter& { return q.filter; },
                    body);
}

namespace {

absl::Status RequireColumn(const Schema& schema, const std::string& name,
                           ColumnKind kind, const char* role) {
  const ColumnSpec* spec = schema.FindColumn(name);
  if (spec == nullptr) {
    return absl::InvalidArgumentError(
        absl::StrCat(role, ": unknown column '", name, "'"));
  }
  if (spec->kind != kind) {
    return absl::InvalidArgumentError(
        absl::StrCat(role, ": column '", name, "' is ",
                     ColumnKindName(spec->kind), ", expected ",
                     ColumnKindName(kind)));
  }
  return absl::OkStatus();
}

}  // namespace

absl::Status ValidateQuery(const Schema& schema, const Query& query) {
  if (!IsIdentifier(query.query_id)) {
    return absl::InvalidArgumentError(
        absl::StrCat("query_id '", query.query_id, "' is not an identifier"));
  }
  absl::Status body = std::visit(
      [&](const auto& q) -> absl::Status {
        using T = std::decay_t<decltype(q)>;
        if constexpr (std::is_same_v<T, HistogramQuery>) {
          return RequireColumn(schema, q.column, ColumnKind::kCategorical,
                               "histogram");
        } else if constexpr (std::is_same_v<T, MeanQuery>) {
          return RequireColumn(schema, q.column, ColumnKind::kNumeric, "mean");
        } else if constexpr (std::is_same_v<T, QuantileQuery>) {
          if (!(q.q > 0.0 && q.q < 1.0)) {
            return absl::InvalidArgumentError("quantile: q must lie in (0, 1)");
          }
          return RequireColumn(schema, q.column, ColumnKind::kNumeric,
                               "quantile");
        } else if constexpr (std::is_same_v<T, OlsQuery>) {
          if (absl::Status s = RequireColumn(schema, q.outcome,
                                             ColumnKind::kNumeric, "ols outcome");
              !s.ok()) {
            return s;
          }
          if (q.predictors.empty()) {
            return absl::InvalidArgumentError("ols: at least one predictor");
          }
          std::set<std::string> seen;
          for (const std::string& p : q.predictors) {
            if (absl::Status s = RequireColumn(schema, p, ColumnKind::kNumeric,
                                               "ols predictor");
                !s.ok()) {
              return s;
            }
            if (p == q.outcome) {
              return absl::InvalidArgumentError(
                  absl::StrCat("ols: predictor '", p, "' is the outcome"));
            }
            if (!seen.insert(p).second) {
              return absl::InvalidArgumentError(
                  absl::StrCat("ols: predictor '", p, "' repeated"));
            }
          }
          return absl::OkStatus();
        } else {
          return absl::OkStatus();
        }
      },
      query.body);
  if (!body.ok()) return body;
  return ValidateFilter(schema, query.filter());
}

double ScaleToUnit(double value, Bounds bounds) {
  VSERVER_CHECK(bounds.lower < bounds.upper, "degenerate bounds");
  VSERVER_CHECK(bounds.Contains(value), "value outside bounds");
  return (value - bounds.lower) / bounds.width();
}

double ScaleFromUnit(double unit, Bounds bounds) {
  return bounds.lower + unit * bounds.width();
}

}  // namespace vserver
