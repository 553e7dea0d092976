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

#include "vserver/csv.h"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "absl/strings/str_cat.h"

namespace vserver {

absl::StatusOr<std::vector<CsvRecord>> ParseCsv(std::string_view text) {
  std::vector<CsvRecord> records;
  std::size_t line = 1;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    CsvRecord record;
    record.line = line;
    std::string field;
    bool at_field_start = true;
    bool record_done = false;
    while (!record_done) {
      if (i >= n) {
        record.fields.push_back(std::move(field));
        break;
      }
      char c = text[i];
      if (at_field_start && c == '"') {
        ++i;
        bool closed = false;
        while (i < n) {
          if (text[i] == '"') {
            if (i + 1 < n && text[i + 1] == '"') {
              field.push_back('"');
              i += 2;
              continue;
            }
            ++i;
            closed = true;
            break;
          }
          if (text[i] == '\n') ++line;
          field.push_back(text[i++]);
        }
        if (!closed) {
          return absl::InvalidArgumentError(absl::StrCat(
              "malformed CSV: unterminated quote starting line ",
              record.line));
        }
        if (i < n && text[i] != ',' && text[i] != '\n' && text[i] != '\r') {
          return absl::InvalidArgumentError(absl::StrCat(
              "malformed CSV: text after closing quote line ", line));
        }
        at_field_start = false;
        continue;
      }
      at_field_start = false;
      if (c == ',') {
        record.fields.push_back(std::move(field));
        field.clear();
        at_field_start = true;
        ++i;
      } else if (c == '\r' || c == '\n') {
        record.fields.push_back(std::move(field));
        if (c == '\r' && i + 1 < n && text[i + 1] == '\n') ++i;
        ++i;
        ++line;
        record_done = true;
      } else if (c == '"') {
        return absl::InvalidArgumentError(
            absl::StrCat("malformed CSV: stray quote line ", line));
      } else {
        field.push_back(c);
        ++i;
      }
    }
    records.push_back(std::move(record));
  }
  return records;
}

std::string EscapeCsvField(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) {
    return std::string(field);
  }
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string FormatDouble(double value) {
  char buf[64];
  auto result = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, result.ptr);
}

namespace {

}  // namespace

bool ParseNumber(std::string_view s, double& out) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto result = std::from_chars(s.data(), s.data() + s.size(), out);
  return result.ec == std::errc() && result.ptr == s.data() + s.size() &&
         std::isfinite(out);
}

absl::StatusOr<IngestResult> IngestCsv(std::string_view text,
                                       const Schema& schema,
                                       bool confidential) {
  if (absl::Status s = CheckSchema(schema); !s.ok()) return s;
  absl::StatusOr<std::vector<CsvRecord>> records = ParseCsv(text);
  if (!records.ok()) return records.status();
  if (records->empty()) {
    return absl::InvalidArgumentError("header mismatch line 1: empty input");
  }
  const CsvRecord& header = records->front();
  bool header_ok = header.fields.size() == schema.columns.size();
  for (std::size_t c = 0; header_ok && c < schema.columns.size(); ++c) {
    header_ok = header.fields[c] == schema.columns[c].name;
  }
  if (!header_ok) {
    return absl::InvalidArgumentError(
        absl::StrCat("header mismatch line ", header.line));
  }

  IngestStats stats;
  std::vector<std::vector<double>> columns(schema.columns.size());
  std::vector<double> row(schema.columns.size());
  for (std::size_t r = 1; r < records->size(); ++r) {
    const CsvRecord& rec = (*records)[r];
    if (rec.fields.size() != schema.columns.size()) {
      return absl::InvalidArgumentError(
          absl::StrCat("malformed CSV: expected ", schema.columns.size(),
                       " fields, got ", rec.fields.size(), " line ", rec.line));
    }
    bool rejected = false;
    std::size_t clamped = 0;
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
      const ColumnSpec& spec = schema.columns[c];
      const std::string& cell = rec.fields[c];
      if (spec.is_numeric()) {
        double v;
        if (!ParseNumber(cell, v)) {
          return absl::InvalidArgumentError(
              absl::StrCat("non-numeric value '", cell, "' in column '",
                           spec.name, "' line ", rec.line));
        }
        if (v < spec.bounds.lower || v > spec.bounds.upper) {
          v = std::clamp(v, spec.bounds.lower, spec.bounds.upper);
          ++clamped;
        }
        row[c] = v;
      } else {
        auto code = spec.CategoryCode(cell);
        if (!code) {
          rejected = true;
          continue;
        }
        row[c] = *code;
      }
    }
    if (rejected) {
      ++stats.rejected;
      continue;
    }
    stats.clamped += clamped;
    for (std::size_t c = 0; c < row.size(); ++c) columns[c].push_back(row[c]);
  }
  absl::StatusOr<Dataset> data =
      Dataset::Create(schema, std::move(columns), confidential);
  if (!data.ok()) return data.status();
  return IngestResult{*std::move(data), stats};
}

std::string WriteCsv(const Dataset& data) {
  const Schema& schema = data.schema();
  std::string out;
  for (std::size_t c = 0; c < schema.columns.size(); ++c) {
    if (c) out.push_back(',');
    out += EscapeCsvField(schema.columns[c].name);
  }
  out.push_back('\n');
  for (std::size_t r = 0; r < data.num_rows(); ++r) {
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
      if (c) out.push_back(',');
      if (schema.columns[c].is_numeric()) {
        out += FormatDouble(data.value(r, c));
      } else {
        out += EscapeCsvField(data.label(r, c));
      }
    }
    out.push_back('\n');
  }
  return out;
}

}  // namespace vserver
