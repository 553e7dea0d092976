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

#ifndef VSERVER_CSV_H_
#define VSERVER_CSV_H_

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "absl/status/statusor.h"
#include "vserver/domain.h"

namespace vserver {

struct CsvRecord {
  std::size_t line = 0;  // 1-based line on which the record starts
  std::vector<std::string> fields;
};

// RFC 4180 reader: quoted fields, doubled quotes, CRLF or LF line ends.
// A trailing newline does not produce an empty record.
absl::StatusOr<std::vector<CsvRecord>> ParseCsv(std::string_view text);

// Quotes a field only when it contains a comma, quote, CR or LF.
std::string EscapeCsvField(std::string_view field);

// Shortest decimal string that round-trips to the same double.
std::string FormatDouble(double value);

// Strict decimal parse: surrounding spaces allowed, nothing else; finite only.
bool ParseNumber(std::string_view s, double& out);

struct IngestStats {
  std::size_t clamped = 0;
  std::size_t rejected = 0;
};

struct IngestResult {
  Dataset dataset;
  IngestStats stats;
};

// Loads CSV whose header matches the schema column names in order. Numeric
// values outside [L, U] are clamped to the nearest bound; rows carrying an
// unknown category label are dropped. Structural problems (bad quoting,
// field counts, unparsable or empty numbers) fail with the line number.
absl::StatusOr<IngestResult> IngestCsv(std::string_view text,
                                       const Schema& schema,
                                       bool confidential);

std::string WriteCsv(const Dataset& data);

}  // namespace vserver

#endif  // VSERVER_CSV_H_
