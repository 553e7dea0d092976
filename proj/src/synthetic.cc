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

#include <algorithm>
#include <cmath>

#include "absl/strings/str_cat.h"
#include "vserver/csv.h"
#include "vserver/random.h"

namespace vserver {

namespace {

constexpr std::size_t kMaxViolations = 50;

class Violations {
 public:
  void Add(std::string message) {
    if (messages_.size() < kMaxViolations) {
      messages_.push_back(std::move(message));
    } else {
      ++dropped_;
    }
  }
  std::vector<std::string> Finish() && {
    if (dropped_ > 0) messages_.push_back(absl::StrCat("... and ", dropped_, " more"));
    return std::move(messages_);
  }
  bool empty() const { return messages_.empty(); }

 private:
  std::vector<std::string> messages_;
  std::size_t dropped_ = 0;
};

std::string OutOfBounds(std::size_t row, const ColumnSpec& spec, double v) {
  return absl::StrCat("row ", row, ", column '", spec.name, "': value ",
                      FormatDouble(v), " outside [", FormatDouble(spec.bounds.lower),
                      ", ", FormatDouble(spec.bounds.upper), "]");
}

void CompareColumns(const Schema& confidential, const Schema& candidate,
                    Violations& out) {
  for (const ColumnSpec& want : confidential.columns) {
    const ColumnSpec* got = candidate.FindColumn(want.name);
    if (got == nullptr) {
      out.Add(absl::StrCat("column '", want.name, "': column absent"));
      continue;
    }
    if (got->kind != want.kind) {
      out.Add(absl::StrCat("column '", want.name, "': kind ",
                           ColumnKindName(got->kind), ", expected ",
                           ColumnKindName(want.kind)));
    } else if (want.is_numeric() && got->bounds != want.bounds) {
      out.Add(absl::StrCat("column '", want.name, "': bounds differ"));
    } else if (!want.is_numeric() && got->categories != want.categories) {
      out.Add(absl::StrCat("column '", want.name, "': categories differ"));
    }
  }
  for (std::size_t c = 0; c < candidate.columns.size(); ++c) {
    const std::string& name = candidate.columns[c].name;
    auto index = confidential.ColumnIndex(name);
    if (!index) {
      out.Add(absl::StrCat("column '", name, "': not in confidential schema"));
    } else if (*index != c) {
      out.Add(absl::StrCat("column '", name, "': position ", c, ", expected ",
                           *index));
    }
  }
}

}  // namespace

const char* SyntheticProvenanceName(SyntheticProvenance provenance) {
  switch (provenance) {
    case SyntheticProvenance::kCuratorSupplied: return "curator-supplied";
    case SyntheticProvenance::kPlaceholderGenerated: return "placeholder-generated";
  }
  return "?";
}

std::optional<SyntheticProvenance> ParseSyntheticProvenance(std::string_view name) {
  for (SyntheticProvenance p : {SyntheticProvenance::kCuratorSupplied,
                                SyntheticProvenance::kPlaceholderGenerated}) {
    if (name == SyntheticProvenanceName(p)) return p;
  }
  return std::nullopt;
}

std::vector<std::string> ValidateSynthetic(const Schema& confidential,
                                           const Dataset& candidate) {
  Violations out;
  if (candidate.confidential()) out.Add("candidate is flagged confidential");
  CompareColumns(confidential, candidate.schema(), out);
  // Rows can only leave the domain where the candidate's own bounds are wider.
  for (const ColumnSpec& want : confidential.columns) {
    auto index = candidate.schema().ColumnIndex(want.name);
    if (!index || !want.is_numeric() ||
        !candidate.schema().columns[*index].is_numeric()) {
      continue;
    }
    std::span<const double> values = candidate.column(*index);
    for (std::size_t r = 0; r < values.size(); ++r) {
      if (!want.bounds.Contains(values[r])) out.Add(OutOfBounds(r + 1, want, values[r]));
    }
  }
  return std::move(out).Finish();
}

absl::StatusOr<Dataset> ParseSyntheticCsv(const Schema& confidential,
                                          std::string_view text) {
  absl::StatusOr<std::vector<CsvRecord>> records = ParseCsv(text);
  if (!records.ok()) return records.status();
  if (records->empty()) return absl::InvalidArgumentError("synthetic file is empty");
  Violations out;
  const std::vector<std::string>& header = records->front().fields;
  for (const ColumnSpec& spec : confidential.columns) {
    if (std::find(header.begin(), header.end(), spec.name) == header.end()) {
      out.Add(absl::StrCat("column '", spec.name, "': column absent"));
    }
  }
  for (const std::string& name : header) {
    if (!confidential.FindColumn(name)) {
      out.Add(absl::StrCat("column '", name, "': not in confidential schema"));
    }
  }
  if (out.empty()) {
    for (std::size_t r = 1; r < records->size(); ++r) {
      const CsvRecord& rec = (*records)[r];
      if (rec.fields.size() != header.size()) {
        out.Add(absl::StrCat("row ", r, ": expected ", header.size(),
                             " fields, got ", rec.fields.size()));
        continue;
      }
      for (std::size_t c = 0; c < header.size(); ++c) {
        const ColumnSpec& spec = *confidential.FindColumn(header[c]);
        const std::string& cell = rec.fields[c];
        if (spec.is_numeric()) {
          double v;
          if (!ParseNumber(cell, v)) {
            out.Add(absl::StrCat("row ", r, ", column '", spec.name,
                                 "': non-numeric value '", cell, "'"));
          } else if (!spec.bounds.Contains(v)) {
            out.Add(OutOfBounds(r, spec, v));
          }
        } else if (!spec.CategoryCode(cell)) {
          out.Add(absl::StrCat("row ", r, ", column '", spec.name,
                               "': unknown category '", cell, "'"));
        }
      }
    }
  }
  if (!out.empty()) {
    std::vector<std::string> messages = std::move(out).Finish();
    std::string joined;
    for (const std::string& m : messages) absl::StrAppend(&joined, joined.empty() ? "" : "; ", m);
    return absl::InvalidArgumentError(absl::StrCat("synthetic data invalid: ", joined));
  }
  // Reorder the fields to schema order, then ingest (nothing is clamped now).
  std::string reordered;
  std::vector<std::size_t> source;
  for (const ColumnSpec& spec : confidential.columns) {
    source.push_back(std::find(header.begin(), header.end(), spec.name) - header.begin());
  }
  for (const CsvRecord& rec : *records) {
    for (std::size_t c = 0; c < source.size(); ++c) {
      if (c > 0) reordered += ',';
      reordered += EscapeCsvField(rec.fields[source[c]]);
    }
    reordered += '\n';
  }
  absl::StatusOr<IngestResult> ingested = IngestCsv(reordered, confidential, false);
  if (!ingested.ok()) return ingested.status();
  return std::move(ingested->dataset);
}

absl::StatusOr<Dataset> GeneratePlaceholder(const Schema& schema, std::size_t n,
                                            std::uint64_t seed) {
  if (absl::Status s = CheckSchema(schema); !s.ok()) return s;
  if (n == 0) return absl::InvalidArgumentError("placeholder needs at least one row");
  std::vector<std::vector<double>> columns(schema.columns.size());
  for (std::size_t c = 0; c < schema.columns.size(); ++c) {
    const ColumnSpec& spec = schema.columns[c];
    RandomSource rng = RandomSource::Seeded(DeriveSeed(seed, spec.name));
    std::vector<double>& col = columns[c];
    col.reserve(n);
    for (std::size_t r = 0; r < n; ++r) {
      const double u = rng.UniformOpen();
      if (spec.is_numeric()) {
        col.push_back(std::clamp(spec.bounds.lower + spec.bounds.width() * u,
                                 spec.bounds.lower, spec.bounds.upper));
      } else {
        const double k = static_cast<double>(spec.categories.size());
        col.push_back(std::min(std::floor(u * k), k - 1));
      }
    }
  }
  return Dataset::Create(schema, std::move(columns), /*confidential=*/false);
}

absl::StatusOr<SyntheticRegistration> SyntheticRegistration::Create(
    const Schema& confidential, Dataset candidate, SyntheticProvenance provenance,
    std::optional<std::uint64_t> seed, std::string note) {
  std::vector<std::string> violations = ValidateSynthetic(confidential, candidate);
  if (!violations.empty()) {
    std::string joined;
    for (const std::string& v : violations) absl::StrAppend(&joined, joined.empty() ? "" : "; ", v);
    return absl::InvalidArgumentError(absl::StrCat("synthetic data invalid: ", joined));
  }
  if (provenance == SyntheticProvenance::kPlaceholderGenerated && !seed) {
    return absl::InvalidArgumentError("placeholder provenance requires a seed");
  }
  absl::StatusOr<PublicDataset> data = PublicDataset::Wrap(std::move(candidate));
  if (!data.ok()) return data.status();
  return SyntheticRegistration(confidential.dataset_id, *std::move(data),
                               provenance, seed, std::move(note));
}

absl::StatusOr<PreviewResult> RunPreview(const Query& query,
                                         const PublicDataset& synthetic,
                                         std::optional<double> epsilon,
                                         std::uint64_t seed,
                                         const MechanismOptions& options) {
  absl::StatusOr<ExactStatistics> stats =
      ComputeStatistics(synthetic.data(), query, options);
  if (!stats.ok()) return stats.status();
  PreviewResult out;
  out.exact = ExactResult(*stats, options);
  if (epsilon) {
    absl::StatusOr<PrivacyCost> cost = PrivacyCost::Create(*epsilon);
    if (!cost.ok()) return cost.status();
    RandomSource rng = RandomSource::Seeded(seed);
    out.noisy = Perturb(*stats, *cost, rng, options);
  }
  return out;
}

}  // namespace vserver
