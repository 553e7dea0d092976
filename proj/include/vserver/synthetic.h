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

// Public synthetic twins of confidential datasets: registration, validation,
// a metadata-only placeholder generator, and unbudgeted preview execution.

#ifndef VSERVER_SYNTHETIC_H_
#define VSERVER_SYNTHETIC_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "absl/status/statusor.h"
#include "vserver/domain.h"
#include "vserver/mechanisms.h"

namespace vserver {

enum class SyntheticProvenance { kCuratorSupplied, kPlaceholderGenerated };

const char* SyntheticProvenanceName(SyntheticProvenance provenance);
std::optional<SyntheticProvenance> ParseSyntheticProvenance(std::string_view name);

// Empty when `candidate` is a valid twin for `confidential`. Otherwise one
// message per problem, each naming the column (and row, for domain errors).
std::vector<std::string> ValidateSynthetic(const Schema& confidential,
                                           const Dataset& candidate);

// Same check applied to raw CSV text, so that out-of-domain values are reported
// rather than clamped as ingestion would. Returns the parsed dataset when valid.
absl::StatusOr<Dataset> ParseSyntheticCsv(const Schema& confidential,
                                          std::string_view text);

// n rows drawn independently per column: uniform on [L, U] for numeric
// columns and uniform over the category list for categorical ones.
absl::StatusOr<Dataset> GeneratePlaceholder(const Schema& schema, std::size_t n,
                                            std::uint64_t seed);

class SyntheticRegistration {
 public:
  static absl::StatusOr<SyntheticRegistration> Create(
      const Schema& confidential, Dataset candidate,
      SyntheticProvenance provenance, std::optional<std::uint64_t> seed,
      std::string note);

  const std::string& dataset_id() const { return dataset_id_; }
  const PublicDataset& data() const { return data_; }
  SyntheticProvenance provenance() const { return provenance_; }
  std::optional<std::uint64_t> seed() const { return seed_; }
  const std::string& note() const { return note_; }

 private:
  SyntheticRegistration(std::string dataset_id, PublicDataset data,
                        SyntheticProvenance provenance,
                        std::optional<std::uint64_t> seed, std::string note)
      : dataset_id_(std::move(dataset_id)),
        data_(std::move(data)),
        provenance_(provenance),
        seed_(seed),
        note_(std::move(note)) {}

  std::string dataset_id_;
  PublicDataset data_;
  SyntheticProvenance provenance_;
  std::optional<std::uint64_t> seed_;
  std::string note_;
};

struct PreviewResult {
  MechanismResult exact;
  std::optional<MechanismResult> noisy;  // present when epsilon was given
};

// Runs `query` on public data only. Never touches the ledger.
absl::StatusOr<PreviewResult> RunPreview(const Query& query,
                                         const PublicDataset& synthetic,
                                         std::optional<double> epsilon,
                                         std::uint64_t seed,
                                         const MechanismOptions& options = {});

}  // namespace vserver

#endif  // VSERVER_SYNTHETIC_H_
