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

// On-disk dataset store. Each dataset lives in <data_dir>/datasets/<id>/ as
//   schema.json        public schema
//   confidential.csv   bounded confidential rows
//   synthetic.csv      public twin
//   synthetic.json     provenance of the twin

#ifndef VSERVER_CATALOG_H_
#define VSERVER_CATALOG_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "absl/status/statusor.h"
#include "vserver/csv.h"
#include "vserver/domain.h"
#include "vserver/synthetic.h"
#include "vserver/workflow.h"

namespace vserver {

struct SyntheticInfo {
  SyntheticProvenance provenance = SyntheticProvenance::kCuratorSupplied;
  std::optional<std::uint64_t> seed;
  std::string note;
};

struct CatalogEntry {
  Schema schema;
  DatasetPair data;
  SyntheticInfo synthetic;
};

std::string DatasetDirectory(const std::string& data_dir, const std::string& id);

// Validates and stores confidential rows (numeric values clamped to bounds,
// rows with unknown categories dropped) together with the schema.
absl::StatusOr<IngestStats> IngestDataset(const std::string& data_dir,
                                          const Schema& schema,
                                          std::string_view csv_text);

absl::StatusOr<Schema> ReadSchema(const std::string& data_dir, const std::string& id);

// Validates `candidate` against the stored schema and writes the twin.
absl::Status RegisterSynthetic(const std::string& data_dir, const std::string& id,
                               const Dataset& candidate, const SyntheticInfo& info);

struct LoadedCatalog {
  std::map<std::string, CatalogEntry> datasets;
  std::vector<std::string> incomplete;  // ingested but without a synthetic twin
};

absl::StatusOr<LoadedCatalog> LoadCatalog(const std::string& data_dir);

std::map<std::string, DatasetPair> DatasetPairs(const LoadedCatalog& catalog);

}  // namespace vserver

#endif  // VSERVER_CATALOG_H_
