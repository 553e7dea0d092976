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

#include "vserver/catalog.h"

#include <filesystem>

#include "absl/strings/str_cat.h"
#include "vserver/codec.h"
#include "vserver/fileutil.h"

namespace vserver {

std::string DatasetDirectory(const std::string& data_dir, const std::string& id) {
  return absl::StrCat(data_dir, "/datasets/", id);
}

absl::StatusOr<IngestStats> IngestDataset(const std::string& data_dir,
                                          const Schema& schema,
                                          std::string_view csv_text) {
  if (absl::Status s = CheckSchema(schema); !s.ok()) return s;
  absl::StatusOr<IngestResult> ingested = IngestCsv(csv_text, schema, true);
  if (!ingested.ok()) return ingested.status();
  const std::string dir = DatasetDirectory(data_dir, schema.dataset_id);
  if (absl::Status s = EnsureDirectory(dir); !s.ok()) return s;
  if (absl::Status s = WriteFileAtomic(dir + "/schema.json", SchemaToJson(schema).dump(2), true);
      !s.ok()) {
    return s;
  }
  if (absl::Status s = WriteFileAtomic(dir + "/confidential.csv",
                                       WriteCsv(ingested->dataset), true);
      !s.ok()) {
    return s;
  }
  return ingested->stats;
}

absl::StatusOr<Schema> ReadSchema(const std::string& data_dir, const std::string& id) {
  if (!IsIdentifier(id)) return absl::InvalidArgumentError("bad dataset id");
  const std::string path = DatasetDirectory(data_dir, id) + "/schema.json";
  if (!FileExists(path)) {
    return absl::NotFoundError(absl::StrCat("dataset '", id, "' is not ingested"));
  }
  absl::StatusOr<std::string> text = ReadFile(path);
  if (!text.ok()) return text.status();
  absl::StatusOr<Json> j = ParseJson(*text);
  if (!j.ok()) return j.status();
  return SchemaFromJson(*j);
}

absl::Status RegisterSynthetic(const std::string& data_dir, const std::string& id,
                               const Dataset& candidate, const SyntheticInfo& info) {
  absl::StatusOr<Schema> schema = ReadSchema(data_dir, id);
  if (!schema.ok()) return schema.status();
  absl::StatusOr<SyntheticRegistration> reg = SyntheticRegistration::Create(
      *schema, candidate, info.provenance, info.seed, info.note);
  if (!reg.ok()) return reg.status();
  const std::string dir = DatasetDirectory(data_dir, id);
  Json meta{{"provenance", SyntheticProvenanceName(info.provenance)}, {"note", info.note}};
  if (info.seed) meta["seed"] = *info.seed;
  if (absl::Status s = WriteFileAtomic(dir + "/synthetic.csv", WriteCsv(candidate), true);
      !s.ok()) {
    return s;
  }
  return WriteFileAtomic(dir + "/synthetic.json", meta.dump(2), true);
}

absl::StatusOr<LoadedCatalog> LoadCatalog(const std::string& data_dir) {
  namespace fs = std::filesystem;
  LoadedCatalog catalog;
  const fs::path root = fs::path(data_dir) / "datasets";
  std::error_code ec;
  if (!fs::is_directory(root, ec)) return catalog;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_directory()) continue;
    const std::string id = entry.path().filename().string();
    absl::StatusOr<Schema> schema = ReadSchema(data_dir, id);
    if (!schema.ok()) return schema.status();
    const std::string dir = entry.path().string();
    if (!FileExists(dir + "/synthetic.csv") || !FileExists(dir + "/synthetic.json")) {
      catalog.incomplete.push_back(id);
      continue;
    }
    absl::StatusOr<std::string> conf_text = ReadFile(dir + "/confidential.csv");
    if (!conf_text.ok()) return conf_text.status();
    absl::StatusOr<IngestResult> conf = IngestCsv(*conf_text, *schema, true);
    if (!conf.ok()) {
      return absl::DataLossError(
          absl::StrCat("dataset '", id, "': confidential store unreadable: ",
                       conf.status().message()));
    }
    absl::StatusOr<std::string> syn_text = ReadFile(dir + "/synthetic.csv");
    if (!syn_text.ok()) return syn_text.status();
    absl::StatusOr<Dataset> syn = ParseSyntheticCsv(*schema, *syn_text);
    if (!syn.ok()) {
      return absl::DataLossError(absl::StrCat("dataset '", id, "': ", syn.status().message()));
    }
    absl::StatusOr<std::string> meta_text = ReadFile(dir + "/synthetic.json");
    if (!meta_text.ok()) return meta_text.status();
    absl::StatusOr<Json> meta = ParseJson(*meta_text);
    if (!meta.ok()) return meta.status();
    SyntheticInfo info;
    auto provenance = ParseSyntheticProvenance(meta->value("provenance", ""));
    if (!provenance) return absl::DataLossError(absl::StrCat("dataset '", id, "': bad provenance"));
    info.provenance = *provenance;
    if (meta->contains("seed")) info.seed = (*meta)["seed"].get<std::uint64_t>();
    info.note = meta->value("note", "");
    absl::StatusOr<PublicDataset> pub = PublicDataset::Wrap(*std::move(syn));
    if (!pub.ok()) return pub.status();
    catalog.datasets.emplace(
        id, CatalogEntry{*schema,
                         DatasetPair{std::make_shared<const Dataset>(std::move(conf->dataset)),
                                     *std::move(pub)},
                         info});
  }
  return catalog;
}

std::map<std::string, DatasetPair> DatasetPairs(const LoadedCatalog& catalog) {
  std::map<std::string, DatasetPair> out;
  for (const auto& [id, entry] : catalog.datasets) out.emplace(id, entry.data);
  return out;
}

}  // namespace vserver
