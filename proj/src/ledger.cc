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

#include "vserver/ledger.h"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <set>

#include <openssl/evp.h>
#include <openssl/rand.h>

#include "absl/strings/str_cat.h"
#include "json.hpp"
#include "vserver/domain.h"
#include "vserver/fileutil.h"
#include "vserver/numeric.h"

namespace vserver {

using nlohmann::json;

namespace {

const std::string kGenesis(64, '0');

json EntryBody(const LedgerEntry& e) {
  return json{{"entry_id", e.entry_id},     {"timestamp_ms", e.timestamp_ms},
              {"project_id", e.project_id}, {"dataset_id", e.dataset_id},
              {"query_id", e.query_id},     {"epsilon", e.epsilon},
              {"phase", LedgerPhaseName(e.phase)}, {"prev", e.prev_digest}};
}

absl::StatusOr<LedgerPhase> ParsePhase(const std::string& s) {
  for (LedgerPhase p :
       {LedgerPhase::kReserved, LedgerPhase::kCommitted, LedgerPhase::kVoid}) {
    if (s == LedgerPhaseName(p)) return p;
  }
  return absl::DataLossError(absl::StrCat("unknown phase '", s, "'"));
}

absl::StatusOr<LedgerEntry> EntryFromJson(const json& j) {
  try {
    LedgerEntry e;
    e.entry_id = j.at("entry_id").get<std::uint64_t>();
    e.timestamp_ms = j.at("timestamp_ms").get<std::int64_t>();
    e.project_id = j.at("project_id").get<std::string>();
    e.dataset_id = j.at("dataset_id").get<std::string>();
    e.query_id = j.at("query_id").get<std::string>();
    e.epsilon = j.at("epsilon").get<double>();
    absl::StatusOr<LedgerPhase> phase = ParsePhase(j.at("phase").get<std::string>());
    if (!phase.ok()) return phase.status();
    e.phase = *phase;
    e.prev_digest = j.at("prev").get<std::string>();
    e.digest = j.at("digest").get<std::string>();
    return e;
  } catch (const json::exception& ex) {
    return absl::DataLossError(absl::StrCat("bad ledger entry: ", ex.what()));
  }
}

std::vector<std::string_view> SplitLines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    const std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  return lines;
}

std::string RandomProjectId() {
  unsigned char bytes[8];
  RAND_bytes(bytes, sizeof(bytes));
  static const char* kHex = "0123456789abcdef";
  std::string id = "p-";
  for (unsigned char b : bytes) {
    id.push_back(kHex[b >> 4]);
    id.push_back(kHex[b & 15]);
  }
  return id;
}

bool IsBlank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

Clock SystemClock() {
  return [] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
  };
}

std::string Sha256Hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr);
  static const char* kHex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 15]);
  }
  return out;
}

const char* LedgerPhaseName(LedgerPhase phase) {
  switch (phase) {
    case LedgerPhase::kReserved: return "reserved";
    case LedgerPhase::kCommitted: return "committed";
    case LedgerPhase::kVoid: return "void";
  }
  return "?";
}

LedgerVerification VerifyLedgerText(std::string_view text) {
  LedgerVerification v;
  std::string prev = kGenesis;
  std::uint64_t expected_id = 1;
  const std::vector<std::string_view> lines = SplitLines(text);
  auto fail = [&](std::size_t line, std::string message) {
    v.ok = false;
    v.break_line = line;
    v.message = absl::StrCat("digest chain broken at line ", line, ": ", message);
    return v;
  };
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    if (i + 1 == lines.size() && !text.empty() && text.back() != '\n') {
      return fail(line_no, "incomplete final line");
    }
    json j = json::parse(lines[i], nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("digest") ||
        !j["digest"].is_string()) {
      return fail(line_no, "unparsable entry");
    }
    const std::string digest = j["digest"].get<std::string>();
    j.erase("digest");
    if (!j.contains("prev") || j["prev"] != prev) {
      return fail(line_no, "previous-digest mismatch");
    }
    if (Sha256Hex(j.dump()) != digest) return fail(line_no, "digest mismatch");
    if (!j.contains("entry_id") || j["entry_id"] != expected_id) {
      return fail(line_no, "entry ids not consecutive");
    }
    ++expected_id;
    prev = digest;
    ++v.entries;
  }
  return v;
}

absl::StatusOr<LedgerVerification> VerifyLedgerFile(const std::string& path) {
  absl::StatusOr<std::string> text = ReadFile(path);
  if (!text.ok()) return text.status();
  return VerifyLedgerText(*text);
}

absl::StatusOr<std::unique_ptr<Ledger>> Ledger::Open(Options options) {
  std::unique_ptr<Ledger> ledger(new Ledger(std::move(options)));
  if (!ledger->options_.directory.empty()) {
    if (absl::Status s = EnsureDirectory(ledger->options_.directory); !s.ok()) {
      return s;
    }
    if (absl::Status s = ledger->Load(); !s.ok()) return s;
  }
  return ledger;
}

std::string Ledger::ledger_path() const {
  return options_.directory + "/ledger.jsonl";
}

std::string Ledger::projects_path() const {
  return options_.directory + "/projects.jsonl";
}

namespace {

// Drops a torn final line (no terminating newline) left by a crash.
absl::StatusOr<std::string> ReadWithoutTornTail(const std::string& path) {
  if (!FileExists(path)) return std::string();
  absl::StatusOr<std::string> text = ReadFile(path);
  if (!text.ok()) return text.status();
  if (!text->empty() && text->back() != '\n') {
    const std::size_t keep = text->rfind('\n') == std::string::npos
                                 ? 0
                                 : text->rfind('\n') + 1;
    text->resize(keep);
    if (absl::Status s = TruncateFile(path, keep); !s.ok()) return s;
  }
  return text;
}

}  // namespace

absl::Status Ledger::Load() {
  absl::StatusOr<std::string> projects = ReadWithoutTornTail(projects_path());
  if (!projects.ok()) return projects.status();
  for (std::string_view line : SplitLines(*projects)) {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) return absl::DataLossError("corrupt projects file");
    try {
      if (j.at("event") == "open") {
        Project p;
        p.project_id = j.at("project_id").get<std::string>();
        p.researcher = j.at("researcher").get<std::string>();
        p.title = j.at("title").get<std::string>();
        p.dataset_id = j.at("dataset_id").get<std::string>();
        p.created_ms = j.at("created_ms").get<std::int64_t>();
        p.status = j.at("status").get<std::string>();
        projects_[p.project_id] = p;
      } else {
        projects_.at(j.at("project_id").get<std::string>()).status =
            j.at("status").get<std::string>();
      }
    } catch (const std::exception& ex) {
      return absl::DataLossError(absl::StrCat("corrupt projects file: ", ex.what()));
    }
  }

  absl::StatusOr<std::string> text = ReadWithoutTornTail(ledger_path());
  if (!text.ok()) return text.status();
  const LedgerVerification v = VerifyLedgerText(*text);
  if (!v.ok) return absl::DataLossError(v.message);
  for (std::string_view line : SplitLines(*text)) {
    absl::StatusOr<LedgerEntry> entry = EntryFromJson(json::parse(line));
    if (!entry.ok()) return entry.status();
    latest_[{entry->project_id, entry->query_id}] = entries_.size();
    entries_.push_back(*std::move(entry));
  }
  return absl::OkStatus();
}

absl::Status Ledger::AppendEntriesLocked(std::vector<LedgerEntry>& entries) {
  std::string prev = entries_.empty() ? kGenesis : entries_.back().digest;
  std::uint64_t next_id = entries_.size() + 1;
  const std::int64_t now = options_.clock();
  std::string text;
  for (LedgerEntry& e : entries) {
    e.entry_id = next_id++;
    e.timestamp_ms = now;
    e.prev_digest = prev;
    json body = EntryBody(e);
    e.digest = Sha256Hex(body.dump());
    body["digest"] = e.digest;
    text += body.dump();
    text += '\n';
    prev = e.digest;
  }
  if (!options_.directory.empty()) {
    if (absl::Status s = AppendToFile(ledger_path(), text, options_.sync); !s.ok()) {
      return s;
    }
  }
  for (const LedgerEntry& e : entries) {
    latest_[{e.project_id, e.query_id}] = entries_.size();
    entries_.push_back(e);
  }
  return absl::OkStatus();
}

absl::Status Ledger::AppendProjectEventLocked(const std::string& line) {
  if (options_.directory.empty()) return absl::OkStatus();
  return AppendToFile(projects_path(), line + "\n", options_.sync);
}

absl::StatusOr<Project> Ledger::OpenProject(const std::string& researcher,
                                            const std::string& title,
                                            const std::string& dataset_id) {
  if (IsBlank(researcher)) return absl::InvalidArgumentError("researcher identity required");
  if (IsBlank(title)) return absl::InvalidArgumentError("project title required");
  if (!IsIdentifier(dataset_id)) return absl::InvalidArgumentError("bad dataset id");
  std::unique_lock lock(mu_);
  Project p;
  for (int attempt = 0; attempt < 16; ++attempt) {
    p.project_id = RandomProjectId();
    if (!projects_.count(p.project_id)) break;
    p.project_id.clear();
  }
  if (p.project_id.empty()) return absl::InternalError("could not allocate a project id");
  p.researcher = researcher;
  p.title = title;
  p.dataset_id = dataset_id;
  p.created_ms = options_.clock();
  p.status = "Draft";
  const json event{{"event", "open"},          {"project_id", p.project_id},
                   {"researcher", p.researcher}, {"title", p.title},
                   {"dataset_id", p.dataset_id}, {"created_ms", p.created_ms},
                   {"status", p.status}};
  if (absl::Status s = AppendProjectEventLocked(event.dump()); !s.ok()) return s;
  projects_[p.project_id] = p;
  return p;
}

absl::StatusOr<Project> Ledger::GetProject(const std::string& project_id) const {
  std::shared_lock lock(mu_);
  auto it = projects_.find(project_id);
  if (it == projects_.end()) {
    return absl::NotFoundError(absl::StrCat("unknown project '", project_id, "'"));
  }
  return it->second;
}

std::vector<Project> Ledger::Projects() const {
  std::shared_lock lock(mu_);
  std::vector<Project> out;
  for (const auto& [id, p] : projects_) out.push_back(p);
  return out;
}

absl::Status Ledger::SetProjectStatus(const std::string& project_id,
                                      const std::string& status) {
  std::unique_lock lock(mu_);
  auto it = projects_.find(project_id);
  if (it == projects_.end()) {
    return absl::NotFoundError(absl::StrCat("unknown project '", project_id, "'"));
  }
  if (it->second.status == status) return absl::OkStatus();
  const json event{{"event", "status"}, {"project_id", project_id}, {"status", status}};
  if (absl::Status s = AppendProjectEventLocked(event.dump()); !s.ok()) return s;
  it->second.status = status;
  return absl::OkStatus();
}

const LedgerEntry* Ledger::LastEntryLocked(const std::string& project_id,
                                           const std::string& query_id) const {
  auto it = latest_.find({project_id, query_id});
  return it == latest_.end() ? nullptr : &entries_[it->second];
}

absl::StatusOr<std::vector<LedgerEntry>> Ledger::Reserve(
    const std::string& project_id, const std::vector<QueryCost>& costs) {
  std::unique_lock lock(mu_);
  auto project = projects_.find(project_id);
  if (project == projects_.end()) {
    return absl::NotFoundError(absl::StrCat("unknown project '", project_id, "'"));
  }
  if (project->second.status != "Approved") {
    return absl::FailedPreconditionError(
        absl::StrCat("project '", project_id, "' is ", project->second.status,
                     ", not Approved"));
  }
  if (costs.empty()) return absl::InvalidArgumentError("nothing to reserve");
  std::set<std::string> seen;
  std::vector<LedgerEntry> entries;
  for (const QueryCost& c : costs) {
    if (!(c.epsilon > 0.0) || !std::isfinite(c.epsilon)) {
      return absl::InvalidArgumentError(
          absl::StrCat("query '", c.query_id, "': epsilon must be positive"));
    }
    if (!seen.insert(c.query_id).second) {
      return absl::InvalidArgumentError(
          absl::StrCat("query '", c.query_id, "' listed twice"));
    }
    const LedgerEntry* last = LastEntryLocked(project_id, c.query_id);
    if (last != nullptr && last->phase != LedgerPhase::kVoid) {
      return absl::AlreadyExistsError(absl::StrCat(
          "query '", c.query_id, "' already ", LedgerPhaseName(last->phase)));
    }
    LedgerEntry e;
    e.project_id = project_id;
    e.dataset_id = project->second.dataset_id;
    e.query_id = c.query_id;
    e.epsilon = c.epsilon;
    e.phase = LedgerPhase::kReserved;
    entries.push_back(std::move(e));
  }
  if (absl::Status s = AppendEntriesLocked(entries); !s.ok()) return s;
  return entries;
}

absl::StatusOr<std::vector<LedgerEntry>> Ledger::TransitionLocked(
    const std::string& project_id, const std::vector<std::string>& query_ids,
    LedgerPhase to) {
  std::vector<LedgerEntry> entries;
  std::set<std::string> seen;
  for (const std::string& q : query_ids) {
    const LedgerEntry* last = LastEntryLocked(project_id, q);
    if (last == nullptr || last->phase != LedgerPhase::kReserved ||
        !seen.insert(q).second) {
      return absl::FailedPreconditionError(
          absl::StrCat("query '", q, "' has no live reservation"));
    }
    LedgerEntry e = *last;
    e.phase = to;
    entries.push_back(std::move(e));
  }
  if (absl::Status s = AppendEntriesLocked(entries); !s.ok()) return s;
  return entries;
}

absl::StatusOr<std::vector<LedgerEntry>> Ledger::Commit(
    const std::string& project_id, const std::vector<std::string>& query_ids) {
  std::unique_lock lock(mu_);
  return TransitionLocked(project_id, query_ids, LedgerPhase::kCommitted);
}

absl::StatusOr<std::vector<LedgerEntry>> Ledger::Void(
    const std::string& project_id, const std::vector<std::string>& query_ids) {
  std::unique_lock lock(mu_);
  return TransitionLocked(project_id, query_ids, LedgerPhase::kVoid);
}

absl::StatusOr<std::vector<LedgerEntry>> Ledger::ReserveAndCommit(
    const std::string& project_id, const std::vector<QueryCost>& costs,
    const std::function<absl::Status()>& execute) {
  absl::StatusOr<std::vector<LedgerEntry>> reserved = Reserve(project_id, costs);
  if (!reserved.ok()) return reserved.status();
  std::vector<std::string> ids;
  for (const QueryCost& c : costs) ids.push_back(c.query_id);
  absl::Status run = execute();
  if (!run.ok()) {
    if (absl::StatusOr<std::vector<LedgerEntry>> v = Void(project_id, ids); !v.ok()) {
      return v.status();
    }
    return run;
  }
  return Commit(project_id, ids);
}

absl::StatusOr<double> Ledger::TotalSpent(const std::string& project_id) const {
  std::shared_lock lock(mu_);
  if (!projects_.count(project_id)) {
    return absl::NotFoundError(absl::StrCat("unknown project '", project_id, "'"));
  }
  ExactSum sum;
  for (const LedgerEntry& e : entries_) {
    if (e.project_id == project_id && e.phase == LedgerPhase::kCommitted) {
      sum.Add(e.epsilon);
    }
  }
  return sum.Value();
}

double Ledger::DatasetSpent(const std::string& dataset_id) const {
  std::shared_lock lock(mu_);
  ExactSum sum;
  for (const LedgerEntry& e : entries_) {
    if (e.dataset_id == dataset_id && e.phase == LedgerPhase::kCommitted) {
      sum.Add(e.epsilon);
    }
  }
  return sum.Value();
}

bool Ledger::IsCommitted(const std::string& project_id,
                         const std::string& query_id) const {
  std::shared_lock lock(mu_);
  const LedgerEntry* last = LastEntryLocked(project_id, query_id);
  return last != nullptr && last->phase == LedgerPhase::kCommitted;
}

std::vector<std::string> Ledger::LiveReservations(
    const std::string& project_id) const {
  std::shared_lock lock(mu_);
  std::vector<std::string> out;
  for (const auto& [key, index] : latest_) {
    if (key.first == project_id && entries_[index].phase == LedgerPhase::kReserved) {
      out.push_back(key.second);
    }
  }
  return out;
}

GlobalReport Ledger::Report() const {
  std::shared_lock lock(mu_);
  std::map<std::string, std::map<std::string, ExactSum>> sums;
  for (const LedgerEntry& e : entries_) {
    if (e.phase == LedgerPhase::kCommitted) sums[e.dataset_id][e.project_id].Add(e.epsilon);
  }
  std::map<std::string, DatasetTotal> datasets;
  ExactSum grand;
  for (const auto& [id, p] : projects_) {
    DatasetTotal& d = datasets[p.dataset_id];
    d.dataset_id = p.dataset_id;
    ProjectTotal t{p.project_id, p.researcher, p.status, 0.0};
    auto ds = sums.find(p.dataset_id);
    if (ds != sums.end()) {
      auto ps = ds->second.find(p.project_id);
      if (ps != ds->second.end()) t.epsilon = ps->second.Value();
    }
    grand.Add(t.epsilon);
    if (p.status == "Approved" || p.status == "Executed" || p.status == "Released") {
      ++d.approved;
    } else if (p.status == "Rejected") {
      ++d.rejected;
    }
    d.projects.push_back(std::move(t));
  }
  GlobalReport report;
  for (auto& [id, d] : datasets) {
    std::vector<double> values;
    for (const ProjectTotal& t : d.projects) values.push_back(t.epsilon);
    d.epsilon = SumExactly(values);
    report.approved += d.approved;
    report.rejected += d.rejected;
    report.datasets.push_back(std::move(d));
  }
  report.grand_total = grand.Value();
  return report;
}

std::vector<LedgerEntry> Ledger::Entries() const {
  std::shared_lock lock(mu_);
  return entries_;
}

absl::StatusOr<std::size_t> Ledger::RecoverDangling(std::chrono::milliseconds age) {
  std::unique_lock lock(mu_);
  const std::int64_t cutoff = options_.clock() - age.count();
  std::vector<LedgerEntry> voids;
  for (const auto& [key, index] : latest_) {
    const LedgerEntry& e = entries_[index];
    if (e.phase == LedgerPhase::kReserved && e.timestamp_ms <= cutoff) {
      LedgerEntry v = e;
      v.phase = LedgerPhase::kVoid;
      voids.push_back(std::move(v));
    }
  }
  if (voids.empty()) return std::size_t{0};
  if (absl::Status s = AppendEntriesLocked(voids); !s.ok()) return s;
  return voids.size();
}

}  // namespace vserver
