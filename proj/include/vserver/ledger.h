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

// Per-project privacy accounting. Every budget event is one line of an
// append-only JSON-lines file; each line carries the SHA-256 digest of its
// predecessor so any rewrite of history breaks the chain. Debits go through
// two phases: a reservation before a mechanism runs, then a commit (or a
// void on failure). Only committed epsilon counts toward totals, and totals
// are basic sequential composition: a plain sum.

#ifndef VSERVER_LEDGER_H_
#define VSERVER_LEDGER_H_

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <shared_mutex>
#include <string>
#include <vector>

#include "absl/status/statusor.h"

namespace vserver {

using Clock = std::function<std::int64_t()>;  // milliseconds since epoch

Clock SystemClock();

std::string Sha256Hex(std::string_view data);

enum class LedgerPhase { kReserved, kCommitted, kVoid };

const char* LedgerPhaseName(LedgerPhase phase);

struct LedgerEntry {
  std::uint64_t entry_id = 0;
  std::int64_t timestamp_ms = 0;
  std::string project_id;
  std::string dataset_id;
  std::string query_id;
  double epsilon = 0.0;
  LedgerPhase phase = LedgerPhase::kReserved;
  std::string prev_digest;
  std::string digest;

  bool operator==(const LedgerEntry&) const = default;
};

struct Project {
  std::string project_id;
  std::string researcher;
  std::string title;
  std::string dataset_id;
  std::int64_t created_ms = 0;
  std::string status = "Draft";  // mirror of the proposal state

  bool operator==(const Project&) const = default;
};

struct QueryCost {
  std::string query_id;
  double epsilon = 0.0;
};

struct ProjectTotal {
  std::string project_id;
  std::string researcher;
  std::string status;
  double epsilon = 0.0;
};

struct DatasetTotal {
  std::string dataset_id;
  std::vector<ProjectTotal> projects;  // sorted by project_id
  double epsilon = 0.0;
  std::size_t approved = 0;
  std::size_t rejected = 0;
};

struct GlobalReport {
  std::vector<DatasetTotal> datasets;  // sorted by dataset_id
  double grand_total = 0.0;
  std::size_t approved = 0;
  std::size_t rejected = 0;
};

struct LedgerVerification {
  bool ok = true;
  std::size_t entries = 0;
  std::size_t break_line = 0;  // 1-based; 0 when ok
  std::string message;
};

// Checks the digest chain of a serialized ledger without loading it.
LedgerVerification VerifyLedgerText(std::string_view text);
absl::StatusOr<LedgerVerification> VerifyLedgerFile(const std::string& path);

class Ledger {
 public:
  struct Options {
    std::string directory;  // empty keeps everything in memory
    bool sync = true;       // fsync after every append
    Clock clock = SystemClock();
  };

  // Loads and verifies existing files. A torn final line left by a crash is
  // discarded; any other chain break fails with DataLoss.
  static absl::StatusOr<std::unique_ptr<Ledger>> Open(Options options);

  absl::StatusOr<Project> OpenProject(const std::string& researcher,
                                      const std::string& title,
                                      const std::string& dataset_id);
  absl::StatusOr<Project> GetProject(const std::string& project_id) const;
  std::vector<Project> Projects() const;
  absl::Status SetProjectStatus(const std::string& project_id,
                                const std::string& status);

  // Appends one reserved entry per query. Requires the project status to be
  // Approved, and rejects (leaving the ledger unchanged) any query that
  // already holds a live reservation or a commitment.
  absl::StatusOr<std::vector<LedgerEntry>> Reserve(
      const std::string& project_id, const std::vector<QueryCost>& costs);
  // Flip live reservations to committed / void by appending new entries.
  absl::StatusOr<std::vector<LedgerEntry>> Commit(
      const std::string& project_id, const std::vector<std::string>& query_ids);
  absl::StatusOr<std::vector<LedgerEntry>> Void(
      const std::string& project_id, const std::vector<std::string>& query_ids);

  // Reserve, run `execute`, then commit on success or void on failure.
  absl::StatusOr<std::vector<LedgerEntry>> ReserveAndCommit(
      const std::string& project_id, const std::vector<QueryCost>& costs,
      const std::function<absl::Status()>& execute);

  absl::StatusOr<double> TotalSpent(const std::string& project_id) const;
  double DatasetSpent(const std::string& dataset_id) const;
  bool IsCommitted(const std::string& project_id,
                   const std::string& query_id) const;
  // Live (reserved, not yet committed or voided) query ids of a project.
  std::vector<std::string> LiveReservations(const std::string& project_id) const;

  GlobalReport Report() const;
  std::vector<LedgerEntry> Entries() const;

  // Voids every live reservation older than `age`. Returns how many.
  absl::StatusOr<std::size_t> RecoverDangling(std::chrono::milliseconds age);

  std::string ledger_path() const;

 private:
  explicit Ledger(Options options) : options_(std::move(options)) {}
  absl::Status Load();
  absl::Status AppendEntriesLocked(std::vector<LedgerEntry>& entries);
  absl::Status AppendProjectEventLocked(const std::string& line);
  absl::StatusOr<std::vector<LedgerEntry>> TransitionLocked(
      const std::string& project_id, const std::vector<std::string>& query_ids,
      LedgerPhase to);
  const LedgerEntry* LastEntryLocked(const std::string& project_id,
                                     const std::string& query_id) const;
  std::string projects_path() const;

  Options options_;
  mutable std::shared_mutex mu_;
  std::vector<LedgerEntry> entries_;
  std::map<std::string, Project> projects_;
  // (project_id, query_id) -> index of the latest entry
  std::map<std::pair<std::string, std::string>, std::size_t> latest_;
};

}  // namespace vserver

#endif  // VSERVER_LEDGER_H_
