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

// The proposal lifecycle: submission, reviewer report with a confidential
// dry run, decisions (approve / reject / adjust), and gated execution that
// debits the ledger before any release exists.

#ifndef VSERVER_WORKFLOW_H_
#define VSERVER_WORKFLOW_H_

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "absl/status/statusor.h"
#include "vserver/codec.h"
#include "vserver/domain.h"
#include "vserver/ledger.h"
#include "vserver/random.h"
#include "vserver/release.h"
#include "vserver/translation.h"

namespace vserver {

enum class ProposalState {
  kDraft,
  kSubmitted,
  kUnderReview,
  kChangesRequested,
  kApproved,
  kRejected,
  kExecuted,
  kReleased,
  kWithdrawn,
};

const char* ProposalStateName(ProposalState state);
std::optional<ProposalState> ParseProposalState(std::string_view name);
bool IsLegalTransition(ProposalState from, ProposalState to);

struct ProposedQuery {
  Query query;
  AccuracySpec spec;
  bool operator==(const ProposedQuery&) const = default;
};

// An immutable snapshot of what the researcher submitted.
struct Revision {
  int number = 1;
  std::vector<ProposedQuery> queries;
  std::string justification;
  std::string planned_outputs;
  std::int64_t submitted_ms = 0;
  bool operator==(const Revision&) const = default;
};

struct HistoryEvent {
  ProposalState from = ProposalState::kDraft;
  ProposalState to = ProposalState::kDraft;
  std::int64_t timestamp_ms = 0;
  std::string actor;
  int revision = 0;
  bool operator==(const HistoryEvent&) const = default;
};

// One proposal per project; proposal_id is the project id.
struct Proposal {
  std::string proposal_id;
  std::string dataset_id;
  std::string researcher;
  std::string title;
  ProposalState state = ProposalState::kDraft;
  std::uint64_t version = 0;  // bumped by every change
  std::vector<Revision> revisions;
  // Set while ChangesRequested: the reviewer's relaxed specs and their cost.
  std::vector<AccuracySpec> adjusted_specs;
  std::vector<TranslationResult> adjusted_translations;
  std::string reviewer_note;
  std::vector<HistoryEvent> history;
  bool operator==(const Proposal&) const = default;
};

enum class FindingKind {
  kEmptySubset,
  kDegenerateDenominator,
  kRankDeficient,
  kTranslationInfeasible,
  kExecutionError,
};

// Reviewer-facing phrase for a finding.
const char* FindingText(FindingKind kind);

struct Finding {
  FindingKind kind = FindingKind::kEmptySubset;
  std::string detail;
  bool operator==(const Finding&) const = default;
};

struct QueryAssessment {
  ProposedQuery proposed;
  TranslationResult translation;
  std::vector<Finding> findings;
  bool operator==(const QueryAssessment&) const = default;
};

// Reviewer-only. Never serialized into a researcher-visible payload.
struct ReviewReport {
  std::string proposal_id;
  int revision = 0;
  std::string dataset_id;
  std::string researcher;
  std::string title;
  std::string justification;
  std::string planned_outputs;
  std::vector<QueryAssessment> queries;
  double total_epsilon = 0.0;  // over feasible queries
  bool all_feasible = true;
  double dataset_spent = 0.0;  // committed on this dataset before the proposal
  double advisory_threshold = 0.0;
  bool advisory_exceeded = false;
  std::int64_t compiled_ms = 0;
  bool operator==(const ReviewReport&) const = default;
};

enum class DecisionKind { kApprove, kReject, kAdjust };

const char* DecisionKindName(DecisionKind kind);
std::optional<DecisionKind> ParseDecisionKind(std::string_view name);

struct Decision {
  DecisionKind kind = DecisionKind::kApprove;
  std::vector<AccuracySpec> adjusted_specs;  // adjust only, one per query
  std::string note;                          // researcher-visible
};

// Adjustments may only raise alpha and/or beta, and must change something.
absl::Status ValidateAdjustment(const std::vector<AccuracySpec>& current,
                                const std::vector<AccuracySpec>& adjusted);

struct DatasetPair {
  std::shared_ptr<const Dataset> confidential;
  PublicDataset synthetic;
};

struct WorkflowOptions {
  std::string directory;  // empty keeps proposals in memory
  bool sync = true;
  Clock clock = SystemClock();
  TranslationOptions translation;
  std::uint64_t translation_seed = 0x5eed;
  std::map<std::string, double> advisory_threshold;  // per dataset
  double default_advisory_threshold = 1.0;
  bool disclose_epsilon = true;
  std::size_t bootstrap_replicates = 10000;
  // Called at named points of Execute; lets tests simulate crashes.
  std::function<void(std::string_view)> fault_hook;
};

Json ProposalToJson(const Proposal& p);
absl::StatusOr<Proposal> ProposalFromJson(const Json& j);
// What a researcher may see: no reviewer-side data, epsilon only if disclosed.
Json ProposalToResearcherJson(const Proposal& p, bool disclose_epsilon);
Json ReviewReportToJson(const ReviewReport& r);
absl::StatusOr<ReviewReport> ReviewReportFromJson(const Json& j);
std::string RenderReviewReport(const ReviewReport& r);

class Workflow {
 public:
  // `ledger` must outlive the workflow. Proposals found on disk are loaded.
  static absl::StatusOr<std::unique_ptr<Workflow>> Open(
      WorkflowOptions options, Ledger* ledger,
      std::map<std::string, DatasetPair> datasets);

  absl::StatusOr<Proposal> CreateProposal(const std::string& researcher,
                                          const std::string& title,
                                          const std::string& dataset_id);
  absl::StatusOr<Proposal> Get(const std::string& id) const;
  std::vector<Proposal> List() const;
  // Proposals waiting for a reviewer (Submitted or UnderReview).
  std::vector<Proposal> Queue() const;

  // `expected_version`, when given, must match or the call fails with Aborted.
  absl::StatusOr<Proposal> Submit(const std::string& id, const std::string& actor,
                                  std::vector<ProposedQuery> queries,
                                  std::string justification,
                                  std::string planned_outputs,
                                  std::optional<std::uint64_t> expected_version = {});
  absl::StatusOr<ReviewReport> CompileReport(const std::string& id,
                                             const std::string& actor);
  absl::StatusOr<ReviewReport> GetReport(const std::string& id) const;
  absl::StatusOr<Proposal> Decide(const std::string& id, const std::string& actor,
                                  const Decision& decision,
                                  std::optional<std::uint64_t> expected_version = {});
  absl::StatusOr<Proposal> RespondAdjustment(
      const std::string& id, const std::string& actor, bool accept,
      std::optional<std::uint64_t> expected_version = {});
  absl::StatusOr<Release> Execute(const std::string& id, const std::string& actor,
                                  RandomSource& rng);
  absl::StatusOr<Release> GetRelease(const std::string& id) const;

  // Repairs state after a crash: voids dangling reservations and finishes
  // executions whose budget was already committed. Returns repairs made.
  absl::StatusOr<std::size_t> Recover();

  const WorkflowOptions& options() const { return options_; }
  Ledger& ledger() { return *ledger_; }
  const std::map<std::string, DatasetPair>& datasets() const { return datasets_; }

 private:
  struct Slot {
    std::mutex mu;  // serializes transitions of one proposal
    Proposal proposal;
    std::optional<ReviewReport> report;
    std::optional<Release> release;
  };

  Workflow(WorkflowOptions options, Ledger* ledger,
           std::map<std::string, DatasetPair> datasets)
      : options_(std::move(options)),
        ledger_(ledger),
        datasets_(std::move(datasets)) {}

  absl::Status Load();
  absl::StatusOr<std::shared_ptr<Slot>> FindSlot(const std::string& id) const;
  absl::Status Transition(Slot& slot, ProposalState to, const std::string& actor);
  absl::Status Persist(const Proposal& p);
  absl::Status PersistReport(const ReviewReport& r);
  absl::Status PersistRelease(const Release& r);
  std::string PathFor(const char* kind, const std::string& id) const;
  std::vector<TranslationResult> TranslateAll(const Proposal& p,
                                              const std::vector<ProposedQuery>& qs);
  absl::StatusOr<Release> FinishExecution(Slot& slot, const Json& pending,
                                          const std::string& actor);
  void Fault(std::string_view point) const;

  WorkflowOptions options_;
  Ledger* ledger_;
  std::map<std::string, DatasetPair> datasets_;
  mutable std::shared_mutex mu_;  // guards slots_
  std::map<std::string, std::shared_ptr<Slot>> slots_;
};

}  // namespace vserver

#endif  // VSERVER_WORKFLOW_H_
