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

#include "vserver/workflow.h"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <set>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_join.h"
#include "vserver/csv.h"
#include "vserver/fileutil.h"
#include "vserver/numeric.h"

namespace vserver {

namespace {

constexpr ProposalState kAllStates[] = {
    ProposalState::kDraft,       ProposalState::kSubmitted,
    ProposalState::kUnderReview, ProposalState::kChangesRequested,
    ProposalState::kApproved,    ProposalState::kRejected,
    ProposalState::kExecuted,    ProposalState::kReleased,
    ProposalState::kWithdrawn,
};

bool IsBlank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

absl::Status WrongState(const Proposal& p, const char* operation) {
  return absl::FailedPreconditionError(
      absl::StrCat("cannot ", operation, ": proposal ", p.proposal_id, " is ",
                   ProposalStateName(p.state)));
}

absl::Status CheckVersion(const Proposal& p, std::optional<std::uint64_t> expected) {
  if (expected && *expected != p.version) {
    return absl::AbortedError(absl::StrCat("version conflict: proposal is at version ",
                                           p.version, ", request expected ", *expected));
  }
  return absl::OkStatus();
}

Json RevisionToJson(const Revision& r) {
  Json queries = Json::array();
  for (const ProposedQuery& q : r.queries) {
    queries.push_back(Json{{"query", QueryToJson(q.query)},
                           {"accuracy", AccuracySpecToJson(q.spec)}});
  }
  return Json{{"number", r.number},
              {"queries", queries},
              {"justification", r.justification},
              {"planned_outputs", r.planned_outputs},
              {"submitted_ms", r.submitted_ms}};
}

absl::StatusOr<std::vector<ProposedQuery>> ProposedQueriesFromJson(const Json& j) {
  std::vector<ProposedQuery> out;
  for (const Json& q : j) {
    absl::StatusOr<Query> query = QueryFromJson(q.at("query"));
    if (!query.ok()) return query.status();
    absl::StatusOr<AccuracySpec> spec = AccuracySpecFromJson(q.at("accuracy"));
    if (!spec.ok()) return spec.status();
    out.push_back({*std::move(query), *spec});
  }
  return out;
}

Json HistoryToJson(const std::vector<HistoryEvent>& history) {
  Json out = Json::array();
  for (const HistoryEvent& e : history) {
    out.push_back(Json{{"from", ProposalStateName(e.from)},
                       {"to", ProposalStateName(e.to)},
                       {"timestamp_ms", e.timestamp_ms},
                       {"actor", e.actor},
                       {"revision", e.revision}});
  }
  return out;
}

}  // namespace

const char* ProposalStateName(ProposalState state) {
  switch (state) {
    case ProposalState::kDraft: return "Draft";
    case ProposalState::kSubmitted: return "Submitted";
    case ProposalState::kUnderReview: return "UnderReview";
    case ProposalState::kChangesRequested: return "ChangesRequested";
    case ProposalState::kApproved: return "Approved";
    case ProposalState::kRejected: return "Rejected";
    case ProposalState::kExecuted: return "Executed";
    case ProposalState::kReleased: return "Released";
    case ProposalState::kWithdrawn: return "Withdrawn";
  }
  return "?";
}

std::optional<ProposalState> ParseProposalState(std::string_view name) {
  for (ProposalState s : kAllStates) {
    if (name == ProposalStateName(s)) return s;
  }
  return std::nullopt;
}

bool IsLegalTransition(ProposalState from, ProposalState to) {
  using S = ProposalState;
  switch (from) {
    case S::kDraft: return to == S::kSubmitted;
    case S::kSubmitted: return to == S::kUnderReview;
    case S::kUnderReview:
      return to == S::kApproved || to == S::kRejected || to == S::kChangesRequested;
    case S::kChangesRequested: return to == S::kSubmitted || to == S::kWithdrawn;
    case S::kApproved: return to == S::kExecuted;
    case S::kExecuted: return to == S::kReleased;
    case S::kRejected:
    case S::kReleased:
    case S::kWithdrawn:
      return false;
  }
  return false;
}

const char* FindingText(FindingKind kind) {
  switch (kind) {
    case FindingKind::kEmptySubset: return "empty subset";
    case FindingKind::kDegenerateDenominator: return "degenerate denominator";
    case FindingKind::kRankDeficient: return "rank-deficient OLS";
    case FindingKind::kTranslationInfeasible: return "translation infeasible";
    case FindingKind::kExecutionError: return "dry-run execution error";
  }
  return "?";
}

const char* DecisionKindName(DecisionKind kind) {
  switch (kind) {
    case DecisionKind::kApprove: return "approve";
    case DecisionKind::kReject: return "reject";
    case DecisionKind::kAdjust: return "adjust";
  }
  return "?";
}

std::optional<DecisionKind> ParseDecisionKind(std::string_view name) {
  for (DecisionKind k : {DecisionKind::kApprove, DecisionKind::kReject,
                         DecisionKind::kAdjust}) {
    if (name == DecisionKindName(k)) return k;
  }
  return std::nullopt;
}

absl::Status ValidateAdjustment(const std::vector<AccuracySpec>& current,
                                const std::vector<AccuracySpec>& adjusted) {
  if (adjusted.size() != current.size()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "adjustment must give one spec per query (", current.size(), ")"));
  }
  bool changed = false;
  for (std::size_t i = 0; i < current.size(); ++i) {
    if (absl::Status s = ValidateAccuracySpec(adjusted[i]); !s.ok()) return s;
    if (adjusted[i].alpha < current[i].alpha || adjusted[i].beta < current[i].beta ||
        adjusted[i].target != current[i].target) {
      return absl::InvalidArgumentError(
          absl::StrCat("query ", i + 1, ": tightening not allowed"));
    }
    changed = changed || !(adjusted[i] == current[i]);
  }
  if (!changed) return absl::InvalidArgumentError("adjustment changes nothing");
  return absl::OkStatus();
}

Json ProposalToJson(const Proposal& p) {
  Json revisions = Json::array();
  for (const Revision& r : p.revisions) revisions.push_back(RevisionToJson(r));
  Json adjusted = Json::array();
  for (const AccuracySpec& s : p.adjusted_specs) adjusted.push_back(AccuracySpecToJson(s));
  Json translations = Json::array();
  for (const TranslationResult& t : p.adjusted_translations) {
    translations.push_back(TranslationToJson(t));
  }
  return Json{{"proposal_id", p.proposal_id},
              {"dataset_id", p.dataset_id},
              {"researcher", p.researcher},
              {"title", p.title},
              {"state", ProposalStateName(p.state)},
              {"version", p.version},
              {"revisions", revisions},
              {"adjusted_specs", adjusted},
              {"adjusted_translations", translations},
              {"reviewer_note", p.reviewer_note},
              {"history", HistoryToJson(p.history)}};
}

absl::StatusOr<Proposal> ProposalFromJson(const Json& j) {
  try {
    Proposal p;
    p.proposal_id = j.at("proposal_id").get<std::string>();
    p.dataset_id = j.at("dataset_id").get<std::string>();
    p.researcher = j.at("researcher").get<std::string>();
    p.title = j.at("title").get<std::string>();
    std::optional<ProposalState> state = ParseProposalState(j.at("state").get<std::string>());
    if (!state) return absl::DataLossError("unknown proposal state");
    p.state = *state;
    p.version = j.at("version").get<std::uint64_t>();
    for (const Json& r : j.at("revisions")) {
      Revision rev;
      rev.number = r.at("number").get<int>();
      absl::StatusOr<std::vector<ProposedQuery>> qs = ProposedQueriesFromJson(r.at("queries"));
      if (!qs.ok()) return qs.status();
      rev.queries = *std::move(qs);
      rev.justification = r.at("justification").get<std::string>();
      rev.planned_outputs = r.at("planned_outputs").get<std::string>();
      rev.submitted_ms = r.at("submitted_ms").get<std::int64_t>();
      p.revisions.push_back(std::move(rev));
    }
    for (const Json& s : j.at("adjusted_specs")) {
      absl::StatusOr<AccuracySpec> spec = AccuracySpecFromJson(s);
      if (!spec.ok()) return spec.status();
      p.adjusted_specs.push_back(*spec);
    }
    for (const Json& t : j.at("adjusted_translations")) {
      absl::StatusOr<TranslationResult> tr = TranslationFromJson(t);
      if (!tr.ok()) return tr.status();
      p.adjusted_translations.push_back(*std::move(tr));
    }
    p.reviewer_note = j.at("reviewer_note").get<std::string>();
    for (const Json& e : j.at("history")) {
      auto from = ParseProposalState(e.at("from").get<std::string>());
      auto to = ParseProposalState(e.at("to").get<std::string>());
      if (!from || !to) return absl::DataLossError("unknown state in history");
      p.history.push_back({*from, *to, e.at("timestamp_ms").get<std::int64_t>(),
                           e.at("actor").get<std::string>(), e.at("revision").get<int>()});
    }
    return p;
  } catch (const Json::exception& ex) {
    return absl::DataLossError(absl::StrCat("malformed proposal: ", ex.what()));
  }
}

Json ProposalToResearcherJson(const Proposal& p, bool disclose_epsilon) {
  Json revisions = Json::array();
  for (const Revision& r : p.revisions) revisions.push_back(RevisionToJson(r));
  Json adjusted = Json::array();
  for (std::size_t i = 0; i < p.adjusted_specs.size(); ++i) {
    Json a{{"accuracy", AccuracySpecToJson(p.adjusted_specs[i])}};
    if (i < p.adjusted_translations.size()) {
      a["translation"] = TranslationToJson(p.adjusted_translations[i], disclose_epsilon);
    }
    adjusted.push_back(std::move(a));
  }
  return Json{{"project_id", p.proposal_id},
              {"dataset_id", p.dataset_id},
              {"researcher", p.researcher},
              {"title", p.title},
              {"state", ProposalStateName(p.state)},
              {"version", p.version},
              {"revisions", revisions},
              {"adjustment", adjusted},
              {"reviewer_note", p.reviewer_note},
              {"history", HistoryToJson(p.history)}};
}

Json ReviewReportToJson(const ReviewReport& r) {
  Json queries = Json::array();
  for (const QueryAssessment& a : r.queries) {
    Json findings = Json::array();
    for (const Finding& f : a.findings) {
      findings.push_back(Json{{"kind", FindingText(f.kind)}, {"detail", f.detail}});
    }
    queries.push_back(Json{{"query", QueryToJson(a.proposed.query)},
                           {"accuracy", AccuracySpecToJson(a.proposed.spec)},
                           {"translation", TranslationToJson(a.translation)},
                           {"findings", findings}});
  }
  return Json{{"proposal_id", r.proposal_id},
              {"revision", r.revision},
              {"dataset_id", r.dataset_id},
              {"researcher", r.researcher},
              {"title", r.title},
              {"justification", r.justification},
              {"planned_outputs", r.planned_outputs},
              {"queries", queries},
              {"total_epsilon", r.total_epsilon},
              {"all_feasible", r.all_feasible},
              {"dataset_spent", r.dataset_spent},
              {"advisory_threshold", r.advisory_threshold},
              {"advisory_exceeded", r.advisory_exceeded},
              {"compiled_ms", r.compiled_ms}};
}

absl::StatusOr<ReviewReport> ReviewReportFromJson(const Json& j) {
  try {
    ReviewReport r;
    r.proposal_id = j.at("proposal_id").get<std::string>();
    r.revision = j.at("revision").get<int>();
    r.dataset_id = j.at("dataset_id").get<std::string>();
    r.researcher = j.at("researcher").get<std::string>();
    r.title = j.at("title").get<std::string>();
    r.justification = j.at("justification").get<std::string>();
    r.planned_outputs = j.at("planned_outputs").get<std::string>();
    for (const Json& q : j.at("queries")) {
      QueryAssessment a;
      absl::StatusOr<Query> query = QueryFromJson(q.at("query"));
      if (!query.ok()) return query.status();
      absl::StatusOr<AccuracySpec> spec = AccuracySpecFromJson(q.at("accuracy"));
      if (!spec.ok()) return spec.status();
      absl::StatusOr<TranslationResult> t = TranslationFromJson(q.at("translation"));
      if (!t.ok()) return t.status();
      a.proposed = {*std::move(query), *spec};
      a.translation = *std::move(t);
      for (const Json& f : q.at("findings")) {
        const std::string text = f.at("kind").get<std::string>();
        Finding finding;
        for (FindingKind k : {FindingKind::kEmptySubset, FindingKind::kDegenerateDenominator,
                              FindingKind::kRankDeficient, FindingKind::kTranslationInfeasible,
                              FindingKind::kExecutionError}) {
          if (text == FindingText(k)) finding.kind = k;
        }
        finding.detail = f.at("detail").get<std::string>();
        a.findings.push_back(std::move(finding));
      }
      r.queries.push_back(std::move(a));
    }
    r.total_epsilon = j.at("total_epsilon").get<double>();
    r.all_feasible = j.at("all_feasible").get<bool>();
    r.dataset_spent = j.at("dataset_spent").get<double>();
    r.advisory_threshold = j.at("advisory_threshold").get<double>();
    r.advisory_exceeded = j.at("advisory_exceeded").get<bool>();
    r.compiled_ms = j.at("compiled_ms").get<std::int64_t>();
    return r;
  } catch (const Json::exception& ex) {
    return absl::DataLossError(absl::StrCat("malformed report: ", ex.what()));
  }
}

std::string RenderReviewReport(const ReviewReport& r) {
  std::string out = absl::StrCat(
      "Review report: proposal ", r.proposal_id, ", revision ", r.revision,
      "\nTitle: ", r.title, "\nResearcher: ", r.researcher, "\nDataset: ",
      r.dataset_id, "\n\nJustification\n", r.justification,
      "\n\nPlanned outputs\n", r.planned_outputs, "\n\nQueries\n");
  for (const QueryAssessment& a : r.queries) {
    absl::StrAppend(&out, "  ", a.proposed.query.query_id, "  ",
                    DescribeQuery(a.proposed.query), "\n    accuracy: within ",
                    FormatDouble(a.proposed.spec.alpha), " with probability ",
                    FormatDouble(1 - a.proposed.spec.beta), "\n    epsilon: ");
    if (a.translation.feasible) {
      absl::StrAppend(&out, FormatDouble(a.translation.epsilon), " (",
                      TranslationMethodName(a.translation.method), ")\n");
    } else {
      absl::StrAppend(&out, "infeasible: ", a.translation.message, "\n");
    }
    for (const Finding& f : a.findings) {
      absl::StrAppend(&out, "    finding: ", FindingText(f.kind), " - ", f.detail, "\n");
    }
  }
  absl::StrAppend(&out, "\nTotal proposed epsilon: ", FormatDouble(r.total_epsilon),
                  "\nAlready spent on dataset: ", FormatDouble(r.dataset_spent),
                  "\nAdvisory threshold: ", FormatDouble(r.advisory_threshold),
                  r.advisory_exceeded ? " (exceeded)" : "", "\n");
  return out;
}

absl::StatusOr<std::unique_ptr<Workflow>> Workflow::Open(
    WorkflowOptions options, Ledger* ledger,
    std::map<std::string, DatasetPair> datasets) {
  if (absl::Status s = ValidateTranslationOptions(options.translation); !s.ok()) {
    return s;
  }
  if (!(options.default_advisory_threshold > 0)) {
    return absl::InvalidArgumentError("advisory threshold must be positive");
  }
  for (const auto& [id, t] : options.advisory_threshold) {
    if (!(t > 0)) {
      return absl::InvalidArgumentError(
          absl::StrCat("advisory threshold for '", id, "' must be positive"));
    }
  }
  std::unique_ptr<Workflow> wf(
      new Workflow(std::move(options), ledger, std::move(datasets)));
  if (!wf->options_.directory.empty()) {
    if (absl::Status s = wf->Load(); !s.ok()) return s;
  }
  return wf;
}

std::string Workflow::PathFor(const char* kind, const std::string& id) const {
  return absl::StrCat(options_.directory, "/", kind, "/", id, ".json");
}

void Workflow::Fault(std::string_view point) const {
  if (options_.fault_hook) options_.fault_hook(point);
}

absl::Status Workflow::Load() {
  for (const char* kind : {"proposals", "reports", "releases", "pending"}) {
    if (absl::Status s = EnsureDirectory(absl::StrCat(options_.directory, "/", kind));
        !s.ok()) {
      return s;
    }
  }
  namespace fs = std::filesystem;
  auto each = [&](const char* kind, auto fn) -> absl::Status {
    for (const auto& entry : fs::directory_iterator(absl::StrCat(options_.directory, "/", kind))) {
      if (entry.path().extension() != ".json") continue;
      absl::StatusOr<std::string> text = ReadFile(entry.path().string());
      if (!text.ok()) return text.status();
      absl::StatusOr<Json> j = ParseJson(*text);
      if (!j.ok()) {
        return absl::DataLossError(absl::StrCat(entry.path().string(), ": not JSON"));
      }
      if (absl::Status s = fn(*j); !s.ok()) return s;
    }
    return absl::OkStatus();
  };
  absl::Status s = each("proposals", [&](const Json& j) -> absl::Status {
    absl::StatusOr<Proposal> p = ProposalFromJson(j);
    if (!p.ok()) return p.status();
    auto slot = std::make_shared<Slot>();
    slot->proposal = *std::move(p);
    slots_[slot->proposal.proposal_id] = slot;
    return absl::OkStatus();
  });
  if (!s.ok()) return s;
  s = each("reports", [&](const Json& j) -> absl::Status {
    absl::StatusOr<ReviewReport> r = ReviewReportFromJson(j);
    if (!r.ok()) return r.status();
    auto it = slots_.find(r->proposal_id);
    if (it != slots_.end()) it->second->report = *std::move(r);
    return absl::OkStatus();
  });
  if (!s.ok()) return s;
  return each("releases", [&](const Json& j) -> absl::Status {
    absl::StatusOr<Release> r = ReleaseFromJson(j);
    if (!r.ok()) return r.status();
    auto it = slots_.find(r->project_id);
    if (it != slots_.end()) it->second->release = *std::move(r);
    return absl::OkStatus();
  });
}

absl::Status Workflow::Persist(const Proposal& p) {
  if (options_.directory.empty()) return absl::OkStatus();
  return WriteFileAtomic(PathFor("proposals", p.proposal_id), ProposalToJson(p).dump(2),
                         options_.sync);
}

absl::Status Workflow::PersistReport(const ReviewReport& r) {
  if (options_.directory.empty()) return absl::OkStatus();
  return WriteFileAtomic(PathFor("reports", r.proposal_id),
                         ReviewReportToJson(r).dump(2), options_.sync);
}

absl::Status Workflow::PersistRelease(const Release& r) {
  if (options_.directory.empty()) return absl::OkStatus();
  return WriteFileAtomic(PathFor("releases", r.project_id), ReleaseToJson(r).dump(2),
                         options_.sync);
}

absl::StatusOr<std::shared_ptr<Workflow::Slot>> Workflow::FindSlot(
    const std::string& id) const {
  std::shared_lock lock(mu_);
  auto it = slots_.find(id);
  if (it == slots_.end()) {
    return absl::NotFoundError(absl::StrCat("unknown proposal '", id, "'"));
  }
  return it->second;
}

// Applies a legal transition, persisting before the in-memory state changes.
absl::Status Workflow::Transition(Slot& slot, ProposalState to,
                                  const std::string& actor) {
  Proposal next = slot.proposal;
  if (!IsLegalTransition(next.state, to)) {
    return absl::FailedPreconditionError(
        absl::StrCat("illegal transition ", ProposalStateName(next.state), " -> ",
                     ProposalStateName(to)));
  }
  next.history.push_back({next.state, to, options_.clock(), actor,
                          next.revisions.empty() ? 0 : next.revisions.back().number});
  next.state = to;
  ++next.version;
  if (absl::Status s = Persist(next); !s.ok()) return s;
  slot.proposal = std::move(next);
  return ledger_->SetProjectStatus(slot.proposal.proposal_id, ProposalStateName(to));
}

absl::StatusOr<Proposal> Workflow::CreateProposal(const std::string& researcher,
                                                  const std::string& title,
                                                  const std::string& dataset_id) {
  if (!datasets_.count(dataset_id)) {
    return absl::NotFoundError(absl::StrCat("unknown dataset '", dataset_id, "'"));
  }
  absl::StatusOr<Project> project = ledger_->OpenProject(researcher, title, dataset_id);
  if (!project.ok()) return project.status();
  auto slot = std::make_shared<Slot>();
  Proposal& p = slot->proposal;
  p.proposal_id = project->project_id;
  p.dataset_id = dataset_id;
  p.researcher = researcher;
  p.title = title;
  p.version = 1;
  if (absl::Status s = Persist(p); !s.ok()) return s;
  std::unique_lock lock(mu_);
  slots_[p.proposal_id] = slot;
  return p;
}

absl::StatusOr<Proposal> Workflow::Get(const std::string& id) const {
  absl::StatusOr<std::shared_ptr<Slot>> slot = FindSlot(id);
  if (!slot.ok()) return slot.status();
  std::lock_guard lock((*slot)->mu);
  return (*slot)->proposal;
}

std::vector<Proposal> Workflow::List() const {
  std::vector<std::shared_ptr<Slot>> slots;
  {
    std::shared_lock lock(mu_);
    for (const auto& [id, slot] : slots_) slots.push_back(slot);
  }
  std::vector<Proposal> out;
  for (const auto& slot : slots) {
    std::lock_guard lock(slot->mu);
    out.push_back(slot->proposal);
  }
  return out;
}

std::vector<Proposal> Workflow::Queue() const {
  std::vector<Proposal> out;
  for (Proposal& p : List()) {
    if (p.state == ProposalState::kSubmitted || p.state == ProposalState::kUnderReview) {
      out.push_back(std::move(p));
    }
  }
  return out;
}

absl::StatusOr<Proposal> Workflow::Submit(const std::string& id, const std::string& actor,
                                          std::vector<ProposedQuery> queries,
                                          std::string justification,
                                          std::string planned_outputs,
                                          std::optional<std::uint64_t> expected_version) {
  absl::StatusOr<std::shared_ptr<Slot>> found = FindSlot(id);
  if (!found.ok()) return found.status();
  Slot& slot = **found;
  std::lock_guard lock(slot.mu);
  Proposal& p = slot.proposal;
  if (actor != p.researcher) {
    return absl::PermissionDeniedError("only the proposal's researcher may submit it");
  }
  if (absl::Status s = CheckVersion(p, expected_version); !s.ok()) return s;
  if (p.state != ProposalState::kDraft) return WrongState(p, "submit");
  if (queries.empty()) return absl::InvalidArgumentError("at least one query required");
  if (IsBlank(justification)) return absl::InvalidArgumentError("justification required");
  const Schema& schema = datasets_.at(p.dataset_id).synthetic.schema();
  std::set<std::string> ids;
  for (const ProposedQuery& q : queries) {
    if (absl::Status s = ValidateQuery(schema, q.query); !s.ok()) return s;
    if (absl::Status s = ValidateAccuracySpec(q.spec); !s.ok()) {
      return absl::InvalidArgumentError(
          absl::StrCat("query ", q.query.query_id, ": ", s.message()));
    }
    if (!ids.insert(q.query.query_id).second) {
      return absl::InvalidArgumentError(
          absl::StrCat("query id '", q.query.query_id, "' used twice"));
    }
  }
  Proposal before = p;
  p.revisions.push_back({1, std::move(queries), std::move(justification),
                         std::move(planned_outputs), options_.clock()});
  if (absl::Status s = Transition(slot, ProposalState::kSubmitted, actor); !s.ok()) {
    p = std::move(before);
    return s;
  }
  return p;
}

std::vector<TranslationResult> Workflow::TranslateAll(
    const Proposal& p, const std::vector<ProposedQuery>& queries) {
  const PublicDataset& synthetic = datasets_.at(p.dataset_id).synthetic;
  std::vector<TranslationResult> out;
  for (const ProposedQuery& q : queries) {
    const std::uint64_t seed = DeriveSeed(
        options_.translation_seed, absl::StrCat(p.proposal_id, ":", q.query.query_id));
    absl::StatusOr<TranslationResult> t =
        Translate(q.query, q.spec, synthetic, options_.translation, seed);
    if (t.ok()) {
      out.push_back(*std::move(t));
    } else {
      TranslationResult failed;
      failed.query_id = q.query.query_id;
      failed.feasible = false;
      failed.message = std::string(t.status().message());
      out.push_back(std::move(failed));
    }
  }
  return out;
}

absl::StatusOr<ReviewReport> Workflow::CompileReport(const std::string& id,
                                                     const std::string& actor) {
  absl::StatusOr<std::shared_ptr<Slot>> found = FindSlot(id);
  if (!found.ok()) return found.status();
  Slot& slot = **found;
  std::lock_guard lock(slot.mu);
  const Proposal& p = slot.proposal;
  if (p.state != ProposalState::kSubmitted) return WrongState(p, "compile report");
  const Revision& rev = p.revisions.back();
  const DatasetPair& data = datasets_.at(p.dataset_id);

  ReviewReport report;
  report.proposal_id = p.proposal_id;
  report.revision = rev.number;
  report.dataset_id = p.dataset_id;
  report.researcher = p.researcher;
  report.title = p.title;
  report.justification = rev.justification;
  report.planned_outputs = rev.planned_outputs;
  report.compiled_ms = options_.clock();

  std::vector<TranslationResult> translations = TranslateAll(p, rev.queries);
  ExactSum total;
  for (std::size_t i = 0; i < rev.queries.size(); ++i) {
    QueryAssessment a;
    a.proposed = rev.queries[i];
    a.translation = std::move(translations[i]);
    if (a.translation.feasible) {
      total.Add(a.translation.epsilon);
    } else {
      report.all_feasible = false;
      a.findings.push_back({FindingKind::kTranslationInfeasible, a.translation.message});
    }
    // Noise-off dry run on the confidential data, for the reviewer only.
    absl::StatusOr<ExactStatistics> stats = ComputeStatistics(
        *data.confidential, a.proposed.query, options_.translation.mechanism);
    if (!stats.ok()) {
      a.findings.push_back({FindingKind::kExecutionError, std::string(stats.status().message())});
    } else {
      const MechanismResult exact = ExactResult(*stats, options_.translation.mechanism);
      if (stats->count == 0) {
        a.findings.push_back({FindingKind::kEmptySubset,
                              "the filter matches no confidential records"});
      }
      if (exact.noise_model.denominator_clamped) {
        a.findings.push_back({FindingKind::kDegenerateDenominator,
                              "the denominator is below one record"});
      }
      if (exact.noise_model.rank_deficient) {
        a.findings.push_back({FindingKind::kRankDeficient,
                              "the design matrix is singular on the confidential data"});
      }
    }
    report.queries.push_back(std::move(a));
  }
  report.total_epsilon = total.Value();
  report.dataset_spent = ledger_->DatasetSpent(p.dataset_id);
  auto threshold = options_.advisory_threshold.find(p.dataset_id);
  report.advisory_threshold = threshold == options_.advisory_threshold.end()
                                  ? options_.default_advisory_threshold
                                  : threshold->second;
  report.advisory_exceeded =
      SumExactly(std::vector<double>{report.dataset_spent, report.total_epsilon}) >
      report.advisory_threshold;

  if (absl::Status s = PersistReport(report); !s.ok()) return s;
  slot.report = report;
  if (absl::Status s = Transition(slot, ProposalState::kUnderReview, actor); !s.ok()) {
    return s;
  }
  return report;
}

absl::StatusOr<ReviewReport> Workflow::GetReport(const std::string& id) const {
  absl::StatusOr<std::shared_ptr<Slot>> found = FindSlot(id);
  if (!found.ok()) return found.status();
  std::lock_guard lock((*found)->mu);
  if (!(*found)->report) {
    return absl::NotFoundError(absl::StrCat("no review report for '", id, "'"));
  }
  return *(*found)->report;
}

absl::StatusOr<Proposal> Workflow::Decide(const std::string& id, const std::string& actor,
                                          const Decision& decision,
                                          std::optional<std::uint64_t> expected_version) {
  absl::StatusOr<std::shared_ptr<Slot>> found = FindSlot(id);
  if (!found.ok()) return found.status();
  Slot& slot = **found;
  std::lock_guard lock(slot.mu);
  Proposal& p = slot.proposal;
  if (actor == p.researcher) {
    return absl::PermissionDeniedError("researchers cannot review their own proposal");
  }
  if (absl::Status s = CheckVersion(p, expected_version); !s.ok()) return s;
  if (p.state != ProposalState::kUnderReview || !slot.report ||
      slot.report->revision != p.revisions.back().number) {
    return WrongState(p, "decide");
  }
  Proposal before = p;
  ProposalState to = ProposalState::kRejected;
  switch (decision.kind) {
    case DecisionKind::kApprove:
      if (!slot.report->all_feasible) {
        return absl::FailedPreconditionError(
            "cannot approve: an accuracy target is infeasible; adjust or reject");
      }
      to = ProposalState::kApproved;
      break;
    case DecisionKind::kReject:
      break;
    case DecisionKind::kAdjust: {
      std::vector<AccuracySpec> current;
      for (const ProposedQuery& q : p.revisions.back().queries) current.push_back(q.spec);
      if (absl::Status s = ValidateAdjustment(current, decision.adjusted_specs); !s.ok()) {
        return s;
      }
      std::vector<ProposedQuery> adjusted = p.revisions.back().queries;
      for (std::size_t i = 0; i < adjusted.size(); ++i) {
        adjusted[i].spec = decision.adjusted_specs[i];
      }
      p.adjusted_specs = decision.adjusted_specs;
      p.adjusted_translations = TranslateAll(p, adjusted);
      to = ProposalState::kChangesRequested;
      break;
    }
  }
  p.reviewer_note = decision.note;
  if (absl::Status s = Transition(slot, to, actor); !s.ok()) {
    p = std::move(before);
    return s;
  }
  return p;
}

absl::StatusOr<Proposal> Workflow::RespondAdjustment(
    const std::string& id, const std::string& actor, bool accept,
    std::optional<std::uint64_t> expected_version) {
  absl::StatusOr<std::shared_ptr<Slot>> found = FindSlot(id);
  if (!found.ok()) return found.status();
  Slot& slot = **found;
  std::lock_guard lock(slot.mu);
  Proposal& p = slot.proposal;
  if (actor != p.researcher) {
    return absl::PermissionDeniedError("only the proposal's researcher may respond");
  }
  if (absl::Status s = CheckVersion(p, expected_version); !s.ok()) return s;
  if (p.state != ProposalState::kChangesRequested) return WrongState(p, "respond");
  Proposal before = p;
  ProposalState to = ProposalState::kWithdrawn;
  if (accept) {
    Revision next = p.revisions.back();
    next.number += 1;
    next.submitted_ms = options_.clock();
    for (std::size_t i = 0; i < next.queries.size(); ++i) {
      next.queries[i].spec = p.adjusted_specs[i];
    }
    p.revisions.push_back(std::move(next));
    p.adjusted_specs.clear();
    p.adjusted_translations.clear();
    to = ProposalState::kSubmitted;
  }
  if (absl::Status s = Transition(slot, to, actor); !s.ok()) {
    p = std::move(before);
    return s;
  }
  return p;
}

absl::StatusOr<Release> Workflow::Execute(const std::string& id, const std::string& actor,
                                          RandomSource& rng) {
  absl::StatusOr<std::shared_ptr<Slot>> found = FindSlot(id);
  if (!found.ok()) return found.status();
  Slot& slot = **found;
  std::lock_guard lock(slot.mu);
  const Proposal& p = slot.proposal;
  if (p.state == ProposalState::kExecuted || p.state == ProposalState::kReleased) {
    return absl::AlreadyExistsError(
        absl::StrCat("proposal ", p.proposal_id, " was already executed"));
  }
  if (p.state != ProposalState::kApproved) return WrongState(p, "execute");
  const Revision& rev = p.revisions.back();
  const ReviewReport& report = *slot.report;

  std::vector<QueryCost> costs;
  std::vector<std::string> ids;
  for (const QueryAssessment& a : report.queries) {
    costs.push_back({a.proposed.query.query_id, a.translation.epsilon});
    ids.push_back(a.proposed.query.query_id);
  }
  absl::StatusOr<std::vector<LedgerEntry>> reserved = ledger_->Reserve(p.proposal_id, costs);
  if (!reserved.ok()) return reserved.status();
  Fault("reserved");

  auto abandon = [&](absl::Status cause) -> absl::Status {
    if (!options_.directory.empty()) {
      std::error_code ec;
      std::filesystem::remove(PathFor("pending", p.proposal_id), ec);
    }
    absl::StatusOr<std::vector<LedgerEntry>> voided = ledger_->Void(p.proposal_id, ids);
    if (!voided.ok()) return voided.status();
    return cause;
  };

  const DatasetPair& data = datasets_.at(p.dataset_id);
  Json results = Json::array();
  for (std::size_t i = 0; i < rev.queries.size(); ++i) {
    const ProposedQuery& q = rev.queries[i];
    absl::StatusOr<PrivacyCost> cost = PrivacyCost::Create(costs[i].epsilon);
    if (!cost.ok()) return abandon(cost.status());
    absl::StatusOr<MechanismResult> result = RunMechanism(
        *data.confidential, q.query, *cost, rng, options_.translation.mechanism);
    if (!result.ok()) {
      return abandon(absl::InternalError(
          absl::StrCat("query ", q.query.query_id, " failed to execute")));
    }
    const std::uint64_t ci_seed = DeriveSeed(
        options_.translation_seed, absl::StrCat(p.proposal_id, ":ci:", q.query.query_id));
    absl::StatusOr<ConfidenceInterval> ci = ComputeConfidenceInterval(
        *result, q.spec.beta, {options_.bootstrap_replicates, ci_seed});
    if (!ci.ok()) return abandon(ci.status());
    results.push_back(Json{{"result", MechanismResultToJson(*result)},
                           {"interval", IntervalToJson(*ci)}});
  }
  Fault("computed");
  const Json pending{{"revision", rev.number}, {"results", results}};
  if (!options_.directory.empty()) {
    if (absl::Status s = WriteFileAtomic(PathFor("pending", p.proposal_id), pending.dump(),
                                         options_.sync);
        !s.ok()) {
      return abandon(s);
    }
  }
  Fault("pending");
  absl::StatusOr<std::vector<LedgerEntry>> committed = ledger_->Commit(p.proposal_id, ids);
  if (!committed.ok()) return abandon(committed.status());
  Fault("committed");
  return FinishExecution(slot, pending, actor);
}

// Budget is committed: build and persist the release, then advance the state.
absl::StatusOr<Release> Workflow::FinishExecution(Slot& slot, const Json& pending,
                                                  const std::string& actor) {
  const Proposal& p = slot.proposal;
  const Revision& rev = p.revisions.back();
  Release release;
  release.project_id = p.proposal_id;
  release.dataset_id = p.dataset_id;
  release.title = p.title;
  release.revision = rev.number;
  release.created_ms = options_.clock();
  release.disclose_epsilon = options_.disclose_epsilon;
  try {
    const Json& results = pending.at("results");
    if (results.size() != rev.queries.size()) {
      return absl::DataLossError("pending results do not match the proposal");
    }
    for (std::size_t i = 0; i < rev.queries.size(); ++i) {
      absl::StatusOr<MechanismResult> r = MechanismResultFromJson(results[i].at("result"));
      if (!r.ok()) return r.status();
      absl::StatusOr<ConfidenceInterval> ci = IntervalFromJson(results[i].at("interval"));
      if (!ci.ok()) return ci.status();
      release.queries.push_back({rev.queries[i].query, rev.queries[i].spec,
                                 *std::move(r), *std::move(ci)});
    }
  } catch (const Json::exception& ex) {
    return absl::DataLossError(absl::StrCat("pending results unreadable: ", ex.what()));
  }
  if (absl::Status s = PersistRelease(release); !s.ok()) return s;
  slot.release = release;
  Fault("release-written");
  if (p.state == ProposalState::kApproved) {
    if (absl::Status s = Transition(slot, ProposalState::kExecuted, actor); !s.ok()) {
      return s;
    }
  }
  Fault("executed");
  if (absl::Status s = Transition(slot, ProposalState::kReleased, actor); !s.ok()) {
    return s;
  }
  if (!options_.directory.empty()) {
    std::error_code ec;
    std::filesystem::remove(PathFor("pending", p.proposal_id), ec);
  }
  return release;
}

absl::StatusOr<Release> Workflow::GetRelease(const std::string& id) const {
  absl::StatusOr<std::shared_ptr<Slot>> found = FindSlot(id);
  if (!found.ok()) return found.status();
  std::lock_guard lock((*found)->mu);
  if (!(*found)->release || (*found)->proposal.state != ProposalState::kReleased) {
    return absl::NotFoundError(absl::StrCat("proposal '", id, "' has no release"));
  }
  return *(*found)->release;
}

absl::StatusOr<std::size_t> Workflow::Recover() {
  std::size_t repairs = 0;
  std::vector<std::shared_ptr<Slot>> slots;
  {
    std::shared_lock lock(mu_);
    for (const auto& [id, slot] : slots_) slots.push_back(slot);
  }
  for (const auto& slot_ptr : slots) {
    Slot& slot = *slot_ptr;
    std::lock_guard lock(slot.mu);
    const Proposal& p = slot.proposal;
    // The ledger mirror may lag the proposal file after a crash.
    if (absl::Status s = ledger_->SetProjectStatus(p.proposal_id, ProposalStateName(p.state));
        !s.ok()) {
      return s;
    }
    const std::string pending_path =
        options_.directory.empty() ? "" : PathFor("pending", p.proposal_id);
    std::vector<std::string> live = ledger_->LiveReservations(p.proposal_id);
    if (!live.empty()) {
      absl::StatusOr<std::vector<LedgerEntry>> voided = ledger_->Void(p.proposal_id, live);
      if (!voided.ok()) return voided.status();
      if (!pending_path.empty()) {
        std::error_code ec;
        std::filesystem::remove(pending_path, ec);
      }
      ++repairs;
    }
    if (p.state != ProposalState::kApproved && p.state != ProposalState::kExecuted) continue;
    bool committed = true;
    for (const ProposedQuery& q : p.revisions.back().queries) {
      committed = committed && ledger_->IsCommitted(p.proposal_id, q.query.query_id);
    }
    if (!committed) continue;
    if (slot.release && slot.release->revision == p.revisions.back().number) {
      if (p.state == ProposalState::kApproved) {
        if (absl::Status s = Transition(slot, ProposalState::kExecuted, "recovery"); !s.ok()) {
          return s;
        }
      }
      if (absl::Status s = Transition(slot, ProposalState::kReleased, "recovery"); !s.ok()) {
        return s;
      }
      if (!pending_path.empty()) {
        std::error_code ec;
        std::filesystem::remove(pending_path, ec);
      }
      ++repairs;
      continue;
    }
    if (pending_path.empty() || !FileExists(pending_path)) {
      return absl::DataLossError(absl::StrCat(
          "proposal ", p.proposal_id, ": budget committed but results are missing"));
    }
    absl::StatusOr<std::string> text = ReadFile(pending_path);
    if (!text.ok()) return text.status();
    absl::StatusOr<Json> pending = ParseJson(*text);
    if (!pending.ok()) return absl::DataLossError("pending results unreadable");
    absl::StatusOr<Release> release = FinishExecution(slot, *pending, "recovery");
    if (!release.ok()) return release.status();
    ++repairs;
  }
  return repairs;
}

}  // namespace vserver
