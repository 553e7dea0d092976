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

#include "vserver/service.h"

#include <utility>
#include <vector>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_split.h"
#include "httplib.h"
#include "vserver/fileutil.h"
#include "vserver/release.h"
#include "vserver/synthetic.h"

namespace vserver {
namespace {

absl::Status Malformed(const std::string& what, const std::string& why) {
  return absl::InvalidArgumentError(absl::StrCat("malformed ", what, ": ", why));
}

template <typename T>
absl::Status ReadOptional(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) return absl::OkStatus();
  try {
    out = j.at(key).get<T>();
  } catch (const Json::exception& e) {
    return Malformed(key, e.what());
  }
  return absl::OkStatus();
}

absl::StatusOr<Json> ParseBody(const std::string& body) {
  if (body.empty()) return Json::object();
  absl::StatusOr<Json> j = ParseJson(body);
  if (!j.ok()) return j.status();
  if (!j->is_object()) return Malformed("request body", "expected an object");
  return j;
}

std::optional<std::uint64_t> ExpectedVersion(const Json& body) {
  if (!body.contains("expected_version") || !body["expected_version"].is_number_unsigned()) {
    return std::nullopt;
  }
  return body["expected_version"].get<std::uint64_t>();
}

absl::StatusOr<std::vector<ProposedQuery>> ProposedQueriesFromJson(const Json& body) {
  if (!body.contains("queries") || !body["queries"].is_array()) {
    return Malformed("queries", "expected an array");
  }
  std::vector<ProposedQuery> out;
  for (const Json& item : body["queries"]) {
    if (!item.is_object() || !item.contains("query")) {
      return Malformed("queries", "each entry needs 'query' and 'accuracy'");
    }
    absl::StatusOr<Query> q = QueryFromJson(item["query"]);
    if (!q.ok()) return q.status();
    absl::StatusOr<AccuracySpec> spec =
        AccuracySpecFromJson(item.value("accuracy", Json::object()));
    if (!spec.ok()) return spec.status();
    out.push_back({*std::move(q), *spec});
  }
  return out;
}

Json PreviewRowToJson(const PreviewRow& row, bool disclose) {
  return Json{{"query_id", row.query_id},
              {"kind", QueryKindName(row.kind)},
              {"labels", row.labels},
              {"synthetic_value", row.synthetic_value},
              {"noisy_draw", row.noisy_draw},
              {"ci_half_width", row.ci_half_width},
              {"ci_units", row.ci_units},
              {"confidence", 1.0 - row.spec.beta},
              {"accuracy", AccuracySpecToJson(row.spec)},
              {"translation", TranslationToJson(row.translation, disclose)}};
}

Json ProjectSummary(const Proposal& p) {
  return Json{{"project_id", p.proposal_id}, {"dataset_id", p.dataset_id},
              {"researcher", p.researcher},  {"title", p.title},
              {"state", ProposalStateName(p.state)}, {"version", p.version}};
}

Json GlobalReportToJson(const GlobalReport& report) {
  Json datasets = Json::array();
  for (const DatasetTotal& d : report.datasets) {
    Json projects = Json::array();
    for (const ProjectTotal& p : d.projects) {
      projects.push_back({{"project_id", p.project_id}, {"researcher", p.researcher},
                          {"status", p.status}, {"epsilon", p.epsilon}});
    }
    datasets.push_back({{"dataset_id", d.dataset_id}, {"epsilon", d.epsilon},
                        {"approved", d.approved}, {"rejected", d.rejected},
                        {"projects", projects}});
  }
  return Json{{"datasets", datasets}, {"grand_total", report.grand_total},
              {"approved", report.approved}, {"rejected", report.rejected}};
}

std::string ErrorCode(absl::StatusCode code) {
  std::string name = absl::StatusCodeToString(code);
  for (char& c : name) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return name;
}

}  // namespace

const char* RoleName(Role role) {
  switch (role) {
    case Role::kResearcher: return "researcher";
    case Role::kReviewer: return "reviewer";
    case Role::kAdmin: return "admin";
  }
  return "unknown";
}

std::optional<Role> ParseRole(std::string_view name) {
  for (Role r : {Role::kResearcher, Role::kReviewer, Role::kAdmin}) {
    if (name == RoleName(r)) return r;
  }
  return std::nullopt;
}

absl::StatusOr<ServiceConfig> ServiceConfigFromJson(const Json& j) {
  if (!j.is_object()) return Malformed("config", "expected an object");
  ServiceConfig c;
  if (j.contains("listen")) {
    if (absl::Status s = ReadOptional(j["listen"], "host", c.host); !s.ok()) return s;
    if (absl::Status s = ReadOptional(j["listen"], "port", c.port); !s.ok()) return s;
  }
  if (c.port < 0 || c.port > 65535) return Malformed("config", "port out of range");
  if (absl::Status s = ReadOptional(j, "data_dir", c.data_dir); !s.ok()) return s;
  if (c.data_dir.empty()) return Malformed("config", "data_dir is required");
  if (j.contains("advisory_threshold")) {
    const Json& a = j["advisory_threshold"];
    if (absl::Status s = ReadOptional(a, "default", c.default_advisory_threshold); !s.ok()) {
      return s;
    }
    if (absl::Status s = ReadOptional(a, "datasets", c.advisory_threshold); !s.ok()) return s;
  }
  if (!(c.default_advisory_threshold > 0.0)) {
    return Malformed("config", "advisory threshold must be positive");
  }
  for (const auto& [id, t] : c.advisory_threshold) {
    if (!(t > 0.0)) return Malformed("config", absl::StrCat("advisory threshold of ", id));
  }
  if (absl::Status s = ReadOptional(j, "disclose_epsilon", c.disclose_epsilon); !s.ok()) return s;
  if (absl::Status s = ReadOptional(j, "auto_execute", c.auto_execute); !s.ok()) return s;
  if (absl::Status s = ReadOptional(j, "sync", c.sync); !s.ok()) return s;
  if (absl::Status s = ReadOptional(j, "bootstrap_replicates", c.bootstrap_replicates); !s.ok()) {
    return s;
  }
  if (c.bootstrap_replicates < 100) return Malformed("config", "bootstrap_replicates < 100");
  if (j.contains("translation")) {
    const Json& t = j["translation"];
    TranslationOptions& o = c.translation;
    for (absl::Status s : {ReadOptional(t, "epsilon_lo", o.epsilon_lo),
                           ReadOptional(t, "epsilon_hi", o.epsilon_hi),
                           ReadOptional(t, "n_sims", o.n_sims),
                           ReadOptional(t, "tolerance", o.tolerance),
                           ReadOptional(t, "k_bins", o.mechanism.k_bins),
                           ReadOptional(t, "seed", c.translation_seed)}) {
      if (!s.ok()) return s;
    }
  }
  if (absl::Status s = ValidateTranslationOptions(c.translation); !s.ok()) return s;
  if (!j.contains("users") || !j["users"].is_array()) {
    return Malformed("config", "'users' must list token holders");
  }
  for (const Json& u : j["users"]) {
    std::string name, role_name, token;
    for (absl::Status s : {ReadOptional(u, "name", name), ReadOptional(u, "role", role_name),
                           ReadOptional(u, "token", token)}) {
      if (!s.ok()) return s;
    }
    std::optional<Role> role = ParseRole(role_name);
    if (!role) return Malformed("config", absl::StrCat("unknown role '", role_name, "'"));
    if (name.empty()) return Malformed("config", "user without a name");
    if (token.size() < 16) {
      return Malformed("config", absl::StrCat("token of ", name, " is shorter than 16 bytes"));
    }
    if (!c.tokens.emplace(token, Principal{*role, name}).second) {
      return Malformed("config", "tokens must be distinct");
    }
  }
  return c;
}

absl::StatusOr<ServiceConfig> LoadServiceConfig(const std::string& path) {
  absl::StatusOr<std::string> text = ReadFile(path);
  if (!text.ok()) return text.status();
  absl::StatusOr<Json> j = ParseJson(*text);
  if (!j.ok()) return j.status();
  return ServiceConfigFromJson(*j);
}

int HttpStatusFor(const absl::Status& status) {
  switch (status.code()) {
    case absl::StatusCode::kOk: return 200;
    case absl::StatusCode::kInvalidArgument:
    case absl::StatusCode::kOutOfRange: return 400;
    case absl::StatusCode::kUnauthenticated: return 401;
    case absl::StatusCode::kPermissionDenied: return 403;
    case absl::StatusCode::kNotFound: return 404;
    case absl::StatusCode::kFailedPrecondition:
    case absl::StatusCode::kAlreadyExists:
    case absl::StatusCode::kAborted: return 409;
    case absl::StatusCode::kUnavailable: return 503;
    default: return 500;
  }
}

absl::StatusOr<std::unique_ptr<Service>> Service::Create(ServiceConfig config) {
  absl::StatusOr<LoadedCatalog> catalog = LoadCatalog(config.data_dir);
  if (!catalog.ok()) return catalog.status();
  if (catalog->datasets.empty()) {
    return absl::FailedPreconditionError("no datasets registered");
  }
  std::unique_ptr<Service> service(new Service(std::move(config), *std::move(catalog)));
  const ServiceConfig& c = service->config_;
  for (const auto& [token, who] : c.tokens) service->token_digests_[Sha256Hex(token)] = who;

  absl::StatusOr<std::unique_ptr<Ledger>> ledger =
      Ledger::Open({.directory = c.data_dir + "/ledger", .sync = c.sync});
  if (!ledger.ok()) return ledger.status();
  service->ledger_ = *std::move(ledger);

  WorkflowOptions options;
  options.directory = c.data_dir + "/workflow";
  options.sync = c.sync;
  options.translation = c.translation;
  options.translation_seed = c.translation_seed;
  options.advisory_threshold = c.advisory_threshold;
  options.default_advisory_threshold = c.default_advisory_threshold;
  options.disclose_epsilon = c.disclose_epsilon;
  options.bootstrap_replicates = c.bootstrap_replicates;
  absl::StatusOr<std::unique_ptr<Workflow>> workflow = Workflow::Open(
      std::move(options), service->ledger_.get(), DatasetPairs(service->catalog_));
  if (!workflow.ok()) return workflow.status();
  service->workflow_ = *std::move(workflow);

  absl::StatusOr<std::size_t> repaired = service->workflow_->Recover();
  if (!repaired.ok()) return repaired.status();
  service->recovered_ = *repaired;
  return service;
}

Service::Service(ServiceConfig config, LoadedCatalog catalog)
    : config_(std::move(config)), catalog_(std::move(catalog)) {}

Service::~Service() { Stop(); }

absl::StatusOr<Principal> Service::Authenticate(const HttpRequest& request) const {
  std::string_view header = request.authorization;
  constexpr std::string_view kScheme = "Bearer ";
  if (!header.starts_with(kScheme) || header.size() == kScheme.size()) {
    return absl::UnauthenticatedError("missing bearer token");
  }
  auto it = token_digests_.find(Sha256Hex(header.substr(kScheme.size())));
  if (it == token_digests_.end()) return absl::UnauthenticatedError("unknown token");
  return it->second;
}

HttpResponse Service::Handle(const HttpRequest& request) {
  HttpResponse raw;
  absl::StatusOr<Json> data;
  try {
    data = Dispatch(request, raw);
  } catch (const Json::exception& e) {
    data = Malformed("request", e.what());
  }
  if (data.ok() && data->is_null()) return raw;  // non-JSON payload already set
  HttpResponse out;
  Json envelope{{"schema_version", kApiSchemaVersion}};
  if (data.ok()) {
    envelope["data"] = *std::move(data);
  } else {
    out.status = HttpStatusFor(data.status());
    envelope["error"] = {{"code", ErrorCode(data.status().code())},
                         {"message", std::string(data.status().message())}};
  }
  out.body = envelope.dump();
  return out;
}

absl::StatusOr<Json> Service::Dispatch(const HttpRequest& req, HttpResponse& raw) {
  const std::vector<std::string> seg =
      absl::StrSplit(req.path, '/', absl::SkipEmpty());
  const bool get = req.method == "GET";
  const bool post = req.method == "POST";
  auto route = [&](std::initializer_list<const char*> pattern) {
    if (seg.size() != pattern.size()) return false;
    std::size_t i = 0;
    for (const char* p : pattern) {
      if (std::string_view(p) != "*" && seg[i] != p) return false;
      ++i;
    }
    return true;
  };

  if (get && route({"health"})) {
    return Json{{"status", "ok"}, {"datasets", catalog_.datasets.size()}};
  }

  absl::StatusOr<Principal> who_or = Authenticate(req);
  if (!who_or.ok()) return who_or.status();
  const Principal who = *who_or;
  auto require = [&](std::initializer_list<Role> roles) -> absl::Status {
    for (Role r : roles) {
      if (who.role == r) return absl::OkStatus();
    }
    return absl::PermissionDeniedError(
        absl::StrCat("role '", RoleName(who.role), "' may not ", req.method, " ", req.path));
  };
  auto dataset = [&](const std::string& id) -> absl::StatusOr<const CatalogEntry*> {
    auto it = catalog_.datasets.find(id);
    if (it == catalog_.datasets.end()) {
      return absl::NotFoundError(absl::StrCat("no dataset '", id, "'"));
    }
    return &it->second;
  };
  // Researchers only see their own projects; others' ids look unknown.
  auto project = [&](const std::string& id) -> absl::StatusOr<Proposal> {
    absl::StatusOr<Proposal> p = workflow_->Get(id);
    if (!p.ok()) return p.status();
    if (who.role == Role::kResearcher && p->researcher != who.name) {
      return absl::NotFoundError(absl::StrCat("no project '", id, "'"));
    }
    return p;
  };
  auto owned = [&](const std::string& id) -> absl::StatusOr<Proposal> {
    if (absl::Status s = require({Role::kResearcher}); !s.ok()) return s;
    return project(id);
  };
  const bool disclose = config_.disclose_epsilon;
  auto proposal_view = [&](const Proposal& p) {
    return who.role == Role::kResearcher ? ProposalToResearcherJson(p, disclose)
                                         : ProposalToJson(p);
  };
  auto maybe_execute = [&](const Proposal& p) -> absl::StatusOr<Proposal> {
    if (!config_.auto_execute || p.state != ProposalState::kApproved) return p;
    RandomSource rng = RandomSource::Secure();
    absl::StatusOr<Release> r = workflow_->Execute(p.proposal_id, "auto-execute", rng);
    if (!r.ok()) return r.status();
    return workflow_->Get(p.proposal_id);
  };

  absl::StatusOr<Json> body_or = ParseBody(req.body);
  if (!body_or.ok()) return body_or.status();
  const Json& body = *body_or;

  // Catalog.
  if (get && route({"datasets"})) {
    Json out = Json::array();
    for (const auto& [id, entry] : catalog_.datasets) {
      out.push_back({{"dataset_id", id},
                     {"columns", entry.schema.columns.size()},
                     {"synthetic_rows", entry.data.synthetic.data().num_rows()},
                     {"synthetic_provenance", SyntheticProvenanceName(entry.synthetic.provenance)},
                     {"synthetic_note", entry.synthetic.note}});
    }
    return out;
  }
  if (get && route({"datasets", "*", "schema"})) {
    absl::StatusOr<const CatalogEntry*> d = dataset(seg[1]);
    if (!d.ok()) return d.status();
    return SchemaToJson((*d)->schema);
  }
  if (get && route({"datasets", "*", "synthetic"})) {
    absl::StatusOr<const CatalogEntry*> d = dataset(seg[1]);
    if (!d.ok()) return d.status();
    raw.content_type = "text/csv";
    raw.body = WriteCsv((*d)->data.synthetic.data());
    return Json();
  }

  // Projects.
  if (route({"projects"})) {
    if (post) {
      if (absl::Status s = require({Role::kResearcher}); !s.ok()) return s;
      std::string title, dataset_id;
      for (absl::Status s : {ReadOptional(body, "title", title),
                             ReadOptional(body, "dataset_id", dataset_id)}) {
        if (!s.ok()) return s;
      }
      if (absl::StatusOr<const CatalogEntry*> d = dataset(dataset_id); !d.ok()) return d.status();
      absl::StatusOr<Proposal> p = workflow_->CreateProposal(who.name, title, dataset_id);
      if (!p.ok()) return p.status();
      return proposal_view(*p);
    }
    if (get) {
      Json out = Json::array();
      for (const Proposal& p : workflow_->List()) {
        if (who.role == Role::kResearcher && p.researcher != who.name) continue;
        out.push_back(ProjectSummary(p));
      }
      return out;
    }
  }
  if (get && route({"projects", "*"})) {
    absl::StatusOr<Proposal> p = project(seg[1]);
    if (!p.ok()) return p.status();
    return proposal_view(*p);
  }
  if (post && route({"projects", "*", "queries", "validate"})) {
    absl::StatusOr<Proposal> p = owned(seg[1]);
    if (!p.ok()) return p.status();
    absl::StatusOr<const CatalogEntry*> d = dataset(p->dataset_id);
    if (!d.ok()) return d.status();
    if (!body.contains("queries") || !body["queries"].is_array()) {
      return Malformed("queries", "expected an array");
    }
    std::uint64_t seed = 0;
    if (absl::Status s = ReadOptional(body, "seed", seed); !s.ok()) return s;
    std::optional<double> epsilon;
    if (body.contains("epsilon")) {
      double e = 0.0;
      if (absl::Status s = ReadOptional(body, "epsilon", e); !s.ok()) return s;
      epsilon = e;
    }
    const PublicDataset& synthetic = (*d)->data.synthetic;
    Json out = Json::array();
    for (const Json& item : body["queries"]) {
      absl::StatusOr<Query> q = QueryFromJson(item);
      if (!q.ok()) {
        out.push_back({{"query_id", item.value("id", "")}, {"valid", false},
                       {"error", std::string(q.status().message())}});
        continue;
      }
      absl::StatusOr<PreviewResult> preview = RunPreview(
          *q, synthetic, epsilon, DeriveSeed(seed, q->query_id), config_.translation.mechanism);
      if (!preview.ok()) {
        out.push_back({{"query_id", q->query_id}, {"valid", false},
                       {"error", std::string(preview.status().message())}});
        continue;
      }
      Json row{{"query_id", q->query_id},
               {"valid", true},
               {"description", DescribeQuery(*q)},
               {"units", EstimateUnits(*q)},
               {"labels", preview->exact.labels},
               {"synthetic_value", preview->exact.estimate}};
      if (preview->noisy) row["noisy_value"] = preview->noisy->estimate;
      out.push_back(std::move(row));
    }
    return out;
  }
  if (post && route({"projects", "*", "translate"})) {
    absl::StatusOr<Proposal> p = owned(seg[1]);
    if (!p.ok()) return p.status();
    absl::StatusOr<const CatalogEntry*> d = dataset(p->dataset_id);
    if (!d.ok()) return d.status();
    absl::StatusOr<std::vector<ProposedQuery>> proposed = ProposedQueriesFromJson(body);
    if (!proposed.ok()) return proposed.status();
    std::uint64_t seed = DeriveSeed(config_.translation_seed, "preview:" + p->proposal_id);
    if (absl::Status s = ReadOptional(body, "seed", seed); !s.ok()) return s;
    std::vector<Query> queries;
    std::vector<AccuracySpec> specs;
    for (const ProposedQuery& pq : *proposed) {
      queries.push_back(pq.query);
      specs.push_back(pq.spec);
    }
    absl::StatusOr<std::vector<PreviewRow>> rows =
        PreviewOutputs(queries, specs, (*d)->data.synthetic, config_.translation, seed);
    if (!rows.ok()) return rows.status();
    if (req.params.count("format") && req.params.at("format") == "csv") {
      raw.content_type = "text/csv";
      raw.body = PreviewToCsv(*rows, disclose);
      return Json();
    }
    Json out = Json::array();
    for (const PreviewRow& row : *rows) out.push_back(PreviewRowToJson(row, disclose));
    return Json{{"rows", out}};
  }
  if (post && route({"projects", "*", "submit"})) {
    absl::StatusOr<Proposal> p = owned(seg[1]);
    if (!p.ok()) return p.status();
    absl::StatusOr<std::vector<ProposedQuery>> proposed = ProposedQueriesFromJson(body);
    if (!proposed.ok()) return proposed.status();
    absl::StatusOr<Proposal> submitted = workflow_->Submit(
        p->proposal_id, who.name, *std::move(proposed), body.value("justification", ""),
        body.value("planned_outputs", ""), ExpectedVersion(body));
    if (!submitted.ok()) return submitted.status();
    if (absl::StatusOr<ReviewReport> r = workflow_->CompileReport(p->proposal_id, "system");
        !r.ok()) {
      return r.status();
    }
    absl::StatusOr<Proposal> now = workflow_->Get(p->proposal_id);
    if (!now.ok()) return now.status();
    return proposal_view(*now);
  }
  if (post && route({"projects", "*", "respond-adjustment"})) {
    absl::StatusOr<Proposal> p = owned(seg[1]);
    if (!p.ok()) return p.status();
    if (!body.contains("accept") || !body["accept"].is_boolean()) {
      return Malformed("response", "'accept' must be true or false");
    }
    const bool accept = body["accept"].get<bool>();
    absl::StatusOr<Proposal> responded =
        workflow_->RespondAdjustment(p->proposal_id, who.name, accept, ExpectedVersion(body));
    if (!responded.ok()) return responded.status();
    if (accept) {
      if (absl::StatusOr<ReviewReport> r = workflow_->CompileReport(p->proposal_id, "system");
          !r.ok()) {
        return r.status();
      }
    }
    absl::StatusOr<Proposal> now = workflow_->Get(p->proposal_id);
    if (!now.ok()) return now.status();
    return proposal_view(*now);
  }
  if (get && seg.size() >= 3 && seg.size() <= 4 && seg[0] == "projects" &&
      seg[2] == "release") {
    absl::StatusOr<Proposal> p = project(seg[1]);
    if (!p.ok()) return p.status();
    absl::StatusOr<Release> release = workflow_->GetRelease(p->proposal_id);
    if (!release.ok()) return release.status();
    if (seg.size() == 3) {
      Json out = ReleaseToPublicJson(*release);
      out["methods"] = RenderMethodsText(*release);
      return out;
    }
    if (seg[3] == "methods.txt") {
      raw.content_type = "text/plain";
      raw.body = RenderMethodsText(*release);
      return Json();
    }
    if (seg[3] == "results.csv") {
      raw.content_type = "text/csv";
      raw.body = RenderResultsCsv(*release);
      return Json();
    }
    if (seg[3] == "document.txt") {
      raw.content_type = "text/plain";
      raw.body = RenderReleaseDocument(*release);
      return Json();
    }
  }

  // Review.
  if (get && route({"review", "queue"})) {
    if (absl::Status s = require({Role::kReviewer}); !s.ok()) return s;
    Json out = Json::array();
    for (const Proposal& p : workflow_->Queue()) out.push_back(ProjectSummary(p));
    return out;
  }
  if (get && route({"review", "*", "report"})) {
    if (absl::Status s = require({Role::kReviewer}); !s.ok()) return s;
    absl::StatusOr<ReviewReport> report = workflow_->GetReport(seg[1]);
    if (!report.ok()) return report.status();
    if (req.params.count("format") && req.params.at("format") == "text") {
      raw.content_type = "text/plain";
      raw.body = RenderReviewReport(*report);
      return Json();
    }
    return ReviewReportToJson(*report);
  }
  if (post && route({"review", "*", "decision"})) {
    if (absl::Status s = require({Role::kReviewer}); !s.ok()) return s;
    std::optional<DecisionKind> kind = ParseDecisionKind(body.value("decision", ""));
    if (!kind) return Malformed("decision", "expected approve, reject or adjust");
    Decision decision{*kind, {}, body.value("note", "")};
    if (body.contains("adjusted")) {
      if (!body["adjusted"].is_array()) return Malformed("adjusted", "expected an array");
      for (const Json& a : body["adjusted"]) {
        absl::StatusOr<AccuracySpec> spec = AccuracySpecFromJson(a);
        if (!spec.ok()) return spec.status();
        decision.adjusted_specs.push_back(*spec);
      }
    }
    absl::StatusOr<Proposal> decided =
        workflow_->Decide(seg[1], who.name, decision, ExpectedVersion(body));
    if (!decided.ok()) return decided.status();
    absl::StatusOr<Proposal> now = maybe_execute(*decided);
    if (!now.ok()) return now.status();
    return ProposalToJson(*now);
  }
  if (post && route({"review", "*", "execute"})) {
    if (absl::Status s = require({Role::kReviewer, Role::kAdmin}); !s.ok()) return s;
    RandomSource rng = RandomSource::Secure();
    absl::StatusOr<Release> release = workflow_->Execute(seg[1], who.name, rng);
    if (!release.ok()) return release.status();
    return ReleaseToPublicJson(*release);
  }

  // Administration.
  if (get && route({"admin", "report"})) {
    if (absl::Status s = require({Role::kAdmin}); !s.ok()) return s;
    return GlobalReportToJson(ledger_->Report());
  }

  return absl::NotFoundError(absl::StrCat("no route for ", req.method, " ", req.path));
}

absl::StatusOr<int> Service::Bind() {
  if (server_) return absl::FailedPreconditionError("already bound");
  server_ = std::make_unique<httplib::Server>();
  auto adapter = [this](const httplib::Request& in, httplib::Response& out) {
    HttpRequest req{in.method, in.path, in.get_header_value("Authorization"), in.body, {}};
    for (const auto& [k, v] : in.params) req.params[k] = v;
    HttpResponse resp = Handle(req);
    out.status = resp.status;
    out.set_content(resp.body, resp.content_type);
  };
  server_->Get(".*", adapter);
  server_->Post(".*", adapter);
  int port = config_.port;
  if (port == 0) {
    port = server_->bind_to_any_port(config_.host);
  } else if (!server_->bind_to_port(config_.host, port)) {
    port = -1;
  }
  if (port < 0) {
    server_.reset();
    return absl::UnavailableError(
        absl::StrCat("cannot listen on ", config_.host, ":", config_.port));
  }
  return port;
}

absl::Status Service::Run() {
  if (!server_) return absl::FailedPreconditionError("Bind() first");
  if (!server_->listen_after_bind()) return absl::InternalError("listener stopped with an error");
  return absl::OkStatus();
}

void Service::Stop() {
  if (server_) server_->stop();
}

}  // namespace vserver
