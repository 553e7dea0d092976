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

// Administrative command line: dataset ingestion, synthetic registration,
// ledger inspection, budget reports and the HTTP server. Access to the data
// directory is the administrator credential.

#include <csignal>
#include <cstdio>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_split.h"
#include "vserver/catalog.h"
#include "vserver/codec.h"
#include "vserver/fileutil.h"
#include "vserver/ledger.h"
#include "vserver/service.h"
#include "vserver/synthetic.h"

namespace vserver {
namespace {

int Fail(const absl::Status& status) {
  std::cerr << "error: " << status.message() << "\n";
  return 1;
}

absl::StatusOr<Schema> LoadSchemaFile(const std::string& path) {
  absl::StatusOr<std::string> text = ReadFile(path);
  if (!text.ok()) return text.status();
  absl::StatusOr<Json> j = ParseJson(*text);
  if (!j.ok()) return j.status();
  return SchemaFromJson(*j);
}

int Ingest(const std::string& data_dir, const std::string& schema_path,
           const std::string& csv_path) {
  absl::StatusOr<Schema> schema = LoadSchemaFile(schema_path);
  if (!schema.ok()) return Fail(schema.status());
  absl::StatusOr<std::string> csv = ReadFile(csv_path);
  if (!csv.ok()) return Fail(csv.status());
  absl::StatusOr<IngestStats> stats = IngestDataset(data_dir, *schema, *csv);
  if (!stats.ok()) return Fail(stats.status());
  std::cout << "ingested " << schema->dataset_id << ": " << stats->clamped
            << " values clamped, " << stats->rejected << " rows rejected\n";
  return 0;
}

int RegisterSyntheticCommand(const std::string& data_dir, const std::string& dataset_id,
                             const std::string& file, std::size_t placeholder_rows,
                             std::optional<std::uint64_t> seed, const std::string& note) {
  absl::StatusOr<Schema> schema = ReadSchema(data_dir, dataset_id);
  if (!schema.ok()) return Fail(schema.status());
  SyntheticInfo info;
  info.note = note;
  absl::StatusOr<Dataset> candidate = absl::InternalError("unset");
  if (!file.empty()) {
    absl::StatusOr<std::string> text = ReadFile(file);
    if (!text.ok()) return Fail(text.status());
    candidate = ParseSyntheticCsv(*schema, *text);
    info.provenance = SyntheticProvenance::kCuratorSupplied;
    info.seed = seed;
  } else {
    if (!seed) return Fail(absl::InvalidArgumentError("--placeholder requires --seed"));
    candidate = GeneratePlaceholder(*schema, placeholder_rows, *seed);
    info.provenance = SyntheticProvenance::kPlaceholderGenerated;
    info.seed = seed;
    if (info.note.empty()) {
      info.note = "independent uniform draws within the public bounds; no correlations";
    }
  }
  if (!candidate.ok()) return Fail(candidate.status());
  if (absl::Status s = RegisterSynthetic(data_dir, dataset_id, *candidate, info); !s.ok()) {
    return Fail(s);
  }
  std::cout << "registered synthetic data for " << dataset_id << " ("
            << candidate->num_rows() << " rows, "
            << SyntheticProvenanceName(info.provenance) << ")\n";
  return 0;
}

std::string LedgerFile(const std::string& data_dir, const std::string& file) {
  return file.empty() ? data_dir + "/ledger/ledger.jsonl" : file;
}

int LedgerVerify(const std::string& path) {
  absl::StatusOr<LedgerVerification> v = VerifyLedgerFile(path);
  if (!v.ok()) return Fail(v.status());
  if (!v->ok) {
    std::cerr << "FAILED: " << v->message << "\n";
    return 2;
  }
  std::cout << "OK: " << v->entries << " entries, digest chain intact\n";
  return 0;
}

int LedgerDump(const std::string& path) {
  absl::StatusOr<std::string> text = ReadFile(path);
  if (!text.ok()) return Fail(text.status());
  std::printf("%-6s %-14s %-20s %-12s %-12s %-10s %s\n", "entry", "time_ms", "project",
              "dataset", "query", "phase", "epsilon");
  for (absl::string_view line : absl::StrSplit(*text, '\n', absl::SkipEmpty())) {
    absl::StatusOr<Json> j = ParseJson(std::string_view(line.data(), line.size()));
    if (!j.ok()) return Fail(j.status());
    std::printf("%-6llu %-14lld %-20s %-12s %-12s %-10s %.17g\n",
                static_cast<unsigned long long>(j->value("entry_id", 0ULL)),
                static_cast<long long>(j->value("timestamp_ms", 0LL)),
                j->value("project_id", "").c_str(), j->value("dataset_id", "").c_str(),
                j->value("query_id", "").c_str(), j->value("phase", "").c_str(),
                j->value("epsilon", 0.0));
  }
  return 0;
}

int Report(const std::string& data_dir, bool as_json) {
  absl::StatusOr<std::unique_ptr<Ledger>> ledger =
      Ledger::Open({.directory = data_dir + "/ledger"});
  if (!ledger.ok()) return Fail(ledger.status());
  const GlobalReport report = (*ledger)->Report();
  if (as_json) {
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
    std::cout << Json{{"datasets", datasets}, {"grand_total", report.grand_total},
                      {"approved", report.approved}, {"rejected", report.rejected}}
                     .dump(2)
              << "\n";
    return 0;
  }
  for (const DatasetTotal& d : report.datasets) {
    std::printf("dataset %s: epsilon %.6g, %zu approved, %zu rejected\n", d.dataset_id.c_str(),
                d.epsilon, d.approved, d.rejected);
    for (const ProjectTotal& p : d.projects) {
      std::printf("  %-20s %-12s %-16s %.6g\n", p.project_id.c_str(), p.researcher.c_str(),
                  p.status.c_str(), p.epsilon);
    }
  }
  std::printf("total: epsilon %.6g, %zu approved, %zu rejected\n", report.grand_total,
              report.approved, report.rejected);
  return 0;
}

int Serve(const std::string& config_path, std::optional<int> port) {
  absl::StatusOr<ServiceConfig> config = LoadServiceConfig(config_path);
  if (!config.ok()) return Fail(config.status());
  if (port) config->port = *port;

  // Handle termination signals on a dedicated thread so Stop() runs outside
  // signal context. The mask is inherited by the listener threads.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  absl::StatusOr<std::unique_ptr<Service>> service = Service::Create(*std::move(config));
  if (!service.ok()) return Fail(service.status());
  if ((*service)->recovered() > 0) {
    std::cerr << "recovered " << (*service)->recovered() << " interrupted operations\n";
  }
  absl::StatusOr<int> bound = (*service)->Bind();
  if (!bound.ok()) return Fail(bound.status());
  std::cout << "listening on " << (*service)->config().host << ":" << *bound << std::endl;
  Service* raw = service->get();
  std::thread waiter([&signals, raw] {
    int sig = 0;
    sigwait(&signals, &sig);
    raw->Stop();
  });
  absl::Status run = raw->Run();
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  return run.ok() ? 0 : Fail(run);
}

}  // namespace
}  // namespace vserver

int main(int argc, char** argv) {
  CLI::App app{"Validation server administration"};
  app.require_subcommand(1);

  std::string data_dir = "data";
  auto add_data_dir = [&](CLI::App* cmd) {
    cmd->add_option("--data-dir", data_dir, "Server data directory")->capture_default_str();
  };

  CLI::App* ingest = app.add_subcommand("ingest", "Store a confidential dataset");
  std::string schema_path, csv_path;
  add_data_dir(ingest);
  ingest->add_option("--schema", schema_path, "Schema manifest (JSON)")->required();
  ingest->add_option("--csv", csv_path, "Confidential CSV")->required();

  CLI::App* synth = app.add_subcommand("register-synthetic", "Register a public synthetic twin");
  std::string dataset_id, synth_file, note;
  std::size_t placeholder_rows = 0;
  std::optional<std::uint64_t> seed;
  add_data_dir(synth);
  synth->add_option("--dataset", dataset_id)->required();
  CLI::Option* file_opt = synth->add_option("--file", synth_file, "Curator-supplied CSV");
  CLI::Option* ph_opt = synth->add_option("--placeholder", placeholder_rows,
                                          "Generate N uniform placeholder rows");
  synth->add_option("--seed", seed, "Placeholder seed");
  synth->add_option("--note", note, "Provenance note shown to researchers");
  file_opt->excludes(ph_opt);
  synth->callback([&] {
    if (file_opt->count() == 0 && ph_opt->count() == 0) {
      throw CLI::ValidationError("one of --file or --placeholder is required");
    }
  });

  CLI::App* ledger = app.add_subcommand("ledger", "Inspect the privacy budget ledger");
  ledger->require_subcommand(1);
  std::string ledger_file;
  CLI::App* verify = ledger->add_subcommand("verify", "Check the digest chain");
  CLI::App* dump = ledger->add_subcommand("dump", "Print every ledger entry");
  for (CLI::App* cmd : {verify, dump}) {
    add_data_dir(cmd);
    cmd->add_option("--file", ledger_file, "Ledger file (overrides --data-dir)");
  }

  CLI::App* report = app.add_subcommand("report", "Budget spent per dataset and project");
  bool as_json = false;
  add_data_dir(report);
  report->add_flag("--json", as_json);

  CLI::App* serve = app.add_subcommand("serve", "Run the HTTP service");
  std::string config_path;
  std::optional<int> port;
  serve->add_option("--config", config_path, "Service configuration (JSON)")->required();
  serve->add_option("--port", port, "Override the configured port");

  CLI11_PARSE(app, argc, argv);

  using namespace vserver;
  if (*ingest) return Ingest(data_dir, schema_path, csv_path);
  if (*synth) {
    return RegisterSyntheticCommand(data_dir, dataset_id, synth_file, placeholder_rows, seed,
                                    note);
  }
  if (*verify) return LedgerVerify(LedgerFile(data_dir, ledger_file));
  if (*dump) return LedgerDump(LedgerFile(data_dir, ledger_file));
  if (*report) return Report(data_dir, as_json);
  if (*serve) return Serve(config_path, port);
  return 1;
}
