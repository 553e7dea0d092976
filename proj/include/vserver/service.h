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

// HTTP front end of the validation server. Handle() is a pure request to
// response function so it can be exercised without sockets; Bind()/Run()
// put it behind an HTTP listener.

#ifndef VSERVER_SERVICE_H_
#define VSERVER_SERVICE_H_

#include <cstdint>
#include <map>
#include <memory>
#include <string>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "vserver/catalog.h"
#include "vserver/codec.h"
#include "vserver/ledger.h"
#include "vserver/translation.h"
#include "vserver/workflow.h"

namespace httplib {
class Server;
}

namespace vserver {

enum class Role { kResearcher, kReviewer, kAdmin };

const char* RoleName(Role role);
std::optional<Role> ParseRole(std::string_view name);

struct Principal {
  Role role = Role::kResearcher;
  std::string name;
};

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::string data_dir;
  std::map<std::string, double> advisory_threshold;  // per dataset
  double default_advisory_threshold = 1.0;
  bool disclose_epsilon = true;
  TranslationOptions translation;
  std::uint64_t translation_seed = 0x5eed;
  std::size_t bootstrap_replicates = 10000;
  bool auto_execute = false;
  bool sync = true;
  // Keyed by bearer token. Every token maps to exactly one principal.
  std::map<std::string, Principal> tokens;
};

absl::StatusOr<ServiceConfig> ServiceConfigFromJson(const Json& j);
absl::StatusOr<ServiceConfig> LoadServiceConfig(const std::string& path);

struct HttpRequest {
  std::string method;
  std::string path;
  std::string authorization;  // raw Authorization header
  std::string body;
  std::map<std::string, std::string> params;  // query string
};

struct HttpResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

inline constexpr int kApiSchemaVersion = 1;

int HttpStatusFor(const absl::Status& status);

class Service {
 public:
  // Loads the catalog under config.data_dir, opens ledger and workflow and
  // runs crash recovery. Fails when no dataset pair is registered.
  static absl::StatusOr<std::unique_ptr<Service>> Create(ServiceConfig config);
  ~Service();

  HttpResponse Handle(const HttpRequest& request);

  // Binds the listener; returns the bound port.
  absl::StatusOr<int> Bind();
  // Serves until Stop(). Requires a successful Bind().
  absl::Status Run();
  void Stop();

  const ServiceConfig& config() const { return config_; }
  Workflow& workflow() { return *workflow_; }
  Ledger& ledger() { return *ledger_; }
  std::size_t recovered() const { return recovered_; }

 private:
  Service(ServiceConfig config, LoadedCatalog catalog);

  absl::StatusOr<Json> Dispatch(const HttpRequest& request, HttpResponse& raw);
  absl::StatusOr<Principal> Authenticate(const HttpRequest& request) const;

  ServiceConfig config_;
  LoadedCatalog catalog_;
  std::map<std::string, Principal> token_digests_;
  std::unique_ptr<Ledger> ledger_;
  std::unique_ptr<Workflow> workflow_;
  std::unique_ptr<httplib::Server> server_;
  std::size_t recovered_ = 0;
};

}  // namespace vserver

#endif  // VSERVER_SERVICE_H_
