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

// JSON encodings of the domain, mechanism, translation and release types, used
// for persistence and the HTTP API.

#ifndef VSERVER_CODEC_H_
#define VSERVER_CODEC_H_

#include "absl/status/statusor.h"
#include "json.hpp"
#include "vserver/domain.h"
#include "vserver/mechanisms.h"
#include "vserver/release.h"
#include "vserver/translation.h"

namespace vserver {

using Json = nlohmann::json;

// Parses text, mapping syntax errors to InvalidArgument.
absl::StatusOr<Json> ParseJson(std::string_view text);

Json SchemaToJson(const Schema& schema);
absl::StatusOr<Schema> SchemaFromJson(const Json& j);

Json FilterToJson(const Filter& filter);
absl::StatusOr<Filter> FilterFromJson(const Json& j);

Json QueryToJson(const Query& query);
absl::StatusOr<Query> QueryFromJson(const Json& j);

Json AccuracySpecToJson(const AccuracySpec& spec);
absl::StatusOr<AccuracySpec> AccuracySpecFromJson(const Json& j);

// With disclose_epsilon false, every epsilon-bearing field is left out.
Json TranslationToJson(const TranslationResult& t, bool disclose_epsilon = true);
absl::StatusOr<TranslationResult> TranslationFromJson(const Json& j);

Json MechanismResultToJson(const MechanismResult& r);
absl::StatusOr<MechanismResult> MechanismResultFromJson(const Json& j);

Json IntervalToJson(const ConfidenceInterval& ci);
absl::StatusOr<ConfidenceInterval> IntervalFromJson(const Json& j);

Json ReleaseToJson(const Release& release);
absl::StatusOr<Release> ReleaseFromJson(const Json& j);

// Release as shown to researchers: estimates, intervals and units, plus the
// privacy parameters only when the release discloses them.
Json ReleaseToPublicJson(const Release& release);

}  // namespace vserver

#endif  // VSERVER_CODEC_H_
