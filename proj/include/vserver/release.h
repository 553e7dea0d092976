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

// Post-processing of mechanism outputs into researcher-facing releases:
// confidence intervals for the injected noise, a results table, and
// publication methods text. Nothing here reads data or release noise.

#ifndef VSERVER_RELEASE_H_
#define VSERVER_RELEASE_H_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "absl/status/statusor.h"
#include "vserver/domain.h"
#include "vserver/mechanisms.h"
#include "vserver/translation.h"

namespace vserver {

enum class IntervalMethod { kLaplaceTail, kParametricBootstrap, kNoiseOff };

const char* IntervalMethodName(IntervalMethod method);

struct ConfidenceInterval {
  std::vector<double> low;   // one per estimate coordinate
  std::vector<double> high;
  double confidence = 0.95;
  IntervalMethod method = IntervalMethod::kLaplaceTail;
  std::size_t replicates = 0;  // bootstrap only
  bool test_mode = false;      // set for noise-off results (zero width)

  bool operator==(const ConfidenceInterval&) const = default;
};

struct IntervalOptions {
  std::size_t replicates = 10000;
  std::uint64_t seed = 0;
};

// Counts and histogram cells: estimate +- scale * ln(1/beta). Mean, quantile
// and OLS: basic (pivot) parametric bootstrap that re-runs the recorded noise
// model around the released noisy statistics.
absl::StatusOr<ConfidenceInterval> ComputeConfidenceInterval(
    const MechanismResult& result, double beta,
    const IntervalOptions& options = {});

// Rebuilds the statistics a result was computed from, with the released noisy
// intermediates standing in for the exact values.
absl::StatusOr<ExactStatistics> StatisticsFromResult(const MechanismResult& result);
MechanismOptions OptionsFromResult(const MechanismResult& result);

// Plain-language description of what a query computes.
std::string DescribeQuery(const Query& query);
// Units of each estimate coordinate.
std::vector<std::string> EstimateUnits(const Query& query);

struct ReleasedQuery {
  Query query;
  AccuracySpec spec;
  MechanismResult result;
  ConfidenceInterval interval;

  bool operator==(const ReleasedQuery&) const = default;
};

struct Release {
  std::string project_id;
  std::string dataset_id;
  std::string title;
  int revision = 1;
  std::int64_t created_ms = 0;
  bool disclose_epsilon = true;
  std::vector<ReleasedQuery> queries;

  bool operator==(const Release&) const = default;
};

// CSV with header query_id,statistic,estimate,ci_low,ci_high,confidence,units.
std::string RenderResultsCsv(const Release& release);
std::string RenderMethodsText(const Release& release);
// Results table, disclosure block and methods text as one plain-text document.
std::string RenderReleaseDocument(const Release& release);

}  // namespace vserver

#endif  // VSERVER_RELEASE_H_
