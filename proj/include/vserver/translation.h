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

// Accuracy-first parameter translation: researchers state how close they
// need an answer to be (alpha, at confidence 1 - beta) and this module finds
// the epsilon that delivers it. Counts and histograms invert the Laplace
// tail in closed form; means, quantiles and regressions are calibrated by
// simulation on public synthetic data only.

#ifndef VSERVER_TRANSLATION_H_
#define VSERVER_TRANSLATION_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "absl/status/statusor.h"
#include "vserver/domain.h"
#include "vserver/mechanisms.h"

namespace vserver {

enum class HistogramTarget { kWholeQuery, kPerCell };

const char* HistogramTargetName(HistogramTarget target);

// |estimate - noise-off value| <= alpha with probability >= 1 - beta. Alpha
// is in the statistic's units, except for quantiles where it is a fraction of
// rank (0.02 = within two percentile points).
struct AccuracySpec {
  double alpha = 1.0;
  double beta = 0.05;
  HistogramTarget target = HistogramTarget::kWholeQuery;

  bool operator==(const AccuracySpec&) const = default;
};

absl::Status ValidateAccuracySpec(const AccuracySpec& spec);

enum class TranslationMethod { kClosedForm, kSimulation };

const char* TranslationMethodName(TranslationMethod method);

struct AttainmentPoint {
  double epsilon = 0.0;
  double attainment = 0.0;

  bool operator==(const AttainmentPoint&) const = default;
};

struct SimulationDetail {
  std::size_t n_sims = 0;
  double bracket_lo = 0.0;
  double bracket_hi = 0.0;
  double target_attainment = 0.0;
  double achieved_attainment = 0.0;
  std::vector<AttainmentPoint> curve;  // every evaluated candidate, by epsilon

  bool operator==(const SimulationDetail&) const = default;
};

struct TranslationResult {
  std::string query_id;
  bool feasible = true;
  double epsilon = 0.0;  // meaningful only when feasible
  TranslationMethod method = TranslationMethod::kClosedForm;
  std::optional<SimulationDetail> simulation;
  std::string message;  // why the target could not be met

  bool operator==(const TranslationResult&) const = default;
};

struct TranslationOptions {
  double epsilon_lo = 0.001;
  double epsilon_hi = 100.0;
  std::size_t n_sims = 2000;
  double tolerance = 0.02;
  std::size_t max_iterations = 60;
  // Bisection stops once the bracket ratio hi/lo falls below 1 + this.
  double relative_precision = 1e-3;
  MechanismOptions mechanism;
};

absl::Status ValidateTranslationOptions(const TranslationOptions& options);

// epsilon = ln(1/beta) / alpha, the unique epsilon at which
// P(|Laplace(1/epsilon)| > alpha) = beta.
absl::StatusOr<PrivacyCost> EpsilonForCount(double alpha, double beta);

// Per-cell target: as for a count. Whole-query target (every cell within
// alpha at once): union bound over k cells, epsilon = ln(k/beta) / alpha.
absl::StatusOr<PrivacyCost> EpsilonForHistogram(double alpha, double beta,
                                                std::size_t k_cells,
                                                HistogramTarget target);

// Fraction of n_sims seeded releases at the given epsilon whose error against
// the noise-off value is within alpha. Error is the absolute difference for
// means, the maximum over coefficients for OLS and the rank-fraction
// displacement for quantiles.
double SimulatedAttainment(const ExactStatistics& stats, double alpha,
                           double epsilon, std::size_t n_sims,
                           std::uint64_t seed,
                           const MechanismOptions& options);

// Bisection on log(epsilon) for the smallest epsilon whose simulated
// attainment reaches the middle of [1 - beta, 1 - beta + tolerance]. All
// candidates share one random stream, so the result is deterministic in the
// seed. If even epsilon_hi misses 1 - beta the result is marked infeasible
// and carries the measured curve.
absl::StatusOr<TranslationResult> EpsilonBySimulation(
    const Query& query, const AccuracySpec& spec,
    const PublicDataset& synthetic, const TranslationOptions& options,
    std::uint64_t seed);

// Closed form for counts and histograms, simulation for everything else.
absl::StatusOr<TranslationResult> Translate(const Query& query,
                                            const AccuracySpec& spec,
                                            const PublicDataset& synthetic,
                                            const TranslationOptions& options,
                                            std::uint64_t seed);

// True when no point drops more than `slack` below an earlier point.
bool AttainmentCurveMonotone(const std::vector<AttainmentPoint>& curve,
                             double slack);

struct PreviewRow {
  std::string query_id;
  QueryKind kind = QueryKind::kCount;
  std::vector<std::string> labels;
  std::vector<double> synthetic_value;  // noise-off on synthetic data
  std::vector<double> noisy_draw;       // empty when translation infeasible
  double ci_half_width = 0.0;
  std::string ci_units;
  AccuracySpec spec;
  TranslationResult translation;

  bool operator==(const PreviewRow&) const = default;
};

// What each requested output would look like if produced from the synthetic
// data at the translated epsilon. Touches no confidential data and spends no
// budget. Infeasible translations become rows rather than errors.
absl::StatusOr<std::vector<PreviewRow>> PreviewOutputs(
    const std::vector<Query>& queries, const std::vector<AccuracySpec>& specs,
    const PublicDataset& synthetic, const TranslationOptions& options,
    std::uint64_t seed);

// CSV rendering of a preview table, one line per released component.
std::string PreviewToCsv(const std::vector<PreviewRow>& rows,
                         bool disclose_epsilon);

}  // namespace vserver

#endif  // VSERVER_TRANSLATION_H_
