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

// Pure epsilon-DP estimators (Laplace family, add/remove-one adjacency) for
// the five query variants. Every estimator is split into an exact pass over
// the data that produces sufficient statistics and a noising pass over those
// statistics, so the same statistics can be re-noised cheaply by simulations
// and the exact pass doubles as the noise-off oracle.

#ifndef VSERVER_MECHANISMS_H_
#define VSERVER_MECHANISMS_H_

#include <cstddef>
#include <string>
#include <vector>

#include "absl/status/statusor.h"
#include "vserver/domain.h"
#include "vserver/random.h"

namespace vserver {

class PrivacyCost {
 public:
  static absl::StatusOr<PrivacyCost> Create(double epsilon);
  double epsilon() const { return epsilon_; }

 private:
  explicit PrivacyCost(double epsilon) : epsilon_(epsilon) {}
  double epsilon_;
};

struct MechanismOptions {
  // Fraction of a mean query's epsilon spent on the noisy sum; the rest goes
  // to the noisy count.
  double mean_sum_share = 0.5;
  std::size_t k_bins = 1024;
  // Eigenvalue floor of the PSD projection applied to a noisy Gram matrix.
  double lambda_min = 1e-6;
};

absl::Status ValidateMechanismOptions(const MechanismOptions& options);

// One independently perturbed group of intermediate quantities.
struct NoiseComponent {
  std::string name;
  std::size_t dimension = 1;
  double sensitivity = 1.0;  // L1, per entry
  double epsilon = 0.0;      // share of the query budget
  double scale = 0.0;        // Laplace scale; 0 when noise is off

  bool operator==(const NoiseComponent&) const = default;
};

struct NoiseModel {
  std::string family = "laplace";
  bool noise_off = false;
  std::vector<NoiseComponent> components;
  // Released noisy intermediates, needed by post-processing:
  //   mean      [noisy unit-scaled sum, noisy count]
  //   quantile  noisy bin counts
  //   ols       upper triangle of the projected noisy augmented Gram matrix
  std::vector<double> intermediates;
  std::size_t k_bins = 0;
  std::size_t unique_entries = 0;
  double lambda_min = 0.0;
  bool clipping_activated = false;
  bool rank_deficient = false;
  bool denominator_clamped = false;

  bool operator==(const NoiseModel&) const = default;
};

struct MechanismResult {
  std::string query_id;
  QueryKind kind = QueryKind::kCount;
  // Scalar, per-cell vector, or [intercept, slope_1, ..., slope_d].
  std::vector<double> estimate;
  std::vector<std::string> labels;
  NoiseModel noise_model;
  double epsilon = 0.0;
  // Public context for post-processing: value bounds of the analysed numeric
  // columns (OLS: predictors then outcome) and the quantile level.
  std::vector<Bounds> bounds;
  double quantile_level = 0.0;

  bool operator==(const MechanismResult&) const = default;
};

// Per-component L1 sensitivity under add/remove-one adjacency, with numeric
// variables scaled to [0, 1]. Count, histogram and quantile: {1}. Mean:
// {sum 1, count 1}. OLS: 1 for each of the (d+2)(d+3)/2 unique augmented
// Gram entries.
std::vector<double> L1Sensitivity(const Query& query, const Schema& schema);

// Exact sufficient statistics of a query on a dataset.
struct ExactStatistics {
  std::string query_id;
  QueryKind kind = QueryKind::kCount;
  double count = 0.0;
  std::vector<double> cells;               // histogram cell counts
  std::vector<std::string> cell_labels;
  double unit_sum = 0.0;                   // mean
  std::vector<double> bins;                // quantile bin counts
  double q = 0.0;
  std::size_t gram_dim = 0;                // ols: d + 2
  std::vector<double> gram;                // ols: upper triangle, row-major
  std::vector<std::string> predictor_names;
  std::vector<Bounds> bounds;
};

absl::StatusOr<ExactStatistics> ComputeStatistics(
    const Dataset& data, const Query& query, const MechanismOptions& options);

// The noise-off value of a query: the exact counterpart of each mechanism.
MechanismResult ExactResult(const ExactStatistics& stats,
                            const MechanismOptions& options);

// One private release of the statistics at the given cost.
MechanismResult Perturb(const ExactStatistics& stats, PrivacyCost cost,
                        RandomSource& rng, const MechanismOptions& options);

absl::StatusOr<MechanismResult> RunMechanism(const Dataset& data,
                                             const Query& query,
                                             PrivacyCost cost,
                                             RandomSource& rng,
                                             const MechanismOptions& options);

absl::StatusOr<MechanismResult> DpCount(const Dataset& data,
                                        const Filter& filter, PrivacyCost cost,
                                        RandomSource& rng);
absl::StatusOr<MechanismResult> DpHistogram(const Dataset& data,
                                            const std::string& column,
                                            const Filter& filter,
                                            PrivacyCost cost,
                                            RandomSource& rng);
absl::StatusOr<MechanismResult> DpMean(const Dataset& data,
                                       const std::string& column,
                                       const Filter& filter, PrivacyCost cost,
                                       RandomSource& rng,
                                       double sum_share = 0.5);
absl::StatusOr<MechanismResult> DpQuantile(const Dataset& data,
                                           const std::string& column, double q,
                                           const Filter& filter,
                                           PrivacyCost cost, RandomSource& rng,
                                           std::size_t k_bins = 1024);
absl::StatusOr<MechanismResult> DpOls(const Dataset& data,
                                      const std::string& outcome,
                                      const std::vector<std::string>& predictors,
                                      const Filter& filter, PrivacyCost cost,
                                      RandomSource& rng,
                                      double lambda_min = 1e-6);

// Building blocks shared with post-processing.

// Index of the bin selected by inverting the cumulative distribution of
// (possibly noisy) bin counts at level q of their total, clamped below at 1.
std::size_t InvertBinnedCdf(const std::vector<double>& bins, double q,
                            bool* total_clamped = nullptr);

struct OlsSolution {
  std::vector<double> coefficients;  // original units, intercept first
  bool rank_deficient = false;
};

// Solves the normal equations held in an augmented Gram matrix over
// unit-scaled [1, x_1..x_d, y] and maps the coefficients back to original
// units. Singular systems fall back to the pseudo-inverse.
OlsSolution SolveAugmentedGram(const std::vector<double>& gram_upper,
                               std::size_t dim,
                               const std::vector<Bounds>& bounds);

// Nearest symmetric matrix whose eigenvalues are all >= floor. Returns true
// when any eigenvalue had to be raised.
bool ProjectToPsd(std::vector<double>& gram_upper, std::size_t dim,
                  double floor);

}  // namespace vserver

#endif  // VSERVER_MECHANISMS_H_
