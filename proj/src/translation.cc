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

#include "vserver/translation.h"

#include <algorithm>
#include <cmath>

#include "absl/strings/str_cat.h"
#include "vserver/csv.h"
#include "vserver/random.h"

namespace vserver {

const char* HistogramTargetName(HistogramTarget target) {
  return target == HistogramTarget::kWholeQuery ? "whole_query" : "per_cell";
}

const char* TranslationMethodName(TranslationMethod method) {
  return method == TranslationMethod::kClosedForm ? "closed_form" : "simulation";
}

absl::Status ValidateAccuracySpec(const AccuracySpec& spec) {
  if (!(spec.alpha > 0.0) || !std::isfinite(spec.alpha)) {
    return absl::InvalidArgumentError("accuracy: alpha must be positive");
  }
  if (!(spec.beta > 0.0 && spec.beta < 1.0)) {
    return absl::InvalidArgumentError("accuracy: beta must lie in (0, 1)");
  }
  return absl::OkStatus();
}

absl::Status ValidateTranslationOptions(const TranslationOptions& options) {
  if (!(options.epsilon_lo > 0.0 && options.epsilon_lo < options.epsilon_hi) ||
      !std::isfinite(options.epsilon_hi)) {
    return absl::InvalidArgumentError(
        "translation: need 0 < epsilon_lo < epsilon_hi < inf");
  }
  if (options.n_sims < 10) {
    return absl::InvalidArgumentError("translation: n_sims must be >= 10");
  }
  if (!(options.tolerance > 0.0 && options.tolerance < 1.0)) {
    return absl::InvalidArgumentError("translation: tolerance must lie in (0, 1)");
  }
  if (!(options.relative_precision > 0.0) || options.max_iterations == 0) {
    return absl::InvalidArgumentError("translation: bad bisection limits");
  }
  return ValidateMechanismOptions(options.mechanism);
}

absl::StatusOr<PrivacyCost> EpsilonForCount(double alpha, double beta) {
  if (absl::Status s = ValidateAccuracySpec({alpha, beta}); !s.ok()) return s;
  return PrivacyCost::Create(std::log(1.0 / beta) / alpha);
}

absl::StatusOr<PrivacyCost> EpsilonForHistogram(double alpha, double beta,
                                                std::size_t k_cells,
                                                HistogramTarget target) {
  if (absl::Status s = ValidateAccuracySpec({alpha, beta}); !s.ok()) return s;
  if (k_cells == 0) return absl::InvalidArgumentError("histogram: no cells");
  const double k =
      target == HistogramTarget::kWholeQuery ? static_cast<double>(k_cells) : 1.0;
  return PrivacyCost::Create(std::log(k / beta) / alpha);
}

double SimulatedAttainment(const ExactStatistics& stats, double alpha,
                           double epsilon, std::size_t n_sims,
                           std::uint64_t seed,
                           const MechanismOptions& options) {
  const PrivacyCost cost = *PrivacyCost::Create(epsilon);
  const MechanismResult exact = ExactResult(stats, options);

  // Quantile error is measured in rank: exact cumulative share of the
  // synthetic records up to the selected bin.
  std::vector<double> rank;
  std::size_t exact_bin = 0;
  if (stats.kind == QueryKind::kQuantile) {
    const double n = std::max(stats.count, 1.0);
    double cumulative = 0.0;
    for (double b : stats.bins) {
      cumulative += b;
      rank.push_back(cumulative / n);
    }
    exact_bin = InvertBinnedCdf(stats.bins, stats.q);
  }

  RandomSource rng = RandomSource::Seeded(seed);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n_sims; ++i) {
    const MechanismResult r = Perturb(stats, cost, rng, options);
    double error = 0.0;
    if (stats.kind == QueryKind::kQuantile) {
      const std::size_t bin =
          InvertBinnedCdf(r.noise_model.intermediates, stats.q);
      error = std::fabs(rank[bin] - rank[exact_bin]);
    } else {
      for (std::size_t j = 0; j < r.estimate.size(); ++j) {
        error = std::max(error, std::fabs(r.estimate[j] - exact.estimate[j]));
      }
    }
    hits += error <= alpha;
  }
  return static_cast<double>(hits) / static_cast<double>(n_sims);
}

absl::StatusOr<TranslationResult> EpsilonBySimulation(
    const Query& query, const AccuracySpec& spec,
    const PublicDataset& synthetic, const TranslationOptions& options,
    std::uint64_t seed) {
  if (absl::Status s = ValidateAccuracySpec(spec); !s.ok()) return s;
  if (absl::Status s = ValidateTranslationOptions(options); !s.ok()) return s;
  if (query.kind() == QueryKind::kCount ||
      query.kind() == QueryKind::kHistogram) {
    return absl::InvalidArgumentError(
        "counts and histograms translate in closed form");
  }
  absl::StatusOr<ExactStatistics> stats =
      ComputeStatistics(synthetic.data(), query, options.mechanism);
  if (!stats.ok()) return stats.status();

  const double floor = 1.0 - spec.beta;
  const double target = floor + options.tolerance / 2.0;
  SimulationDetail detail;
  detail.n_sims = options.n_sims;
  detail.bracket_lo = options.epsilon_lo;
  detail.bracket_hi = options.epsilon_hi;
  detail.target_attainment = target;
  auto measure = [&](double eps) {
    const double a = SimulatedAttainment(*stats, spec.alpha, eps, options.n_sims,
                                         seed, options.mechanism);
    detail.curve.push_back({eps, a});
    return a;
  };

  TranslationResult result;
  result.query_id = query.query_id;
  result.method = TranslationMethod::kSimulation;

  double hi = options.epsilon_hi;
  double attained_hi = measure(hi);
  if (attained_hi < floor) {
    result.feasible = false;
    result.message = absl::StrCat(
        "accuracy target unattainable: attainment ", attained_hi, " at the ",
        "largest allowed budget is below ", floor,
        "; relax alpha or beta");
  } else {
    double lo = options.epsilon_lo;
    const double attained_lo = measure(lo);
    if (attained_lo >= target) {
      hi = lo;
      attained_hi = attained_lo;
    } else {
      for (std::size_t i = 0; i < options.max_iterations &&
                              hi / lo > 1.0 + options.relative_precision;
           ++i) {
        const double mid = std::sqrt(lo * hi);
        const double a = measure(mid);
        if (a >= target) {
          hi = mid;
          attained_hi = a;
        } else {
          lo = mid;
        }
      }
    }
    result.epsilon = hi;
    detail.achieved_attainment = attained_hi;
  }
  std::sort(detail.curve.begin(), detail.curve.end(),
            [](const AttainmentPoint& a, const AttainmentPoint& b) {
              return a.epsilon < b.epsilon;
            });
  result.simulation = std::move(detail);
  return result;
}

absl::StatusOr<TranslationResult> Translate(const Query& query,
                                            const AccuracySpec& spec,
                                            const PublicDataset& synthetic,
                                            const TranslationOptions& options,
                                            std::uint64_t seed) {
  if (absl::Status s = ValidateQuery(synthetic.schema(), query); !s.ok()) {
    return s;
  }
  if (absl::Status s = ValidateAccuracySpec(spec); !s.ok()) return s;
  absl::StatusOr<PrivacyCost> closed = absl::UnimplementedError("");
  if (query.kind() == QueryKind::kCount) {
    closed = EpsilonForCount(spec.alpha, spec.beta);
  } else if (query.kind() == QueryKind::kHistogram) {
    const auto& h = std::get<HistogramQuery>(query.body);
    closed = EpsilonForHistogram(
        spec.alpha, spec.beta,
        synthetic.schema().FindColumn(h.column)->categories.size(), spec.target);
  } else {
    return EpsilonBySimulation(query, spec, synthetic, options, seed);
  }
  if (!closed.ok()) return closed.status();
  TranslationResult result;
  result.query_id = query.query_id;
  result.epsilon = closed->epsilon();
  result.method = TranslationMethod::kClosedForm;
  return result;
}

bool AttainmentCurveMonotone(const std::vector<AttainmentPoint>& curve,
                             double slack) {
  double best = -1.0;
  for (const AttainmentPoint& p : curve) {
    if (p.attainment < best - slack) return false;
    best = std::max(best, p.attainment);
  }
  return true;
}

absl::StatusOr<std::vector<PreviewRow>> PreviewOutputs(
    const std::vector<Query>& queries, const std::vector<AccuracySpec>& specs,
    const PublicDataset& synthetic, const TranslationOptions& options,
    std::uint64_t seed) {
  if (queries.size() != specs.size()) {
    return absl::InvalidArgumentError("one accuracy spec per query required");
  }
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (absl::Status s = ValidateQuery(synthetic.schema(), queries[i]); !s.ok()) {
      return s;
    }
    if (absl::Status s = ValidateAccuracySpec(specs[i]); !s.ok()) {
      return absl::InvalidArgumentError(
          absl::StrCat(queries[i].query_id, ": ", s.message()));
    }
  }
  std::vector<PreviewRow> rows;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const Query& query = queries[i];
    absl::StatusOr<ExactStatistics> stats =
        ComputeStatistics(synthetic.data(), query, options.mechanism);
    if (!stats.ok()) return stats.status();
    absl::StatusOr<TranslationResult> translation =
        Translate(query, specs[i], synthetic, options,
                  DeriveSeed(seed, "translate:" + query.query_id));
    if (!translation.ok()) return translation.status();

    PreviewRow row;
    row.query_id = query.query_id;
    row.kind = query.kind();
    row.spec = specs[i];
    const MechanismResult exact = ExactResult(*stats, options.mechanism);
    row.labels = exact.labels;
    row.synthetic_value = exact.estimate;
    row.ci_half_width = specs[i].alpha;
    row.ci_units = query.kind() == QueryKind::kQuantile ? "rank fraction"
                                                        : "statistic units";
    if (translation->feasible) {
      RandomSource rng =
          RandomSource::Seeded(DeriveSeed(seed, "draw:" + query.query_id));
      row.noisy_draw = Perturb(*stats, *PrivacyCost::Create(translation->epsilon),
                               rng, options.mechanism)
                           .estimate;
    }
    row.translation = *std::move(translation);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string PreviewToCsv(const std::vector<PreviewRow>& rows,
                         bool disclose_epsilon) {
  std::string out =
      "query_id,statistic,synthetic_value,noisy_preview,ci_half_width,"
      "ci_units,confidence,feasible";
  if (disclose_epsilon) out += ",epsilon";
  out += "\n";
  for (const PreviewRow& row : rows) {
    for (std::size_t j = 0; j < row.synthetic_value.size(); ++j) {
      out += EscapeCsvField(row.query_id) + ",";
      out += EscapeCsvField(absl::StrCat(QueryKindName(row.kind), ":",
                                         row.labels[j])) + ",";
      out += FormatDouble(row.synthetic_value[j]) + ",";
      if (!row.noisy_draw.empty()) out += FormatDouble(row.noisy_draw[j]);
      out += "," + FormatDouble(row.ci_half_width) + "," + row.ci_units + ",";
      out += FormatDouble(1.0 - row.spec.beta) + ",";
      out += row.translation.feasible ? "true" : "false";
      if (disclose_epsilon) {
        out += ",";
        if (row.translation.feasible) out += FormatDouble(row.translation.epsilon);
      }
      out += "\n";
    }
  }
  return out;
}

}  // namespace vserver
