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

#include "vserver/mechanisms.h"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "absl/strings/str_cat.h"
#include "vserver/check.h"

namespace vserver {

absl::StatusOr<PrivacyCost> PrivacyCost::Create(double epsilon) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    return absl::InvalidArgumentError(
        absl::StrCat("epsilon must be positive and finite, got ", epsilon));
  }
  return PrivacyCost(epsilon);
}

absl::Status ValidateMechanismOptions(const MechanismOptions& options) {
  if (!(options.mean_sum_share > 0.0 && options.mean_sum_share < 1.0)) {
    return absl::InvalidArgumentError("mean_sum_share must lie in (0, 1)");
  }
  if (options.k_bins < 2) {
    return absl::InvalidArgumentError("k_bins must be at least 2");
  }
  if (!(options.lambda_min > 0.0)) {
    return absl::InvalidArgumentError("lambda_min must be positive");
  }
  return absl::OkStatus();
}

namespace {

std::size_t UniqueEntries(std::size_t dim) { return dim * (dim + 1) / 2; }

std::string FormatQuantileLevel(double q) { return absl::StrCat(q); }

std::size_t UpperIndex(std::size_t i, std::size_t j, std::size_t dim) {
  if (i > j) std::swap(i, j);
  return i * dim - i * (i - 1) / 2 + (j - i);
}

Eigen::MatrixXd ToMatrix(const std::vector<double>& upper, std::size_t dim) {
  Eigen::MatrixXd m(dim, dim);
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = i; j < dim; ++j) {
      m(i, j) = m(j, i) = upper[UpperIndex(i, j, dim)];
    }
  }
  return m;
}

std::size_t BinIndex(double unit, std::size_t k) {
  const auto index = static_cast<std::size_t>(unit * static_cast<double>(k));
  return std::min(index, k - 1);
}

// rng == nullptr (or noise-off mode) evaluates the exact counterpart.
MechanismResult Evaluate(const ExactStatistics& stats, double epsilon,
                         RandomSource* rng, const MechanismOptions& options) {
  const bool noisy = rng != nullptr && !rng->noise_off();
  MechanismResult out;
  out.query_id = stats.query_id;
  out.kind = stats.kind;
  out.epsilon = epsilon;
  out.bounds = stats.bounds;
  NoiseModel& model = out.noise_model;
  model.noise_off = !noisy;

  auto add_component = [&](std::string name, std::size_t dim,
                           double sensitivity, double share) -> double {
    const double scale = noisy ? sensitivity / share : 0.0;
    model.components.push_back({std::move(name), dim, sensitivity, share, scale});
    return scale;
  };
  auto draw = [&](double scale) { return noisy ? rng->Laplace(scale) : 0.0; };

  switch (stats.kind) {
    case QueryKind::kCount: {
      const double scale = add_component("count", 1, 1.0, epsilon);
      out.estimate = {stats.count + draw(scale)};
      out.labels = {"count"};
      break;
    }
    case QueryKind::kHistogram: {
      // Cells are disjoint, so every cell carries the full epsilon.
      const double scale =
          add_component("cell_counts", stats.cells.size(), 1.0, epsilon);
      out.estimate.reserve(stats.cells.size());
      for (double cell : stats.cells) out.estimate.push_back(cell + draw(scale));
      out.labels = stats.cell_labels;
      break;
    }
    case QueryKind::kMean: {
      const double sum_eps = epsilon * options.mean_sum_share;
      const double count_eps = epsilon - sum_eps;
      const double sum_scale = add_component("sum", 1, 1.0, sum_eps);
      const double count_scale = add_component("count", 1, 1.0, count_eps);
      const double noisy_sum = stats.unit_sum + draw(sum_scale);
      const double noisy_count = stats.count + draw(count_scale);
      model.denominator_clamped = noisy_count < 1.0;
      const double denom = std::max(noisy_count, 1.0);
      model.intermediates = {noisy_sum, noisy_count};
      out.estimate = {ScaleFromUnit(noisy_sum / denom, stats.bounds.front())};
      out.labels = {"mean"};
      break;
    }
    case QueryKind::kQuantile: {
      const double scale =
          add_component("bin_counts", stats.bins.size(), 1.0, epsilon);
      std::vector<double> bins = stats.bins;
      for (double& b : bins) b += draw(scale);
      model.k_bins = bins.size();
      bool clamped = false;
      const std::size_t bin = InvertBinnedCdf(bins, stats.q, &clamped);
      model.denominator_clamped = clamped;
      const Bounds& bounds = stats.bounds.front();
      const double width = bounds.width() / static_cast<double>(bins.size());
      out.estimate = {bounds.lower + (static_cast<double>(bin) + 0.5) * width};
      out.labels = {absl::StrCat("quantile_", FormatQuantileLevel(stats.q))};
      out.quantile_level = stats.q;
      model.intermediates = std::move(bins);
      break;
    }
    case QueryKind::kOls: {
      const std::size_t dim = stats.gram_dim;
      const std::size_t m = UniqueEntries(dim);
      const double scale =
          add_component("gram_entries", m, 1.0, epsilon / static_cast<double>(m));
      std::vector<double> gram = stats.gram;
      model.unique_entries = m;
      model.lambda_min = options.lambda_min;
      if (noisy) {
        for (double& g : gram) g += draw(scale);
        model.clipping_activated = ProjectToPsd(gram, dim, options.lambda_min);
      }
      OlsSolution solution = SolveAugmentedGram(gram, dim, stats.bounds);
      model.rank_deficient = solution.rank_deficient;
      model.intermediates = std::move(gram);
      out.estimate = std::move(solution.coefficients);
      out.labels.push_back("intercept");
      for (const std::string& name : stats.predictor_names) {
        out.labels.push_back(name);
      }
      break;
    }
  }
  return out;
}

}  // namespace

std::vector<double> L1Sensitivity(const Query& query, const Schema& schema) {
  (void)schema;
  switch (query.kind()) {
    case QueryKind::kCount:
    case QueryKind::kHistogram:
    case QueryKind::kQuantile:
      return {1.0};
    case QueryKind::kMean:
      return {1.0, 1.0};
    case QueryKind::kOls: {
      const std::size_t dim = std::get<OlsQuery>(query.body).predictors.size() + 2;
      return std::vector<double>(UniqueEntries(dim), 1.0);
    }
  }
  return {};
}

absl::StatusOr<ExactStatistics> ComputeStatistics(
    const Dataset& data, const Query& query, const MechanismOptions& options) {
  if (absl::Status s = ValidateQuery(data.schema(), query); !s.ok()) return s;
  if (absl::Status s = ValidateMechanismOptions(options); !s.ok()) return s;
  absl::StatusOr<std::vector<std::size_t>> rows =
      SelectRows(data, query.filter());
  if (!rows.ok()) return rows.status();
  const Schema& schema = data.schema();

  ExactStatistics stats;
  stats.query_id = query.query_id;
  stats.kind = query.kind();
  stats.count = static_cast<double>(rows->size());

  switch (query.kind()) {
    case QueryKind::kCount:
      break;
    case QueryKind::kHistogram: {
      const auto& q = std::get<HistogramQuery>(query.body);
      const std::size_t col = *schema.ColumnIndex(q.column);
      stats.cell_labels = schema.columns[col].categories;
      stats.cells.assign(stats.cell_labels.size(), 0.0);
      std::span<const double> values = data.column(col);
      for (std::size_t r : *rows) stats.cells[static_cast<std::size_t>(values[r])] += 1.0;
      break;
    }
    case QueryKind::kMean: {
      const auto& q = std::get<MeanQuery>(query.body);
      const std::size_t col = *schema.ColumnIndex(q.column);
      const Bounds bounds = schema.columns[col].bounds;
      stats.bounds = {bounds};
      std::span<const double> values = data.column(col);
      double sum = 0.0;
      for (std::size_t r : *rows) sum += ScaleToUnit(values[r], bounds);
      stats.unit_sum = sum;
      break;
    }
    case QueryKind::kQuantile: {
      const auto& q = std::get<QuantileQuery>(query.body);
      const std::size_t col = *schema.ColumnIndex(q.column);
      const Bounds bounds = schema.columns[col].bounds;
      stats.bounds = {bounds};
      stats.q = q.q;
      stats.bins.assign(options.k_bins, 0.0);
      std::span<const double> values = data.column(col);
      for (std::size_t r : *rows) {
        stats.bins[BinIndex(ScaleToUnit(values[r], bounds), options.k_bins)] += 1.0;
      }
      break;
    }
    case QueryKind::kOls: {
      const auto& q = std::get<OlsQuery>(query.body);
      std::vector<std::size_t> cols;
      for (const std::string& p : q.predictors) {
        cols.push_back(*schema.ColumnIndex(p));
        stats.predictor_names.push_back(p);
      }
      cols.push_back(*schema.ColumnIndex(q.outcome));
      for (std::size_t c : cols) stats.bounds.push_back(schema.columns[c].bounds);
      const std::size_t dim = cols.size() + 1;
      stats.gram_dim = dim;
      stats.gram.assign(UniqueEntries(dim), 0.0);
      std::vector<double> z(dim);
      z[0] = 1.0;
      for (std::size_t r : *rows) {
        for (std::size_t k = 0; k < cols.size(); ++k) {
          z[k + 1] = ScaleToUnit(data.value(r, cols[k]), stats.bounds[k]);
        }
        std::size_t idx = 0;
        for (std::size_t i = 0; i < dim; ++i) {
          for (std::size_t j = i; j < dim; ++j) stats.gram[idx++] += z[i] * z[j];
        }
      }
      break;
    }
  }
  return stats;
}

MechanismResult ExactResult(const ExactStatistics& stats,
                            const MechanismOptions& options) {
  return Evaluate(stats, 0.0, nullptr, options);
}

MechanismResult Perturb(const ExactStatistics& stats, PrivacyCost cost,
                        RandomSource& rng, const MechanismOptions& options) {
  return Evaluate(stats, cost.epsilon(), &rng, options);
}

absl::StatusOr<MechanismResult> RunMechanism(const Dataset& data,
                                             const Query& query,
                                             PrivacyCost cost,
                                             RandomSource& rng,
                                             const MechanismOptions& options) {
  absl::StatusOr<ExactStatistics> stats = ComputeStatistics(data, query, options);
  if (!stats.ok()) return stats.status();
  return Perturb(*stats, cost, rng, options);
}

absl::StatusOr<MechanismResult> DpCount(const Dataset& data,
                                        const Filter& filter, PrivacyCost cost,
                                        RandomSource& rng) {
  return RunMechanism(data, Query{"count", CountQuery{filter}}, cost, rng, {});
}

absl::StatusOr<MechanismResult> DpHistogram(const Dataset& data,
                                            const std::string& column,
                                            const Filter& filter,
                                            PrivacyCost cost,
                                            RandomSource& rng) {
  return RunMechanism(data, Query{"histogram", HistogramQuery{column, filter}},
                      cost, rng, {});
}

absl::StatusOr<MechanismResult> DpMean(const Dataset& data,
                                       const std::string& column,
                                       const Filter& filter, PrivacyCost cost,
                                       RandomSource& rng, double sum_share) {
  MechanismOptions options;
  options.mean_sum_share = sum_share;
  return RunMechanism(data, Query{"mean", MeanQuery{column, filter}}, cost, rng,
                      options);
}

absl::StatusOr<MechanismResult> DpQuantile(const Dataset& data,
                                           const std::string& column, double q,
                                           const Filter& filter,
                                           PrivacyCost cost, RandomSource& rng,
                                           std::size_t k_bins) {
  MechanismOptions options;
  options.k_bins = k_bins;
  return RunMechanism(data, Query{"quantile", QuantileQuery{column, q, filter}},
                      cost, rng, options);
}

absl::StatusOr<MechanismResult> DpOls(const Dataset& data,
                                      const std::string& outcome,
                                      const std::vector<std::string>& predictors,
                                      const Filter& filter, PrivacyCost cost,
                                      RandomSource& rng, double lambda_min) {
  MechanismOptions options;
  options.lambda_min = lambda_min;
  return RunMechanism(data, Query{"ols", OlsQuery{outcome, predictors, filter}},
                      cost, rng, options);
}

std::size_t InvertBinnedCdf(const std::vector<double>& bins, double q,
                            bool* total_clamped) {
  VSERVER_CHECK(!bins.empty(), "no bins");
  double total = 0.0;
  for (double b : bins) total += b;
  if (total_clamped != nullptr) *total_clamped = total < 1.0;
  const double target = q * std::max(total, 1.0);
  double cumulative = 0.0;
  for (std::size_t i = 0; i < bins.size(); ++i) {
    cumulative += bins[i];
    if (cumulative >= target) return i;
  }
  return bins.size() - 1;
}

bool ProjectToPsd(std::vector<double>& gram_upper, std::size_t dim,
                  double floor) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(
      ToMatrix(gram_upper, dim));
  Eigen::VectorXd eigenvalues = solver.eigenvalues();
  if (eigenvalues.minCoeff() >= floor) return false;
  eigenvalues = eigenvalues.cwiseMax(floor);
  const Eigen::MatrixXd& v = solver.eigenvectors();
  const Eigen::MatrixXd projected = v * eigenvalues.asDiagonal() * v.transpose();
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = i; j < dim; ++j) {
      gram_upper[UpperIndex(i, j, dim)] = projected(i, j);
    }
  }
  return true;
}

OlsSolution SolveAugmentedGram(const std::vector<double>& gram_upper,
                               std::size_t dim,
                               const std::vector<Bounds>& bounds) {
  VSERVER_CHECK(dim >= 3 && bounds.size() == dim - 1, "bad OLS dimensions");
  const Eigen::MatrixXd gram = ToMatrix(gram_upper, dim);
  const std::size_t p = dim - 1;  // intercept + d predictors
  const Eigen::MatrixXd xtx = gram.topLeftCorner(p, p);
  const Eigen::VectorXd xty = gram.col(dim - 1).head(p);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(xtx);
  const Eigen::VectorXd& eigenvalues = solver.eigenvalues();
  const double largest = eigenvalues.cwiseAbs().maxCoeff();
  const double tolerance = std::max(largest * 1e-10, 1e-300);
  OlsSolution solution;
  Eigen::VectorXd inverse(p);
  for (std::size_t i = 0; i < p; ++i) {
    if (eigenvalues(i) > tolerance) {
      inverse(i) = 1.0 / eigenvalues(i);
    } else {
      inverse(i) = 0.0;
      solution.rank_deficient = true;
    }
  }
  const Eigen::MatrixXd& v = solver.eigenvectors();
  const Eigen::VectorXd unit_beta =
      v * inverse.asDiagonal() * (v.transpose() * xty);

  // y = Ly + wy * (b0 + sum_j bj * (xj - Lj) / wj)
  const Bounds& y = bounds.back();
  double intercept = unit_beta(0);
  solution.coefficients.assign(p, 0.0);
  for (std::size_t j = 1; j < p; ++j) {
    const Bounds& x = bounds[j - 1];
    solution.coefficients[j] = y.width() * unit_beta(j) / x.width();
    intercept -= unit_beta(j) * x.lower / x.width();
  }
  solution.coefficients[0] = y.lower + y.width() * intercept;
  return solution;
}

}  // namespace vserver
