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

#include "vserver/release.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_join.h"
#include "vserver/csv.h"
#include "vserver/numeric.h"
#include "vserver/random.h"

namespace vserver {

namespace {

// Presentation rounding; the stored release keeps full precision.
std::string Rounded(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string Percent(double confidence) {
  return absl::StrCat(Rounded(100.0 * confidence), "%");
}

double TypeSevenQuantile(const std::vector<double>& sorted, double p) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::size_t GramDimension(std::size_t unique_entries) {
  std::size_t dim = 0;
  while (dim * (dim + 1) / 2 < unique_entries) ++dim;
  return dim * (dim + 1) / 2 == unique_entries ? dim : 0;
}

std::string DescribePredicate(const Predicate& p) {
  switch (p.op) {
    case FilterOp::kEq: return absl::StrCat(p.column, " = ", p.label);
    case FilterOp::kNe: return absl::StrCat(p.column, " != ", p.label);
    case FilterOp::kGe: return absl::StrCat(p.column, " >= ", FormatDouble(p.lo));
    case FilterOp::kLe: return absl::StrCat(p.column, " <= ", FormatDouble(p.hi));
    case FilterOp::kRange:
      return absl::StrCat(p.column, " between ", FormatDouble(p.lo), " and ",
                          FormatDouble(p.hi));
  }
  return p.column;
}

std::string DescribeFilter(const Filter& filter) {
  if (filter.conjuncts.empty()) return "all records";
  std::vector<std::string> parts;
  for (const Predicate& p : filter.conjuncts) parts.push_back(DescribePredicate(p));
  return absl::StrCat("records with ", absl::StrJoin(parts, " and "));
}

}  // namespace

const char* IntervalMethodName(IntervalMethod method) {
  switch (method) {
    case IntervalMethod::kLaplaceTail: return "laplace_tail";
    case IntervalMethod::kParametricBootstrap: return "parametric_bootstrap";
    case IntervalMethod::kNoiseOff: return "noise_off";
  }
  return "?";
}

absl::StatusOr<ExactStatistics> StatisticsFromResult(const MechanismResult& result) {
  const NoiseModel& model = result.noise_model;
  ExactStatistics stats;
  stats.query_id = result.query_id;
  stats.kind = result.kind;
  stats.bounds = result.bounds;
  auto incomplete = [] {
    return absl::InvalidArgumentError("result lacks a complete noise model");
  };
  switch (result.kind) {
    case QueryKind::kCount:
      if (result.estimate.size() != 1) return incomplete();
      stats.count = result.estimate[0];
      break;
    case QueryKind::kHistogram:
      stats.cells = result.estimate;
      stats.cell_labels = result.labels;
      break;
    case QueryKind::kMean:
      if (model.intermediates.size() != 2 || stats.bounds.size() != 1) return incomplete();
      stats.unit_sum = model.intermediates[0];
      stats.count = model.intermediates[1];
      break;
    case QueryKind::kQuantile:
      if (model.intermediates.size() < 2 || stats.bounds.size() != 1) return incomplete();
      stats.bins = model.intermediates;
      stats.q = result.quantile_level;
      break;
    case QueryKind::kOls: {
      const std::size_t dim = GramDimension(model.intermediates.size());
      if (dim < 2 || result.labels.size() + 1 != dim ||
          stats.bounds.size() + 1 != dim) {
        return incomplete();
      }
      stats.gram_dim = dim;
      stats.gram = model.intermediates;
      stats.predictor_names.assign(result.labels.begin() + 1, result.labels.end());
      break;
    }
  }
  return stats;
}

MechanismOptions OptionsFromResult(const MechanismResult& result) {
  MechanismOptions options;
  const NoiseModel& model = result.noise_model;
  if (result.kind == QueryKind::kMean && result.epsilon > 0 &&
      !model.components.empty()) {
    options.mean_sum_share = model.components[0].epsilon / result.epsilon;
  }
  if (model.k_bins >= 2) options.k_bins = model.k_bins;
  if (model.lambda_min > 0) options.lambda_min = model.lambda_min;
  return options;
}

absl::StatusOr<ConfidenceInterval> ComputeConfidenceInterval(
    const MechanismResult& result, double beta, const IntervalOptions& options) {
  if (!(beta > 0.0 && beta < 1.0)) {
    return absl::InvalidArgumentError("beta must lie in (0, 1)");
  }
  ConfidenceInterval ci;
  ci.confidence = 1.0 - beta;
  if (result.noise_model.noise_off) {
    ci.method = IntervalMethod::kNoiseOff;
    ci.test_mode = true;
    ci.low = ci.high = result.estimate;
    return ci;
  }
  if (result.noise_model.components.empty()) {
    return absl::InvalidArgumentError("result lacks a complete noise model");
  }

  if (result.kind == QueryKind::kCount || result.kind == QueryKind::kHistogram) {
    const double half = result.noise_model.components[0].scale * std::log(1.0 / beta);
    ci.method = IntervalMethod::kLaplaceTail;
    for (double e : result.estimate) {
      ci.low.push_back(e - half);
      ci.high.push_back(e + half);
    }
    return ci;
  }

  if (options.replicates < 2) {
    return absl::InvalidArgumentError("bootstrap needs at least two replicates");
  }
  absl::StatusOr<ExactStatistics> stats = StatisticsFromResult(result);
  if (!stats.ok()) return stats.status();
  absl::StatusOr<PrivacyCost> cost = PrivacyCost::Create(result.epsilon);
  if (!cost.ok()) return cost.status();
  const MechanismOptions mech = OptionsFromResult(result);
  const std::vector<double> center = ExactResult(*stats, mech).estimate;
  const std::size_t dims = center.size();
  std::vector<std::vector<double>> displacement(dims);
  for (auto& d : displacement) d.reserve(options.replicates);
  RandomSource rng = RandomSource::Seeded(options.seed);
  for (std::size_t r = 0; r < options.replicates; ++r) {
    const std::vector<double> replicate = Perturb(*stats, *cost, rng, mech).estimate;
    for (std::size_t i = 0; i < dims; ++i) {
      displacement[i].push_back(replicate[i] - center[i]);
    }
  }
  ci.method = IntervalMethod::kParametricBootstrap;
  ci.replicates = options.replicates;
  for (std::size_t i = 0; i < dims; ++i) {
    std::sort(displacement[i].begin(), displacement[i].end());
    const double lo = TypeSevenQuantile(displacement[i], beta / 2);
    const double hi = TypeSevenQuantile(displacement[i], 1 - beta / 2);
    ci.low.push_back(result.estimate[i] - hi);
    ci.high.push_back(result.estimate[i] - lo);
  }
  return ci;
}

std::string DescribeQuery(const Query& query) {
  const std::string where = DescribeFilter(query.filter());
  switch (query.kind()) {
    case QueryKind::kCount:
      return absl::StrCat("number of ", where);
    case QueryKind::kHistogram:
      return absl::StrCat("number of ", where, ", by ",
                          std::get<HistogramQuery>(query.body).column);
    case QueryKind::kMean:
      return absl::StrCat("mean of ", std::get<MeanQuery>(query.body).column,
                          " over ", where);
    case QueryKind::kQuantile: {
      const auto& q = std::get<QuantileQuery>(query.body);
      return absl::StrCat(FormatDouble(q.q), " quantile of ", q.column, " over ",
                          where);
    }
    case QueryKind::kOls: {
      const auto& q = std::get<OlsQuery>(query.body);
      return absl::StrCat("least-squares regression of ", q.outcome, " on ",
                          absl::StrJoin(q.predictors, ", "), " over ", where);
    }
  }
  return "";
}

std::vector<std::string> EstimateUnits(const Query& query) {
  switch (query.kind()) {
    case QueryKind::kCount:
      return {"records"};
    case QueryKind::kHistogram:
      return {"records"};
    case QueryKind::kMean:
      return {std::get<MeanQuery>(query.body).column};
    case QueryKind::kQuantile:
      return {std::get<QuantileQuery>(query.body).column};
    case QueryKind::kOls: {
      const auto& q = std::get<OlsQuery>(query.body);
      std::vector<std::string> units = {q.outcome};
      for (const std::string& p : q.predictors) {
        units.push_back(absl::StrCat(q.outcome, " per ", p));
      }
      return units;
    }
  }
  return {};
}

std::string RenderResultsCsv(const Release& release) {
  std::string out = "query_id,statistic,estimate,ci_low,ci_high,confidence,units\n";
  for (const ReleasedQuery& rq : release.queries) {
    const std::vector<std::string> units = EstimateUnits(rq.query);
    const std::size_t per_cell = rq.query.kind() == QueryKind::kHistogram;
    for (std::size_t i = 0; i < rq.result.estimate.size(); ++i) {
      const std::string& unit = per_cell ? units[0] : units.at(i);
      absl::StrAppend(&out, EscapeCsvField(rq.query.query_id), ",",
                      EscapeCsvField(rq.result.labels.at(i)), ",",
                      FormatDouble(rq.result.estimate[i]), ",",
                      FormatDouble(rq.interval.low.at(i)), ",",
                      FormatDouble(rq.interval.high.at(i)), ",",
                      Rounded(rq.interval.confidence), ",", EscapeCsvField(unit),
                      "\n");
    }
  }
  return out;
}

std::string RenderMethodsText(const Release& release) {
  std::set<QueryKind> kinds;
  std::set<std::string> confidences;
  std::size_t replicates = 0;
  for (const ReleasedQuery& rq : release.queries) {
    kinds.insert(rq.query.kind());
    confidences.insert(Percent(rq.interval.confidence));
    replicates = std::max(replicates, rq.interval.replicates);
  }
  const bool tail = kinds.count(QueryKind::kCount) || kinds.count(QueryKind::kHistogram);
  const bool bootstrap = kinds.count(QueryKind::kMean) ||
                         kinds.count(QueryKind::kQuantile) ||
                         kinds.count(QueryKind::kOls);

  std::string text = absl::StrCat(
      "The statistics reported here were computed on confidential data with "
      "calibrated random noise added to protect privacy. Noise was drawn from "
      "the Laplace distribution (the Laplace mechanism of differential "
      "privacy), with its scale set so that each statistic meets the accuracy "
      "requested for it.\n\n");

  for (const ReleasedQuery& rq : release.queries) {
    absl::StrAppend(&text, "Statistic ", rq.query.query_id, " is the ",
                    DescribeQuery(rq.query), ".");
    for (std::size_t i = 0; i < rq.result.estimate.size(); ++i) {
      absl::StrAppend(&text, " ", rq.result.labels.at(i), ": ",
                      Rounded(rq.result.estimate[i]), " (",
                      Percent(rq.interval.confidence), " interval ",
                      Rounded(rq.interval.low.at(i)), " to ",
                      Rounded(rq.interval.high.at(i)), ").");
    }
    absl::StrAppend(&text, "\n");
  }
  absl::StrAppend(&text, "\n");

  if (tail) {
    absl::StrAppend(
        &text,
        "Intervals for counts follow from the exact tail of the Laplace noise: "
        "each interval is the released value plus or minus the noise scale "
        "times ln(1/b), where b is one minus the confidence level, and it "
        "contains the un-noised count with probability one minus b.\n\n");
  }
  if (kinds.count(QueryKind::kMean)) {
    absl::StrAppend(
        &text,
        "Means were computed as a noisy sum divided by a noisy count, with "
        "values rescaled to their published bounds.\n\n");
  }
  if (kinds.count(QueryKind::kQuantile)) {
    absl::StrAppend(
        &text,
        "Quantiles were read from a noisy histogram over equal-width bins of "
        "the published range; each value is the midpoint of the selected "
        "bin.\n\n");
  }
  if (kinds.count(QueryKind::kOls)) {
    absl::StrAppend(
        &text,
        "Regression coefficients were obtained by sufficient-statistic "
        "perturbation: noise was added to the cross-products of the intercept, "
        "predictors and outcome (each rescaled to the unit interval), the "
        "noisy matrix was projected to be positive semi-definite, and the "
        "normal equations were solved.\n\n");
  }
  if (bootstrap) {
    absl::StrAppend(
        &text, "Intervals for ",
        kinds.count(QueryKind::kOls) ? "means, quantiles and regression coefficients"
                                     : "means and quantiles",
        " were built by parametric bootstrap: the noise mechanism was re-run ",
        replicates,
        " times around the released noisy statistics, and the interval was "
        "read from the quantiles of the resulting displacements.\n\n");
  }
  absl::StrAppend(
      &text,
      "These intervals describe the added privacy noise only. They do not "
      "account for sampling error in the underlying data. Because the noise is "
      "random, identical requests made by different researchers return "
      "different values; such results should not be averaged as if they were "
      "independent measurements.\n");
  return text;
}

std::string RenderReleaseDocument(const Release& release) {
  std::string doc = absl::StrCat("Release for project ", release.project_id,
                                 "\nTitle: ", release.title,
                                 "\nDataset: ", release.dataset_id,
                                 "\nRevision: ", release.revision, "\n\nResults\n");
  for (const ReleasedQuery& rq : release.queries) {
    const std::vector<std::string> units = EstimateUnits(rq.query);
    const bool per_cell = rq.query.kind() == QueryKind::kHistogram;
    for (std::size_t i = 0; i < rq.result.estimate.size(); ++i) {
      absl::StrAppend(&doc, "  ", rq.query.query_id, "  ", rq.result.labels.at(i),
                      "  ", Rounded(rq.result.estimate[i]), "  [",
                      Rounded(rq.interval.low.at(i)), ", ",
                      Rounded(rq.interval.high.at(i)), "]  ",
                      Percent(rq.interval.confidence), "  ",
                      per_cell ? units[0] : units.at(i),
                      rq.interval.test_mode ? "  (test mode, no noise)" : "",
                      "\n");
    }
  }
  absl::StrAppend(&doc, "\nDisclosure\n  Mechanism family: Laplace\n");
  if (release.disclose_epsilon) {
    std::vector<double> spent;
    for (const ReleasedQuery& rq : release.queries) {
      std::vector<std::string> scales;
      for (const NoiseComponent& c : rq.result.noise_model.components) {
        scales.push_back(absl::StrCat(c.name, " ", Rounded(c.scale)));
      }
      absl::StrAppend(&doc, "  ", rq.query.query_id, ": epsilon ",
                      Rounded(rq.result.epsilon), "; noise scale ",
                      absl::StrJoin(scales, ", "), "\n");
      spent.push_back(rq.result.epsilon);
    }
    absl::StrAppend(&doc, "  Total epsilon: ", Rounded(SumExactly(spent)), "\n");
  } else {
    absl::StrAppend(&doc, "  Privacy parameters are withheld for this deployment.\n");
  }
  absl::StrAppend(&doc, "\nMethods\n", RenderMethodsText(release));
  return doc;
}

}  // namespace vserver
