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

#include "vserver/codec.h"

#include "absl/strings/str_cat.h"

namespace vserver {

namespace {

// nlohmann messages start with "[json.exception.type_error.302] ".
std::string CleanMessage(const char* what) {
  std::string s = what;
  if (!s.empty() && s[0] == '[') {
    const std::size_t end = s.find("] ");
    if (end != std::string::npos) s = s.substr(end + 2);
  }
  return s;
}

template <typename Fn>
auto Decode(const char* what, Fn fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Json::exception& ex) {
    return absl::InvalidArgumentError(
        absl::StrCat("malformed ", what, ": ", CleanMessage(ex.what())));
  }
}

Json BoundsToJson(const Bounds& b) { return Json::array({b.lower, b.upper}); }
Bounds BoundsFromJson(const Json& j) {
  return Bounds{j.at(0).get<double>(), j.at(1).get<double>()};
}

}  // namespace

absl::StatusOr<Json> ParseJson(std::string_view text) {
  Json j = Json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) return absl::InvalidArgumentError("body is not valid JSON");
  return j;
}

Json SchemaToJson(const Schema& schema) {
  Json cols = Json::array();
  for (const ColumnSpec& c : schema.columns) {
    Json col{{"name", c.name}, {"kind", ColumnKindName(c.kind)}};
    if (c.is_numeric()) {
      col["lower"] = c.bounds.lower;
      col["upper"] = c.bounds.upper;
    } else {
      col["categories"] = c.categories;
    }
    cols.push_back(std::move(col));
  }
  return Json{{"dataset_id", schema.dataset_id}, {"columns", cols}};
}

absl::StatusOr<Schema> SchemaFromJson(const Json& j) {
  return Decode("schema", [&]() -> absl::StatusOr<Schema> {
    Schema schema;
    schema.dataset_id = j.at("dataset_id").get<std::string>();
    for (const Json& c : j.at("columns")) {
      const std::string kind = c.at("kind").get<std::string>();
      const std::string name = c.at("name").get<std::string>();
      if (kind == "numeric") {
        schema.columns.push_back(ColumnSpec::Numeric(
            name, c.at("lower").get<double>(), c.at("upper").get<double>()));
      } else if (kind == "categorical") {
        schema.columns.push_back(ColumnSpec::Categorical(
            name, c.at("categories").get<std::vector<std::string>>()));
      } else {
        return absl::InvalidArgumentError(
            absl::StrCat("column '", name, "': unknown kind '", kind, "'"));
      }
    }
    if (absl::Status s = CheckSchema(schema); !s.ok()) return s;
    return schema;
  });
}

Json FilterToJson(const Filter& filter) {
  Json out = Json::array();
  for (const Predicate& p : filter.conjuncts) {
    Json j{{"column", p.column}, {"op", FilterOpName(p.op)}};
    switch (p.op) {
      case FilterOp::kEq:
      case FilterOp::kNe:
        j["value"] = p.label;
        break;
      case FilterOp::kGe:
        j["value"] = p.lo;
        break;
      case FilterOp::kLe:
        j["value"] = p.hi;
        break;
      case FilterOp::kRange:
        j["lo"] = p.lo;
        j["hi"] = p.hi;
        break;
    }
    out.push_back(std::move(j));
  }
  return out;
}

absl::StatusOr<Filter> FilterFromJson(const Json& j) {
  return Decode("filter", [&]() -> absl::StatusOr<Filter> {
    Filter filter;
    if (j.is_null()) return filter;
    if (!j.is_array()) return absl::InvalidArgumentError("filter must be a list");
    for (const Json& p : j) {
      const std::string column = p.at("column").get<std::string>();
      const std::string op_name = p.at("op").get<std::string>();
      std::optional<FilterOp> op = ParseFilterOp(op_name);
      if (!op) {
        return absl::InvalidArgumentError(
            absl::StrCat("unknown filter operator '", op_name, "'"));
      }
      switch (*op) {
        case FilterOp::kEq:
          filter.conjuncts.push_back(Predicate::Equals(column, p.at("value").get<std::string>()));
          break;
        case FilterOp::kNe:
          filter.conjuncts.push_back(
              Predicate::NotEquals(column, p.at("value").get<std::string>()));
          break;
        case FilterOp::kGe:
          filter.conjuncts.push_back(Predicate::AtLeast(column, p.at("value").get<double>()));
          break;
        case FilterOp::kLe:
          filter.conjuncts.push_back(Predicate::AtMost(column, p.at("value").get<double>()));
          break;
        case FilterOp::kRange:
          filter.conjuncts.push_back(Predicate::Between(
              column, p.at("lo").get<double>(), p.at("hi").get<double>()));
          break;
      }
    }
    return filter;
  });
}

Json QueryToJson(const Query& query) {
  Json j{{"id", query.query_id},
         {"kind", QueryKindName(query.kind())},
         {"filter", FilterToJson(query.filter())}};
  std::visit(
      [&](const auto& q) {
        using T = std::decay_t<decltype(q)>;
        if constexpr (std::is_same_v<T, HistogramQuery> || std::is_same_v<T, MeanQuery>) {
          j["column"] = q.column;
        } else if constexpr (std::is_same_v<T, QuantileQuery>) {
          j["column"] = q.column;
          j["q"] = q.q;
        } else if constexpr (std::is_same_v<T, OlsQuery>) {
          j["outcome"] = q.outcome;
          j["predictors"] = q.predictors;
        }
      },
      query.body);
  return j;
}

absl::StatusOr<Query> QueryFromJson(const Json& j) {
  return Decode("query", [&]() -> absl::StatusOr<Query> {
    Query query;
    query.query_id = j.at("id").get<std::string>();
    const std::string kind_name = j.at("kind").get<std::string>();
    std::optional<QueryKind> kind = ParseQueryKind(kind_name);
    if (!kind) {
      return absl::InvalidArgumentError(
          absl::StrCat("unknown query kind '", kind_name, "'"));
    }
    absl::StatusOr<Filter> filter = FilterFromJson(j.value("filter", Json()));
    if (!filter.ok()) return filter.status();
    switch (*kind) {
      case QueryKind::kCount:
        query.body = CountQuery{*filter};
        break;
      case QueryKind::kHistogram:
        query.body = HistogramQuery{j.at("column").get<std::string>(), *filter};
        break;
      case QueryKind::kMean:
        query.body = MeanQuery{j.at("column").get<std::string>(), *filter};
        break;
      case QueryKind::kQuantile:
        query.body = QuantileQuery{j.at("column").get<std::string>(),
                                   j.at("q").get<double>(), *filter};
        break;
      case QueryKind::kOls:
        query.body = OlsQuery{j.at("outcome").get<std::string>(),
                              j.at("predictors").get<std::vector<std::string>>(),
                              *filter};
        break;
    }
    return query;
  });
}

Json AccuracySpecToJson(const AccuracySpec& spec) {
  return Json{{"alpha", spec.alpha},
              {"beta", spec.beta},
              {"histogram_target", HistogramTargetName(spec.target)}};
}

absl::StatusOr<AccuracySpec> AccuracySpecFromJson(const Json& j) {
  return Decode("accuracy spec", [&]() -> absl::StatusOr<AccuracySpec> {
    AccuracySpec spec;
    spec.alpha = j.at("alpha").get<double>();
    spec.beta = j.at("beta").get<double>();
    const std::string target = j.value("histogram_target", "whole_query");
    if (target == HistogramTargetName(HistogramTarget::kPerCell)) {
      spec.target = HistogramTarget::kPerCell;
    } else if (target != HistogramTargetName(HistogramTarget::kWholeQuery)) {
      return absl::InvalidArgumentError(
          absl::StrCat("unknown histogram target '", target, "'"));
    }
    if (absl::Status s = ValidateAccuracySpec(spec); !s.ok()) return s;
    return spec;
  });
}

Json TranslationToJson(const TranslationResult& t, bool disclose_epsilon) {
  Json j{{"query_id", t.query_id},
         {"feasible", t.feasible},
         {"method", TranslationMethodName(t.method)},
         {"message", t.message}};
  if (disclose_epsilon) j["epsilon"] = t.epsilon;
  if (t.simulation) {
    const SimulationDetail& s = *t.simulation;
    Json sim{{"n_sims", s.n_sims},
             {"target_attainment", s.target_attainment},
             {"achieved_attainment", s.achieved_attainment}};
    if (disclose_epsilon) {
      sim["bracket"] = Json::array({s.bracket_lo, s.bracket_hi});
      Json curve = Json::array();
      for (const AttainmentPoint& p : s.curve) {
        curve.push_back(Json::array({p.epsilon, p.attainment}));
      }
      sim["curve"] = curve;
    }
    j["simulation"] = sim;
  }
  return j;
}

absl::StatusOr<TranslationResult> TranslationFromJson(const Json& j) {
  return Decode("translation", [&]() -> absl::StatusOr<TranslationResult> {
    TranslationResult t;
    t.query_id = j.at("query_id").get<std::string>();
    t.feasible = j.at("feasible").get<bool>();
    t.epsilon = j.at("epsilon").get<double>();
    t.method = j.at("method").get<std::string>() ==
                       TranslationMethodName(TranslationMethod::kSimulation)
                   ? TranslationMethod::kSimulation
                   : TranslationMethod::kClosedForm;
    t.message = j.at("message").get<std::string>();
    if (j.contains("simulation")) {
      const Json& sim = j["simulation"];
      SimulationDetail s;
      s.n_sims = sim.at("n_sims").get<std::size_t>();
      s.target_attainment = sim.at("target_attainment").get<double>();
      s.achieved_attainment = sim.at("achieved_attainment").get<double>();
      s.bracket_lo = sim.at("bracket").at(0).get<double>();
      s.bracket_hi = sim.at("bracket").at(1).get<double>();
      for (const Json& p : sim.at("curve")) {
        s.curve.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      }
      t.simulation = std::move(s);
    }
    return t;
  });
}

Json MechanismResultToJson(const MechanismResult& r) {
  const NoiseModel& m = r.noise_model;
  Json components = Json::array();
  for (const NoiseComponent& c : m.components) {
    components.push_back(Json{{"name", c.name},
                              {"dimension", c.dimension},
                              {"sensitivity", c.sensitivity},
                              {"epsilon", c.epsilon},
                              {"scale", c.scale}});
  }
  Json bounds = Json::array();
  for (const Bounds& b : r.bounds) bounds.push_back(BoundsToJson(b));
  return Json{{"query_id", r.query_id},
              {"kind", QueryKindName(r.kind)},
              {"estimate", r.estimate},
              {"labels", r.labels},
              {"epsilon", r.epsilon},
              {"bounds", bounds},
              {"quantile_level", r.quantile_level},
              {"noise_model",
               Json{{"family", m.family},
                    {"noise_off", m.noise_off},
                    {"components", components},
                    {"intermediates", m.intermediates},
                    {"k_bins", m.k_bins},
                    {"unique_entries", m.unique_entries},
                    {"lambda_min", m.lambda_min},
                    {"clipping_activated", m.clipping_activated},
                    {"rank_deficient", m.rank_deficient},
                    {"denominator_clamped", m.denominator_clamped}}}};
}

absl::StatusOr<MechanismResult> MechanismResultFromJson(const Json& j) {
  return Decode("mechanism result", [&]() -> absl::StatusOr<MechanismResult> {
    MechanismResult r;
    r.query_id = j.at("query_id").get<std::string>();
    std::optional<QueryKind> kind = ParseQueryKind(j.at("kind").get<std::string>());
    if (!kind) return absl::InvalidArgumentError("unknown result kind");
    r.kind = *kind;
    r.estimate = j.at("estimate").get<std::vector<double>>();
    r.labels = j.at("labels").get<std::vector<std::string>>();
    r.epsilon = j.at("epsilon").get<double>();
    for (const Json& b : j.at("bounds")) r.bounds.push_back(BoundsFromJson(b));
    r.quantile_level = j.at("quantile_level").get<double>();
    const Json& m = j.at("noise_model");
    NoiseModel& model = r.noise_model;
    model.family = m.at("family").get<std::string>();
    model.noise_off = m.at("noise_off").get<bool>();
    for (const Json& c : m.at("components")) {
      model.components.push_back({c.at("name").get<std::string>(),
                                  c.at("dimension").get<std::size_t>(),
                                  c.at("sensitivity").get<double>(),
                                  c.at("epsilon").get<double>(),
                                  c.at("scale").get<double>()});
    }
    model.intermediates = m.at("intermediates").get<std::vector<double>>();
    model.k_bins = m.at("k_bins").get<std::size_t>();
    model.unique_entries = m.at("unique_entries").get<std::size_t>();
    model.lambda_min = m.at("lambda_min").get<double>();
    model.clipping_activated = m.at("clipping_activated").get<bool>();
    model.rank_deficient = m.at("rank_deficient").get<bool>();
    model.denominator_clamped = m.at("denominator_clamped").get<bool>();
    return r;
  });
}

Json IntervalToJson(const ConfidenceInterval& ci) {
  return Json{{"low", ci.low},
              {"high", ci.high},
              {"confidence", ci.confidence},
              {"method", IntervalMethodName(ci.method)},
              {"replicates", ci.replicates},
              {"test_mode", ci.test_mode}};
}

absl::StatusOr<ConfidenceInterval> IntervalFromJson(const Json& j) {
  return Decode("interval", [&]() -> absl::StatusOr<ConfidenceInterval> {
    ConfidenceInterval ci;
    ci.low = j.at("low").get<std::vector<double>>();
    ci.high = j.at("high").get<std::vector<double>>();
    ci.confidence = j.at("confidence").get<double>();
    const std::string method = j.at("method").get<std::string>();
    bool known = false;
    for (IntervalMethod m : {IntervalMethod::kLaplaceTail,
                             IntervalMethod::kParametricBootstrap,
                             IntervalMethod::kNoiseOff}) {
      if (method == IntervalMethodName(m)) {
        ci.method = m;
        known = true;
      }
    }
    if (!known) return absl::InvalidArgumentError("unknown interval method");
    ci.replicates = j.at("replicates").get<std::size_t>();
    ci.test_mode = j.at("test_mode").get<bool>();
    return ci;
  });
}

Json ReleaseToJson(const Release& release) {
  Json queries = Json::array();
  for (const ReleasedQuery& rq : release.queries) {
    queries.push_back(Json{{"query", QueryToJson(rq.query)},
                           {"spec", AccuracySpecToJson(rq.spec)},
                           {"result", MechanismResultToJson(rq.result)},
                           {"interval", IntervalToJson(rq.interval)}});
  }
  return Json{{"project_id", release.project_id},
              {"dataset_id", release.dataset_id},
              {"title", release.title},
              {"revision", release.revision},
              {"created_ms", release.created_ms},
              {"disclose_epsilon", release.disclose_epsilon},
              {"queries", queries}};
}

absl::StatusOr<Release> ReleaseFromJson(const Json& j) {
  return Decode("release", [&]() -> absl::StatusOr<Release> {
    Release r;
    r.project_id = j.at("project_id").get<std::string>();
    r.dataset_id = j.at("dataset_id").get<std::string>();
    r.title = j.at("title").get<std::string>();
    r.revision = j.at("revision").get<int>();
    r.created_ms = j.at("created_ms").get<std::int64_t>();
    r.disclose_epsilon = j.at("disclose_epsilon").get<bool>();
    for (const Json& q : j.at("queries")) {
      ReleasedQuery rq;
      absl::StatusOr<Query> query = QueryFromJson(q.at("query"));
      if (!query.ok()) return query.status();
      absl::StatusOr<AccuracySpec> spec = AccuracySpecFromJson(q.at("spec"));
      if (!spec.ok()) return spec.status();
      absl::StatusOr<MechanismResult> result = MechanismResultFromJson(q.at("result"));
      if (!result.ok()) return result.status();
      absl::StatusOr<ConfidenceInterval> ci = IntervalFromJson(q.at("interval"));
      if (!ci.ok()) return ci.status();
      rq.query = *std::move(query);
      rq.spec = *spec;
      rq.result = *std::move(result);
      rq.interval = *std::move(ci);
      r.queries.push_back(std::move(rq));
    }
    return r;
  });
}

Json ReleaseToPublicJson(const Release& release) {
  Json queries = Json::array();
  for (const ReleasedQuery& rq : release.queries) {
    const std::vector<std::string> units = EstimateUnits(rq.query);
    Json rows = Json::array();
    for (std::size_t i = 0; i < rq.result.estimate.size(); ++i) {
      rows.push_back(Json{
          {"statistic", rq.result.labels.at(i)},
          {"estimate", rq.result.estimate[i]},
          {"ci_low", rq.interval.low.at(i)},
          {"ci_high", rq.interval.high.at(i)},
          {"units", rq.query.kind() == QueryKind::kHistogram ? units[0] : units.at(i)}});
    }
    Json q{{"query", QueryToJson(rq.query)},
           {"description", DescribeQuery(rq.query)},
           {"confidence", rq.interval.confidence},
           {"interval_method", IntervalMethodName(rq.interval.method)},
           {"rows", rows},
           {"mechanism_family", rq.result.noise_model.family}};
    if (release.disclose_epsilon) {
      q["epsilon"] = rq.result.epsilon;
      Json scales = Json::array();
      for (const NoiseComponent& c : rq.result.noise_model.components) {
        scales.push_back(Json{{"name", c.name}, {"scale", c.scale}});
      }
      q["noise_scales"] = scales;
    }
    queries.push_back(std::move(q));
  }
  return Json{{"project_id", release.project_id},
              {"dataset_id", release.dataset_id},
              {"title", release.title},
              {"revision", release.revision},
              {"created_ms", release.created_ms},
              {"queries", queries}};
}

}  // namespace vserver
