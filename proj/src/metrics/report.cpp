#include "huddle/metrics/report.hpp"

#include <cmath>
#include <map>

#include "huddle/common/error.hpp"

namespace huddle::metrics {

namespace {

const nlohmann::json& require(const nlohmann::json& j, const char* key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) fail(ErrorCode::validation, "missing field " + path + "." + key, path + "." + key);
  return j[key];
}

std::string string_at(const nlohmann::json& j, const char* key, const std::string& path) {
  const auto& v = require(j, key, path);
  if (!v.is_string()) fail(ErrorCode::validation, path + "." + key + " must be a string", path + "." + key);
  return v.get<std::string>();
}

double number_at(const nlohmann::json& j, const char* key, const std::string& path) {
  const auto& v = require(j, key, path);
  if (!v.is_number()) fail(ErrorCode::validation, path + "." + key + " must be a number", path + "." + key);
  return v.get<double>();
}

std::vector<double> numbers(const nlohmann::json& v, const std::string& path) {
  if (!v.is_array()) fail(ErrorCode::validation, path + " must be an array", path);
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number() || !std::isfinite(v[i].get<double>()))
      fail(ErrorCode::validation, path + "[" + std::to_string(i) + "] must be a finite number", path);
    out.push_back(v[i].get<double>());
  }
  return out;
}

Alternative parse_alternative(const nlohmann::json& v, const std::string& path) {
  if (v == "greater") return Alternative::treatment_greater;
  if (v == "less") return Alternative::treatment_less;
  fail(ErrorCode::validation, path + " must be \"greater\" or \"less\"", path);
}

}  // namespace

MetricsReport build_report(const nlohmann::json& input, const ReportOptions& options) {
  MetricsReport report;
  report.fdr = options.fdr;
  const nlohmann::json* meetings = &input;
  const nlohmann::json empty = nlohmann::json::array();
  const nlohmann::json* samples = &empty;
  if (input.is_object()) {
    meetings = &require(input, "meetings", "$");
    if (input.contains("paired_samples")) samples = &input["paired_samples"];
  }
  if (!meetings->is_array()) fail(ErrorCode::validation, "$.meetings must be an array", "$.meetings");

  // team -> condition -> distributions
  std::map<std::string, std::map<std::string, std::vector<SpeakingDistribution>>> grouped;
  for (std::size_t i = 0; i < meetings->size(); ++i) {
    const auto path = "$.meetings[" + std::to_string(i) + "]";
    const auto& m = (*meetings)[i];
    const auto condition = string_at(m, "condition", path);
    if (condition != "CONTROL" && condition != "TREATMENT")
      fail(ErrorCode::validation, path + ".condition must be CONTROL or TREATMENT", path + ".condition");
    SpeakingDistribution dist;
    dist.meeting_id = string_at(m, "meeting_id", path);
    const auto& participants = require(m, "participants", path);
    if (!participants.is_array()) fail(ErrorCode::validation, path + ".participants must be an array");
    for (std::size_t k = 0; k < participants.size(); ++k) {
      const auto ppath = path + ".participants[" + std::to_string(k) + "]";
      const auto& p = participants[k];
      const auto user = string_at(p, "user_id", ppath);
      const bool joined = p.value("joined", true);
      const bool complete = p.value("data_complete", true);
      if (!joined) continue;
      if (!complete && !options.include_incomplete) {
        report.warnings.push_back("excluded " + user + " from " + dist.meeting_id + ": incomplete speaking data");
        continue;
      }
      const double ms = number_at(p, "total_speaking_ms", ppath);
      if (ms < 0) fail(ErrorCode::validation, ppath + ".total_speaking_ms must be non-negative");
      dist.included_ids.push_back(user);
      dist.durations_ms.push_back(ms);
    }
    grouped[string_at(m, "team_id", path)][condition].push_back(std::move(dist));
  }

  std::vector<TeamMeetings> teams;
  for (auto& [team_id, by_condition] : grouped) {
    TeamMeetings t{team_id, {}, {}};
    auto& c = by_condition["CONTROL"];
    auto& tr = by_condition["TREATMENT"];
    if (c.size() > 1 || tr.size() > 1) {
      report.warnings.push_back("team " + team_id + " skipped: more than one meeting for a condition");
      continue;
    }
    if (!c.empty()) t.control = std::move(c.front());
    if (!tr.empty()) t.treatment = std::move(tr.front());
    teams.push_back(std::move(t));
  }
  report.comparison = condition_comparison(teams, options.alternative);

  NamedTest gini_test{"gini", options.alternative, report.comparison.gini_test, report.comparison.gini_test_error, {}};
  report.tests.push_back(gini_test);

  if (!samples->is_array()) fail(ErrorCode::validation, "$.paired_samples must be an array", "$.paired_samples");
  for (std::size_t i = 0; i < samples->size(); ++i) {
    const auto path = "$.paired_samples[" + std::to_string(i) + "]";
    const auto& s = (*samples)[i];
    NamedTest t;
    t.name = string_at(s, "name", path);
    t.alternative = s.contains("alternative") ? parse_alternative(s["alternative"], path + ".alternative")
                                              : options.alternative;
    PairedSample sample;
    sample.control = numbers(require(s, "control", path), path + ".control");
    sample.treatment = numbers(require(s, "treatment", path), path + ".treatment");
    if (s.contains("labels")) sample.labels = s["labels"].get<std::vector<std::string>>();
    try {
      t.result = wilcoxon_one_tailed(sample, t.alternative);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::validation) fail(ErrorCode::validation, path + ": " + e.what(), path);
      t.error = to_string(e.code());
    }
    report.tests.push_back(std::move(t));
  }

  if (options.fdr) {
    std::vector<double> ps;
    std::vector<std::size_t> where;
    for (std::size_t i = 0; i < report.tests.size(); ++i)
      if (report.tests[i].result) {
        ps.push_back(report.tests[i].result->p_value);
        where.push_back(i);
      }
    const auto adjusted = bh_fdr_adjust(ps);
    for (std::size_t k = 0; k < where.size(); ++k) report.tests[where[k]].p_adjusted = adjusted[k];
  }
  for (const auto& w : report.comparison.warnings) report.warnings.push_back(w);
  return report;
}

void to_json(nlohmann::json& j, const NamedTest& t) {
  j = {{"name", t.name}, {"alternative", t.alternative}, {"result", nullptr}, {"error", nullptr}};
  if (t.result) j["result"] = *t.result;
  if (t.error) j["error"] = *t.error;
  if (t.p_adjusted) j["p_adjusted"] = *t.p_adjusted;
}

void to_json(nlohmann::json& j, const MetricsReport& r) {
  j = {{"comparison", r.comparison}, {"tests", r.tests}, {"warnings", r.warnings}, {"fdr", r.fdr}};
}

std::string tests_csv(const MetricsReport& r) {
  std::string out = "name,alternative,V,p_value,p_adjusted,r,n_effective,method,error\n";
  for (const auto& t : r.tests) {
    out += t.name + "," + nlohmann::json(t.alternative).get<std::string>() + ",";
    if (t.result) {
      out += format_number(t.result->v) + "," + format_number(t.result->p_value) + ",";
      out += (t.p_adjusted ? format_number(*t.p_adjusted) : "") + ",";
      out += format_number(t.result->r) + "," + std::to_string(t.result->n_effective) + "," +
             nlohmann::json(t.result->method).get<std::string>() + ",\n";
    } else {
      out += ",,,,,," + t.error.value_or("") + "\n";
    }
  }
  return out;
}

}  // namespace huddle::metrics
