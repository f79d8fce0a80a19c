#include "huddle/metrics/comparison.hpp"

#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include "huddle/common/error.hpp"

namespace huddle::metrics {

std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc{} ? std::string(buf, end) : std::string("nan");
}

namespace {

std::string number(double v) { return format_number(v); }

void append_deviations(const std::string& team_id, const std::string& condition,
                       const SpeakingDistribution& dist, std::vector<DeviationRow>& rows) {
  const double total = std::accumulate(dist.durations_ms.begin(), dist.durations_ms.end(), 0.0);
  const std::size_t n = dist.durations_ms.size();
  for (std::size_t i = 0; i < n; ++i) {
    DeviationRow row{team_id, dist.meeting_id, condition,
                     i < dist.included_ids.size() ? dist.included_ids[i] : std::to_string(i),
                     dist.durations_ms[i], total, n, std::nullopt};
    if (dist.durations_ms[i] > 0) row.deviation = fair_share_deviation(dist.durations_ms[i], total, n);
    rows.push_back(std::move(row));
  }
}

}  // namespace

ComparisonReport condition_comparison(std::span<const TeamMeetings> teams, Alternative alternative) {
  ComparisonReport report;
  report.alternative = alternative;
  PairedSample ginis;
  for (const auto& team : teams) {
    if (!team.control || !team.treatment) {
      report.warnings.push_back("team " + team.team_id +
                                " skipped: needs exactly one CONTROL and one TREATMENT meeting");
      continue;
    }
    GiniPair pair{team.team_id, team.control->meeting_id, team.treatment->meeting_id};
    try {
      pair.gini_control = gini(team.control->durations_ms);
      pair.gini_treatment = gini(team.treatment->durations_ms);
    } catch (const Error& e) {
      report.warnings.push_back("team " + team.team_id + " skipped: " + e.what());
      continue;
    }
    pair.delta = pair.gini_treatment - pair.gini_control;
    ginis.labels.push_back(team.team_id);
    ginis.control.push_back(pair.gini_control);
    ginis.treatment.push_back(pair.gini_treatment);
    report.pairs.push_back(pair);
    append_deviations(team.team_id, "CONTROL", *team.control, report.deviations);
    append_deviations(team.team_id, "TREATMENT", *team.treatment, report.deviations);
  }
  if (ginis.control.empty()) {
    report.gini_test_error = "no_paired_teams";
    return report;
  }
  try {
    report.gini_test = wilcoxon_one_tailed(ginis, alternative);
  } catch (const Error& e) {
    report.gini_test_error = std::string(to_string(e.code()));
  }
  return report;
}

void to_json(nlohmann::json& j, const ComparisonReport& report) {
  j = nlohmann::json::object();
  j["alternative"] = report.alternative;
  auto& pairs = j["gini_pairs"] = nlohmann::json::array();
  for (const auto& p : report.pairs)
    pairs.push_back({{"team_id", p.team_id},
                     {"control_meeting_id", p.control_meeting_id},
                     {"treatment_meeting_id", p.treatment_meeting_id},
                     {"gini_control", p.gini_control},
                     {"gini_treatment", p.gini_treatment},
                     {"delta", p.delta}});
  j["gini_test"] = report.gini_test ? nlohmann::json(*report.gini_test) : nlohmann::json(nullptr);
  if (report.gini_test_error) j["gini_test_error"] = *report.gini_test_error;
  auto& rows = j["deviations"] = nlohmann::json::array();
  for (const auto& r : report.deviations)
    rows.push_back({{"team_id", r.team_id},
                    {"meeting_id", r.meeting_id},
                    {"condition", r.condition},
                    {"user_id", r.user_id},
                    {"duration_ms", r.duration_ms},
                    {"total_ms", r.total_ms},
                    {"n", r.n},
                    {"deviation", r.deviation ? nlohmann::json(*r.deviation) : nlohmann::json(nullptr)},
                    {"abs_deviation",
                     r.deviation ? nlohmann::json(std::fabs(*r.deviation)) : nlohmann::json(nullptr)},
                    {"excluded", !r.deviation.has_value()}});
  j["warnings"] = report.warnings;
}

std::string gini_pairs_csv(const ComparisonReport& report) {
  std::ostringstream out;
  out << "team_id,control_meeting_id,treatment_meeting_id,gini_control,gini_treatment,delta\n";
  for (const auto& p : report.pairs)
    out << p.team_id << ',' << p.control_meeting_id << ',' << p.treatment_meeting_id << ','
        << number(p.gini_control) << ',' << number(p.gini_treatment) << ',' << number(p.delta) << '\n';
  return out.str();
}

std::string deviations_csv(const ComparisonReport& report) {
  std::ostringstream out;
  out << "team_id,meeting_id,condition,user_id,duration_ms,total_ms,n,deviation,abs_deviation,excluded\n";
  for (const auto& r : report.deviations) {
    out << r.team_id << ',' << r.meeting_id << ',' << r.condition << ',' << r.user_id << ','
        << number(r.duration_ms) << ',' << number(r.total_ms) << ',' << r.n << ',';
    if (r.deviation)
      out << number(*r.deviation) << ',' << number(std::fabs(*r.deviation)) << ",false\n";
    else
      out << ",,true\n";
  }
  return out.str();
}

}  // namespace huddle::metrics
