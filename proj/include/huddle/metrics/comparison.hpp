#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "huddle/metrics/statistics.hpp"

namespace huddle::metrics {

struct SpeakingDistribution {
  std::string meeting_id;
  std::vector<std::string> included_ids;
  std::vector<double> durations_ms;
};

/// One team's meetings, at most one per condition.
struct TeamMeetings {
  std::string team_id;
  std::optional<SpeakingDistribution> control;
  std::optional<SpeakingDistribution> treatment;
};

struct GiniPair {
  std::string team_id;
  std::string control_meeting_id;
  std::string treatment_meeting_id;
  double gini_control = 0;
  double gini_treatment = 0;
  double delta = 0;  // treatment - control
};

struct DeviationRow {
  std::string team_id;
  std::string meeting_id;
  std::string condition;
  std::string user_id;
  double duration_ms = 0;
  double total_ms = 0;
  std::size_t n = 0;
  std::optional<double> deviation;  // empty when excluded (zero speaking time)
};

struct ComparisonReport {
  Alternative alternative = Alternative::treatment_less;
  std::vector<GiniPair> pairs;
  std::optional<TestResult> gini_test;
  std::optional<std::string> gini_test_error;
  std::vector<DeviationRow> deviations;
  std::vector<std::string> warnings;
};

void to_json(nlohmann::json& j, const ComparisonReport& report);

/// Per-team Gini pairs, a Wilcoxon test across teams on the paired Gini
/// values, and the per-participant fair-share deviation table. Teams without
/// exactly one meeting per condition are skipped with a warning.
ComparisonReport condition_comparison(std::span<const TeamMeetings> teams,
                                      Alternative alternative = Alternative::treatment_less);

/// Shortest round-trip decimal form, used for all CSV output.
std::string format_number(double v);

std::string gini_pairs_csv(const ComparisonReport& report);
std::string deviations_csv(const ComparisonReport& report);

}  // namespace huddle::metrics
