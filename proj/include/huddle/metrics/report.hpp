#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "huddle/metrics/comparison.hpp"
#include "huddle/metrics/statistics.hpp"

namespace huddle::metrics {

struct ReportOptions {
  Alternative alternative = Alternative::treatment_less;
  bool fdr = false;
  bool include_incomplete = false;  // keep participants with data_complete=false
};

struct NamedTest {
  std::string name;
  Alternative alternative = Alternative::treatment_less;
  std::optional<TestResult> result;
  std::optional<std::string> error;
  std::optional<double> p_adjusted;
};

struct MetricsReport {
  ComparisonReport comparison;
  std::vector<NamedTest> tests;  // "gini" first, then the input's paired samples
  std::vector<std::string> warnings;
  bool fdr = false;
};

/// Reads meeting stats as exported by GET /meetings/{id}/stats, either as a
/// bare array or as {"meetings": [...], "paired_samples": [...]}, groups them
/// by team and condition, and runs the comparison plus any extra paired tests.
MetricsReport build_report(const nlohmann::json& input, const ReportOptions& options);

void to_json(nlohmann::json& j, const NamedTest& t);
void to_json(nlohmann::json& j, const MetricsReport& r);

std::string tests_csv(const MetricsReport& r);

}  // namespace huddle::metrics
