#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace huddle::metrics {

/// Gini coefficient, population convention:
///   G = sum_i sum_j |x_i - x_j| / (2 n^2 mean)
/// Requires at least two non-negative values with a positive sum.
double gini(std::span<const double> values);

/// ln((duration / total) * n). Zero means the participant spoke exactly
/// their fair share of the meeting's speaking time; the balance statistic is
/// the absolute value. A zero duration raises ErrorCode::undefined.
double fair_share_deviation(double duration, double total, std::size_t n);

enum class Alternative { treatment_greater, treatment_less };
enum class PValueMethod { exact, normal_approx };

NLOHMANN_JSON_SERIALIZE_ENUM(Alternative, {
    {Alternative::treatment_greater, "greater"},
    {Alternative::treatment_less, "less"},
})

NLOHMANN_JSON_SERIALIZE_ENUM(PValueMethod, {
    {PValueMethod::exact, "EXACT"},
    {PValueMethod::normal_approx, "NORMAL_APPROX"},
})

struct PairedSample {
  std::vector<std::string> labels;
  std::vector<double> control;
  std::vector<double> treatment;
};

struct TestResult {
  double v = 0;  // sum of ranks of positive (treatment - control) differences
  double p_value = 1;
  double r = 0;  // rank-biserial, oriented so positive favours the alternative
  std::size_t n_effective = 0;
  PValueMethod method = PValueMethod::exact;
};

void to_json(nlohmann::json& j, const TestResult& t);

/// Largest zero-free sample size for which the exact null distribution is used.
inline constexpr std::size_t kExactWilcoxonLimit = 20;

/// Paired one-tailed Wilcoxon signed-rank test on d = treatment - control.
/// Zero differences are dropped, tied |d| receive average ranks. The p-value is
/// exact when n_effective <= kExactWilcoxonLimit and |d| has no ties;
/// otherwise a normal approximation with tie-corrected variance and a 0.5
/// continuity correction is used.
TestResult wilcoxon_one_tailed(const PairedSample& sample, Alternative alternative);

/// 2V/T - 1 with T = n(n+1)/2.
double rank_biserial(double v, std::size_t n_effective);

/// Benjamini-Hochberg step-up adjustment, returned in input order.
std::vector<double> bh_fdr_adjust(std::span<const double> p_values);

/// Average ranks (1-based) of `values`, ties share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

}  // namespace huddle::metrics
