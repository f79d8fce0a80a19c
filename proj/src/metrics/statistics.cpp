#include "huddle/metrics/statistics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

#include "huddle/common/error.hpp"

namespace huddle::metrics {

double gini(std::span<const double> values) {
  if (values.size() < 2) fail(ErrorCode::validation, "gini needs at least two values");
  std::vector<double> sorted(values.begin(), values.end());
  for (double v : sorted)
    if (!(v >= 0) || !std::isfinite(v))
      fail(ErrorCode::validation, "gini inputs must be finite and non-negative");
  std::sort(sorted.begin(), sorted.end());
  const double sum = std::accumulate(sorted.begin(), sorted.end(), 0.0);
  if (sum <= 0) fail(ErrorCode::undefined, "gini is undefined when every value is zero");

  // sum_i sum_j |x_i - x_j| = 2 * sum_i (2i - n - 1) x_(i) over sorted x.
  const double n = static_cast<double>(sorted.size());
  double weighted = 0;
  for (std::size_t i = 0; i < sorted.size(); ++i)
    weighted += (2.0 * static_cast<double>(i + 1) - n - 1.0) * sorted[i];
  return std::max(0.0, weighted / (n * sum));
}

double fair_share_deviation(double duration, double total, std::size_t n) {
  if (!(total > 0)) fail(ErrorCode::validation, "total speaking time must be positive");
  if (n < 2) fail(ErrorCode::validation, "fair share needs at least two participants");
  if (duration < 0 || duration > total)
    fail(ErrorCode::validation, "duration must lie in [0, total]");
  if (duration == 0)
    fail(ErrorCode::undefined, "fair-share deviation is undefined for zero speaking time");
  return std::log(duration / total * static_cast<double>(n));
}

void to_json(nlohmann::json& j, const TestResult& t) {
  j = {{"V", t.v},
       {"p_value", t.p_value},
       {"r", t.r},
       {"n_effective", t.n_effective},
       {"method", t.method}};
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
    const double rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

namespace {

double standard_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Number of subsets of {1..n} for each achievable rank sum.
std::vector<std::uint64_t> signed_rank_null_counts(std::size_t n) {
  const std::size_t max_sum = n * (n + 1) / 2;
  std::vector<std::uint64_t> counts(max_sum + 1, 0);
  counts[0] = 1;
  for (std::size_t k = 1; k <= n; ++k)
    for (std::size_t s = max_sum; s >= k; --s) counts[s] += counts[s - k];
  return counts;
}

}  // namespace

double rank_biserial(double v, std::size_t n_effective) {
  if (n_effective < 1) fail(ErrorCode::validation, "rank-biserial needs n_effective >= 1");
  const double total = static_cast<double>(n_effective * (n_effective + 1)) / 2.0;
  if (!(v >= 0 && v <= total))
    fail(ErrorCode::validation, "signed-rank statistic out of range [0, n(n+1)/2]");
  // (2V - T) is an exact integer for half-integer V, so r(V) = -r(T - V) bit for bit.
  return (2.0 * v - total) / total;
}

TestResult wilcoxon_one_tailed(const PairedSample& sample, Alternative alternative) {
  const std::size_t n = sample.control.size();
  if (n < 1) fail(ErrorCode::validation, "paired sample is empty");
  if (sample.treatment.size() != n || (!sample.labels.empty() && sample.labels.size() != n))
    fail(ErrorCode::validation, "paired sample lists differ in length");

  std::vector<double> diffs;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = sample.treatment[i] - sample.control[i];
    if (!std::isfinite(d)) fail(ErrorCode::validation, "paired sample contains non-finite values");
    if (d != 0) diffs.push_back(d);
  }
  if (diffs.empty()) fail(ErrorCode::degenerate_sample, "all paired differences are zero");

  std::vector<double> magnitudes(diffs.size());
  std::transform(diffs.begin(), diffs.end(), magnitudes.begin(), [](double d) { return std::fabs(d); });
  const auto ranks = average_ranks(magnitudes);

  TestResult result;
  result.n_effective = diffs.size();
  for (std::size_t i = 0; i < diffs.size(); ++i)
    if (diffs[i] > 0) result.v += ranks[i];

  std::vector<double> sorted_mag = magnitudes;
  std::sort(sorted_mag.begin(), sorted_mag.end());
  const bool has_ties = std::adjacent_find(sorted_mag.begin(), sorted_mag.end()) != sorted_mag.end();

  const std::size_t n_eff = result.n_effective;
  const double total = static_cast<double>(n_eff * (n_eff + 1)) / 2.0;

  if (n_eff <= kExactWilcoxonLimit && !has_ties) {
    result.method = PValueMethod::exact;
    const auto counts = signed_rank_null_counts(n_eff);
    const auto v = static_cast<std::size_t>(std::llround(result.v));
    std::uint64_t tail = 0;
    if (alternative == Alternative::treatment_greater) {
      for (std::size_t s = v; s < counts.size(); ++s) tail += counts[s];
    } else {
      for (std::size_t s = 0; s <= v; ++s) tail += counts[s];
    }
    result.p_value = static_cast<double>(tail) / std::ldexp(1.0, static_cast<int>(n_eff));
  } else {
    result.method = PValueMethod::normal_approx;
    const double nn = static_cast<double>(n_eff);
    const double mean = nn * (nn + 1) / 4.0;
    double tie_term = 0;
    for (std::size_t i = 0; i < sorted_mag.size();) {
      std::size_t j = i;
      while (j < sorted_mag.size() && sorted_mag[j] == sorted_mag[i]) ++j;
      const double t = static_cast<double>(j - i);
      tie_term += t * t * t - t;
      i = j;
    }
    const double variance = nn * (nn + 1) * (2 * nn + 1) / 24.0 - tie_term / 48.0;
    const double sd = std::sqrt(variance);
    if (alternative == Alternative::treatment_greater)
      result.p_value = 1.0 - standard_normal_cdf((result.v - mean - 0.5) / sd);
    else
      result.p_value = standard_normal_cdf((result.v - mean + 0.5) / sd);
  }
  result.p_value = std::clamp(result.p_value, 0.0, 1.0);
  result.r = alternative == Alternative::treatment_greater ? rank_biserial(result.v, n_eff)
                                                           : rank_biserial(total - result.v, n_eff);
  return result;
}

std::vector<double> bh_fdr_adjust(std::span<const double> p_values) {
  for (double p : p_values)
    if (!(p >= 0 && p <= 1)) fail(ErrorCode::validation, "p-values must lie in [0, 1]");
  const std::size_t m = p_values.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });
  std::vector<double> adjusted(m);
  double running = 1.0;
  for (std::size_t k = m; k-- > 0;) {
    const double p = p_values[order[k]];
    // m / (k + 1) >= 1; the max keeps rounding from dipping below p itself.
    const double candidate = std::max(p, p * static_cast<double>(m) / static_cast<double>(k + 1));
    running = std::min(running, candidate);
    adjusted[order[k]] = running;
  }
  return adjusted;
}

}  // namespace huddle::metrics
