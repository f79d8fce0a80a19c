#pragma once

// Independent reference computations used only by tests. Each one takes the
// slow, literal route so it cannot share a bug with the library path it checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <tuple>
#include <vector>

namespace huddle::oracle {

// Gini by the double pairwise sum.
inline double gini_pairwise(const std::vector<double>& x) {
  const double n = static_cast<double>(x.size());
  double sum = 0, abs_diffs = 0;
  for (double v : x) sum += v;
  for (double a : x)
    for (double b : x) abs_diffs += std::fabs(a - b);
  return abs_diffs / (2.0 * n * n * (sum / n));
}

struct SignedRankOracle {
  double v = 0;
  double p_greater = 0;
  double p_less = 0;
  std::size_t n = 0;
};

// Signed-rank statistic and exact one-tailed p-values by enumerating every
// sign vector. Ranks are computed by counting, not sorting.
inline SignedRankOracle signed_rank_enumeration(const std::vector<double>& control,
                                                const std::vector<double>& treatment) {
  std::vector<double> d;
  for (std::size_t i = 0; i < control.size(); ++i)
    if (treatment[i] - control[i] != 0) d.push_back(treatment[i] - control[i]);
  const std::size_t n = d.size();
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n; ++i) {
    double below = 0, equal = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (std::fabs(d[j]) < std::fabs(d[i])) ++below;
      if (std::fabs(d[j]) == std::fabs(d[i])) ++equal;
    }
    rank[i] = below + (equal + 1) / 2.0;
  }
  SignedRankOracle out;
  out.n = n;
  for (std::size_t i = 0; i < n; ++i)
    if (d[i] > 0) out.v += rank[i];
  std::uint64_t ge = 0, le = 0;
  const std::uint64_t total = std::uint64_t{1} << n;
  for (std::uint64_t mask = 0; mask < total; ++mask) {
    double v = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask & (std::uint64_t{1} << i)) v += rank[i];
    if (v >= out.v - 1e-9) ++ge;
    if (v <= out.v + 1e-9) ++le;
  }
  out.p_greater = static_cast<double>(ge) / static_cast<double>(total);
  out.p_less = static_cast<double>(le) / static_cast<double>(total);
  return out;
}

// Benjamini-Hochberg straight from the definition: for the value with sorted
// position i, take min over j >= i of p_(j) * m / j, then clip at 1.
inline std::vector<double> bh_by_definition(const std::vector<double>& p) {
  const std::size_t m = p.size();
  std::vector<std::size_t> order(m);
  for (std::size_t i = 0; i < m; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return p[a] < p[b]; });
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    double best = 1.0;
    for (std::size_t j = i; j < m; ++j)
      best = std::min(best, std::max(p[order[j]], p[order[j]] * static_cast<double>(m) / static_cast<double>(j + 1)));
    out[order[i]] = best;
  }
  return out;
}

struct TimelineEvent {
  std::string user;
  int kind;  // 0 JOIN, 1 LEAVE, 2 SPEAK_START, 3 SPEAK_STOP
  std::int64_t ts;
};

struct TimelineTotals {
  std::int64_t speaking_ms = 0;
  std::int64_t present_ms = 0;
  bool joined = false;
};

// Materialises each user's speaking and presence state at 1 ms resolution over
// [0, duration) and counts the set milliseconds. Events are consumed in the
// order given, which must already be (ts, arrival) order.
inline std::map<std::string, TimelineTotals> timeline_totals(
    const std::vector<TimelineEvent>& events, const std::vector<std::string>& users,
    std::int64_t duration) {
  std::map<std::string, TimelineTotals> out;
  for (const auto& u : users) {
    std::vector<char> speaking(static_cast<std::size_t>(duration), 0);
    std::vector<char> present(static_cast<std::size_t>(duration), 0);
    bool is_speaking = false, is_present = false;
    std::int64_t cursor = 0;
    auto fill_to = [&](std::int64_t t) {
      t = std::clamp<std::int64_t>(t, 0, duration);
      for (; cursor < t; ++cursor) {
        speaking[static_cast<std::size_t>(cursor)] = is_speaking;
        present[static_cast<std::size_t>(cursor)] = is_present;
      }
    };
    TimelineTotals totals;
    for (const auto& e : events) {
      if (e.user != u) continue;
      fill_to(e.ts);
      switch (e.kind) {
        case 0: is_present = true; totals.joined = true; break;
        case 1: is_present = false; break;
        case 2: is_speaking = true; break;
        case 3: is_speaking = false; break;
      }
    }
    fill_to(duration);
    for (std::int64_t t = 0; t < duration; ++t) {
      totals.speaking_ms += speaking[static_cast<std::size_t>(t)];
      totals.present_ms += present[static_cast<std::size_t>(t)];
    }
    out[u] = totals;
  }
  return out;
}

}  // namespace huddle::oracle
