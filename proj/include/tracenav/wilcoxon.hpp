#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "tracenav/error.hpp"

namespace tracenav {

struct WilcoxonResult {
  double statistic = 0.0;  // min(W+, W-)
  double w_plus = 0.0;     // rank sum of positive differences
  double p_value = 1.0;    // two-sided
  std::size_t n_nonzero = 0;
  bool exact = true;
  bool all_zero = false;
};

namespace detail {

// Average ranks of |d|, doubled so tied ranks stay integral.
inline std::vector<std::int64_t> doubled_ranks(std::span<const double> abs_diffs) {
  const std::size_t m = abs_diffs.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return abs_diffs[a] < abs_diffs[b]; });
  std::vector<std::int64_t> ranks(m);
  for (std::size_t i = 0; i < m;) {
    std::size_t j = i;
    while (j + 1 < m && abs_diffs[order[j + 1]] == abs_diffs[order[i]]) ++j;
    // Ranks i+1..j+1 averaged, times two.
    const auto doubled = static_cast<std::int64_t>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = doubled;
    i = j + 1;
  }
  return ranks;
}

inline double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

}  // namespace detail

inline constexpr std::size_t kWilcoxonExactLimit = 25;

/**
 * Wilcoxon signed-rank test on paired samples (a_i - b_i).
 *
 * Zero differences are dropped and tied |differences| share their average
 * rank. Up to kWilcoxonExactLimit nonzero pairs the two-sided p-value is
 * exact: the share of all 2^m sign assignments whose W+ lies at least as far
 * from its null mean as the observed one, counted with a rank-sum
 * recurrence. Larger samples use the tie-corrected normal approximation
 * with continuity correction. When every difference is zero the p-value is 1 and `all_zero` is set.
 */
inline WilcoxonResult wilcoxon_signed_rank(std::span<const std::pair<double, double>> pairs,
                                           bool force_normal = false) {
  std::vector<double> diffs;
  for (const auto& [a, b] : pairs) {
    if (!std::isfinite(a) || !std::isfinite(b)) throw InputError("wilcoxon input is not finite");
    if (a - b != 0.0) diffs.push_back(a - b);
  }
  WilcoxonResult r;
  r.n_nonzero = diffs.size();
  if (diffs.empty()) {
    r.all_zero = true;
    return r;
  }

  std::vector<double> abs_diffs(diffs.size());
  std::transform(diffs.begin(), diffs.end(), abs_diffs.begin(), [](double d) { return std::abs(d); });
  const auto ranks = detail::doubled_ranks(abs_diffs);
  std::int64_t total2 = 0, w2 = 0;
  for (std::size_t i = 0; i < diffs.size(); ++i) {
    total2 += ranks[i];
    if (diffs[i] > 0.0) w2 += ranks[i];
  }
  r.w_plus = static_cast<double>(w2) / 2.0;
  r.statistic = std::min(r.w_plus, static_cast<double>(total2 - w2) / 2.0);

  const std::size_t m = diffs.size();
  if (m <= kWilcoxonExactLimit && !force_normal) {
    // counts[s] = number of sign assignments with doubled W+ equal to s.
    std::vector<double> counts(static_cast<std::size_t>(total2) + 1, 0.0);
    counts[0] = 1.0;
    std::int64_t reach = 0;
    for (std::int64_t rank : ranks) {
      for (std::int64_t s = reach; s >= 0; --s) {
        if (counts[static_cast<std::size_t>(s)] != 0.0) {
          counts[static_cast<std::size_t>(s + rank)] += counts[static_cast<std::size_t>(s)];
        }
      }
      reach += rank;
    }
    const std::int64_t observed = std::abs(2 * w2 - total2);
    double extreme = 0.0;
    for (std::int64_t s = 0; s <= total2; ++s) {
      if (std::abs(2 * s - total2) >= observed) extreme += counts[static_cast<std::size_t>(s)];
    }
    r.p_value = std::min(1.0, extreme / std::ldexp(1.0, static_cast<int>(m)));
    r.exact = true;
    return r;
  }

  const double n = static_cast<double>(m);
  double tie_term = 0.0;
  {
    std::vector<std::int64_t> sorted = ranks;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size();) {
      std::size_t j = i;
      while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
      const double t = static_cast<double>(j - i);
      tie_term += t * t * t - t;
      i = j;
    }
  }
  const double mean = n * (n + 1.0) / 4.0;
  const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
  // Continuity correction of one half.
  const double z = std::max(0.0, std::abs(r.w_plus - mean) - 0.5) / std::sqrt(var);
  r.p_value = std::min(1.0, 2.0 * detail::normal_sf(z));
  r.exact = false;
  return r;
}

}  // namespace tracenav
