#include "wbmm/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "wbmm/types.hpp"

namespace wbmm::stats {

SignedRankResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ValidationError("signed-rank test needs paired samples of equal length");
  if (a.size() < 5) throw ValidationError("signed-rank test needs at least 5 pairs");

  std::vector<double> diff;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    if (d != 0.0) diff.push_back(d);
  }
  if (diff.empty()) throw ValidationError("all paired differences are zero; the signed-rank test is undefined");

  const std::size_t n = diff.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return std::abs(diff[i]) < std::abs(diff[j]); });

  // Doubled average ranks keep tied ranks integral.
  std::vector<std::size_t> rank2(n);
  double tie_term = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(diff[order[j + 1]]) == std::abs(diff[order[i]])) ++j;
    const std::size_t doubled = (i + 1) + (j + 1);
    for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = doubled;
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }

  std::size_t w2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (diff[i] > 0) w2 += rank2[i];
  }

  SignedRankResult r;
  r.n = n;
  r.statistic = static_cast<double>(w2) / 2.0;
  const double nn = static_cast<double>(n);

  if (n <= kExactSignedRankLimit) {
    // Null: each rank enters W+ independently with probability 1/2.
    const std::size_t max_sum = std::accumulate(rank2.begin(), rank2.end(), std::size_t{0});
    std::vector<double> count(max_sum + 1, 0.0);
    count[0] = 1.0;
    for (std::size_t rk : rank2) {
      for (std::size_t s = max_sum; s >= rk; --s) count[s] += count[s - rk];
    }
    const double total = std::pow(2.0, nn);
    double lower = 0.0, upper = 0.0;
    for (std::size_t s = 0; s <= max_sum; ++s) {
      if (s <= w2) lower += count[s];
      if (s >= w2) upper += count[s];
    }
    r.exact = true;
    r.p_value = std::min(1.0, 2.0 * std::min(lower, upper) / total);
    return r;
  }

  const double mean = nn * (nn + 1) / 4.0;
  const double var = nn * (nn + 1) * (2 * nn + 1) / 24.0 - tie_term / 48.0;
  const double dev = std::abs(r.statistic - mean);
  const double z = var > 0 ? std::max(0.0, dev - 0.5) / std::sqrt(var) : 0.0;
  r.exact = false;
  r.p_value = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
  return r;
}

double binomial_ci95_halfwidth(double p, std::size_t n) {
  if (n == 0) return 1.0;
  return 1.959963984540054 * std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

}  // namespace wbmm::stats
