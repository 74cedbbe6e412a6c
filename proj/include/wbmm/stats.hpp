#pragma once

#include <span>

namespace wbmm::stats {

struct SignedRankResult {
  double statistic{0};   // W+, sum of ranks of positive differences
  std::size_t n{0};      // non-zero differences used
  double p_value{1};     // two-sided
  bool exact{true};
};

// Largest number of non-zero differences handled by exact enumeration.
inline constexpr std::size_t kExactSignedRankLimit = 25;

// Two-sided Wilcoxon signed-rank test of paired samples a and b. Zero
// differences are discarded and tied magnitudes receive average ranks.
// Exact null distribution for n <= 25, tie-corrected normal approximation
// with continuity correction above. Throws ValidationError when the samples
// differ in length, have fewer than 5 pairs, or every difference is zero.
SignedRankResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b);

// Binomial-proportion 95% interval half-width (normal approximation).
double binomial_ci95_halfwidth(double p, std::size_t n);

}  // namespace wbmm::stats
