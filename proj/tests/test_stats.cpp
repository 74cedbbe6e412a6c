#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "wbmm/rng.hpp"
#include "wbmm/stats.hpp"
#include "wbmm/types.hpp"

using namespace wbmm;
using namespace wbmm::stats;

// Reference values from tests/oracles/dsp_oracles.py (scipy.stats.wilcoxon
// and brute-force sign enumeration).

TEST_CASE("exact test matches scipy") {
  const std::vector<double> a{1.83, 0.50, 1.62, 2.48, 1.68, 1.88, 1.55, 3.06, 1.30};
  const std::vector<double> b{0.878, 0.647, 0.598, 2.05, 1.06, 1.29, 1.06, 3.14, 1.29};
  const auto r = wilcoxon_signed_rank(a, b);
  CHECK(r.exact);
  CHECK(r.n == 9);
  CHECK(r.statistic == doctest::Approx(40.0));
  CHECK(std::abs(r.p_value - 0.0390625) < 1e-12);
  const auto flipped = wilcoxon_signed_rank(b, a);
  CHECK(std::abs(flipped.p_value - r.p_value) < 1e-12);
}

TEST_CASE("tied magnitudes match brute-force enumeration") {
  const std::vector<double> d{1, -2, 2, 3, 3, 3, -4, 5, 6, 0, 7, -1};
  const std::vector<double> zeros(d.size(), 0.0);
  const auto r = wilcoxon_signed_rank(d, zeros);
  CHECK(r.n == 11);
  CHECK(r.statistic == doctest::Approx(53.0));
  CHECK(std::abs(r.p_value - 0.0791015625) < 1e-12);
}

TEST_CASE("constant shift over ten pairs gives the minimal p") {
  std::vector<double> a(10), b(10);
  for (int i = 0; i < 10; ++i) {
    b[static_cast<std::size_t>(i)] = 0.37 * i * i - i;
    a[static_cast<std::size_t>(i)] = b[static_cast<std::size_t>(i)] + 0.5;
  }
  const auto r = wilcoxon_signed_rank(a, b);
  CHECK(r.statistic == doctest::Approx(55.0));
  CHECK(std::abs(r.p_value - 2.0 / 1024.0) < 1e-15);
}

TEST_CASE("normal approximation above the exact limit matches scipy") {
  const std::vector<double> a{0.4, 0.2, 0.9, 0.4, -0.2, 0.7, 1.6, 1.2, -0.4, -1.0, -0.3, 0.3, -2.0, 0.1,
                              -0.9, -0.4, -0.2, -0.0, 0.7, 1.3, 0.2, 1.7, -0.4, 0.7, 1.2, 0.4, -0.4, -0.6,
                              -0.2, 0.5, -0.7, 0.1, 0.1, 0.8, 0.5, 0.7, -0.4, 0.2, 1.1, 1.8};
  const std::vector<double> zeros(a.size(), 0.0);
  const auto r = wilcoxon_signed_rank(a, zeros);
  CHECK_FALSE(r.exact);
  CHECK(r.n == 39);
  CHECK(std::abs(r.p_value - 0.05818592911528129) < 1e-12);
}

TEST_CASE("degenerate inputs are errors") {
  const std::vector<double> a{1, 2, 3, 4, 5, 6};
  CHECK_THROWS_AS(wilcoxon_signed_rank(a, a), ValidationError);
  CHECK_THROWS_AS(wilcoxon_signed_rank(std::vector<double>{1, 2, 3, 4}, std::vector<double>{0, 0, 0, 0}),
                  ValidationError);
  CHECK_THROWS_AS(wilcoxon_signed_rank(a, std::vector<double>{1, 2, 3}), ValidationError);
}

TEST_CASE("calibration under the null") {
  Rng rng(2024);
  int rejections = 0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    std::vector<double> a(20), b(20);
    for (std::size_t i = 0; i < 20; ++i) {
      a[i] = rng.normal();
      b[i] = rng.normal();
    }
    rejections += wilcoxon_signed_rank(a, b).p_value < 0.05 ? 1 : 0;
  }
  const double rate = static_cast<double>(rejections) / trials;
  CHECK(rate >= 0.03);
  CHECK(rate <= 0.07);
}

TEST_CASE("binomial interval half-width") {
  CHECK(binomial_ci95_halfwidth(0.5, 100) == doctest::Approx(1.959963984540054 * 0.05));
  CHECK(binomial_ci95_halfwidth(0.5, 400) == doctest::Approx(1.959963984540054 * 0.025));
}
