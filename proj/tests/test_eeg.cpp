#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "wbmm/eeg_preproc.hpp"
#include "wbmm/rng.hpp"

using namespace wbmm;
using namespace wbmm::eeg;

// Reference values from tests/oracles/dsp_oracles.py (scipy).

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> test_signal(std::size_t n) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / 512.0;
    x[i] = std::sin(2 * kPi * 7 * t) + 0.5 * std::sin(2 * kPi * 60 * t) + 0.3 * std::cos(2 * kPi * 0.2 * t) +
           0.01 * static_cast<double>(i) / 512.0;
  }
  return x;
}

Matrix sinusoid(double hz, double seconds, double amp = 1.0) {
  const auto n = static_cast<Eigen::Index>(seconds * 512.0);
  Matrix x(1, n);
  for (Eigen::Index i = 0; i < n; ++i) x(0, i) = amp * std::sin(2 * kPi * hz * static_cast<double>(i) / 512.0);
  return x;
}

double rms(const Eigen::RowVectorXd& v) { return std::sqrt(v.squaredNorm() / static_cast<double>(v.size())); }

}  // namespace

TEST_CASE("corners place the band edges at -1 dB") {
  const BandpassFilter f(FilterSpec{});
  CHECK(std::abs(f.low_corner_hz() - 0.3843914786585884) < 1e-9);
  CHECK(std::abs(f.high_corner_hz() - 41.262690864384474) < 1e-9);
  CHECK(f.sections().size() == 4);
}

TEST_CASE("analytic response matches scipy") {
  const BandpassFilter f(FilterSpec{});
  const std::vector<std::pair<double, double>> ref{
      {0.5, -0.9999999999635473},   {1.0, -0.004138697549842436}, {10.0, -8.777017018108475e-05},
      {31.0, -0.7806829059342533},  {32.0, -1.0000000000000202},  {64.0, -32.89753803038239},
      {100.0, -69.58470999672437}};
  for (const auto& [hz, db] : ref) CHECK(std::abs(f.gain_db(hz) - db) < 1e-6);
  CHECK(f.gain(0.0) < 1e-12);
}

TEST_CASE("passband and stopband requirements") {
  const BandpassFilter f(FilterSpec{});
  for (double hz = 1.0; hz <= 31.0; hz += 0.25) CHECK(f.gain_db(hz) >= -1.0);
  CHECK(f.gain_db(0.0) <= -30.0);
  for (double hz = 64.0; hz <= 256.0; hz += 1.0) CHECK(f.gain_db(hz) <= -30.0);
}

TEST_CASE("filtfilt matches scipy sosfiltfilt") {
  const BandpassFilter f(FilterSpec{});
  const auto y = f.apply(std::span<const double>(test_signal(2048)));
  CHECK(std::abs(y[0] - -0.001262317028703561) < 1e-9);
  CHECK(std::abs(y[100] - 0.7417324047565568) < 1e-9);
  CHECK(std::abs(y[1024] - -0.02061825598620515) < 1e-9);
  CHECK(std::abs(y[2047] - -0.0002182238369157286) < 1e-9);
}

TEST_CASE("10 Hz sinusoid passes, DC is removed, zero stays zero") {
  const Matrix tone = bandpass(sinusoid(10.0, 10.0));
  const double ratio = rms(tone.row(0).segment(512, tone.cols() - 1024)) / std::sqrt(0.5);
  // The slow high-pass transient leaves a residue of order 1e-4 after 1 s.
  const BandpassFilter f(FilterSpec{});
  CHECK(ratio >= 0.89);
  CHECK(ratio <= 1.0 + 1e-3);
  CHECK(std::abs(ratio - f.gain(10.0)) < 1e-3);

  const Matrix dc = bandpass(Matrix::Constant(1, 5120, 5.0));
  CHECK(rms(dc.row(0).segment(512, dc.cols() - 1024)) <= 0.16);

  CHECK(bandpass(Matrix::Zero(2, 2048)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("short segments are an explicit error") {
  const BandpassFilter f(FilterSpec{});
  const auto n = static_cast<Eigen::Index>(f.min_length());
  CHECK_THROWS_WITH_AS(f.apply(Matrix::Zero(1, n)), doctest::Contains("segment too short to filter"),
                       ValidationError);
  CHECK_NOTHROW(f.apply(Matrix::Zero(1, n + 1)));
}

TEST_CASE("filter spec validation") {
  FilterSpec s;
  s.low_hz = 40.0;
  CHECK_THROWS_AS(validate(s), ValidationError);
  s = FilterSpec{};
  s.high_hz = 300.0;
  CHECK_THROWS_AS(validate(s), ValidationError);
  s = FilterSpec{};
  s.low_hz = 0.0;
  CHECK_THROWS_AS(validate(s), ValidationError);
}

TEST_CASE("decimator taps and outputs match scipy") {
  const Decimator d;
  const auto& taps = d.taps();
  REQUIRE(taps.size() == 287);
  CHECK(std::abs(taps[0] - 0.00022680552535670712) < 1e-12);
  CHECK(std::abs(taps[50] - 0.0005547156211868011) < 1e-12);
  CHECK(std::abs(taps[143] - 0.11703102092249883) < 1e-12);

  const auto x = test_signal(1000);
  const Matrix y = d.apply(Eigen::Map<const Matrix>(x.data(), 1, 1000));
  REQUIRE(y.cols() == 125);
  CHECK(std::abs(y(0, 0) - 0.2999999999999999) < 1e-9);
  CHECK(std::abs(y(0, 10) - 0.8511439301155627) < 1e-9);
  CHECK(std::abs(y(0, 60) - -0.2589133768784232) < 1e-9);
  CHECK(std::abs(y(0, 124) - -0.6399431700227645) < 1e-9);

  const std::vector<std::pair<double, double>> gains{
      {0.0, 1.0}, {26.0, 0.9926047881894432}, {30.0, 0.49917719360769647},
      {34.0, 0.005872385968234739}, {40.0, 0.00014103684153140097}};
  for (const auto& [hz, g] : gains) CHECK(std::abs(d.gain(hz) - g) < 1e-9);
}

TEST_CASE("resample_to_64 length and 10 Hz survival") {
  CHECK(resample_to_64(Matrix::Zero(1, 5120)).cols() == 640);
  CHECK(resample_to_64(Matrix::Zero(1, 5127)).cols() == 640);
  const Matrix y = resample_to_64(sinusoid(10.0, 10.0));
  const auto n = y.cols();
  Eigen::RowVectorXd ref(n);
  for (Eigen::Index i = 0; i < n; ++i) ref(i) = std::sin(2 * kPi * 10.0 * static_cast<double>(i) / 64.0);
  const auto mid = y.row(0).segment(32, n - 64);
  const auto rmid = ref.segment(32, n - 64);
  CHECK(rms(mid) / rms(rmid) >= 0.95);
  CHECK(mid.dot(rmid) / (mid.norm() * rmid.norm()) >= 0.98);
}

TEST_CASE("channel statistics") {
  Matrix x(1, 4);
  x << 1, -1, 1, -1;
  const auto s = channel_stats(x);
  CHECK(s[0].variance == doctest::Approx(1.0));
  CHECK(s[0].kurtosis == doctest::Approx(-2.0));
}

TEST_CASE("bad channels: flat and high-variance channels flagged") {
  Rng rng(3);
  Matrix x(16, 640);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  x.row(4).setZero();
  x.row(9) *= 20.0;
  const auto bad = detect_bad_channels(x);
  CHECK(bad == std::vector<std::size_t>{4, 9});

  Matrix clean(16, 640);
  for (Eigen::Index i = 0; i < clean.size(); ++i) clean.data()[i] = rng.normal();
  CHECK(detect_bad_channels(clean).empty());
  CHECK_THROWS_AS(detect_bad_channels(Matrix::Zero(4, 640)), DataError);
}

TEST_CASE("repair interpolates from good neighbours") {
  Matrix x(4, 3);
  x << 1, 1, 1,
       9, 9, 9,
       3, 3, 3,
       5, 5, 5;
  const NeighborMap nb{{1}, {0, 2}, {1, 3}, {2}};
  const auto r = repair_channels(x, {1}, nb);
  CHECK(r.eeg(1, 0) == doctest::Approx(2.0));
  CHECK(r.warnings.empty());

  const auto iso = repair_channels(x, {0, 1}, nb);
  CHECK(iso.eeg(0, 0) == doctest::Approx(4.0));  // mean of channels 2 and 3
  CHECK(iso.warnings.size() == 1);

  const auto map = biosemi128_neighbors();
  CHECK(map.size() == 128);
  CHECK(map[0] == std::vector<std::size_t>{1});
  CHECK(map[33] == std::vector<std::size_t>{32, 34});
}

TEST_CASE("mastoid re-reference subtracts the mastoid mean") {
  Matrix x(3, 2);
  x << 1, 2,
       3, 4,
       5, 8;
  const Matrix r = rereference_mastoids(x, {1, 2});
  CHECK(r(0, 0) == doctest::Approx(-3.0));
  CHECK(r(0, 1) == doctest::Approx(-4.0));
  CHECK(r(1, 0) + r(2, 0) == doctest::Approx(0.0));
  CHECK_THROWS_AS(rereference_mastoids(x, {0, 3}), ValidationError);
}

TEST_CASE("z-score gives exact unit statistics") {
  Rng rng(8);
  Matrix x(6, 1000);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = 3.0 + 7.0 * rng.normal();
  const Matrix z = zscore_channels(x);
  for (Eigen::Index c = 0; c < z.rows(); ++c) {
    const double mean = z.row(c).mean();
    const double sd = std::sqrt((z.row(c).array() - mean).square().mean());
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(sd - 1.0) < 1e-6);
  }
  CHECK_THROWS_AS(zscore_channels(Matrix::Ones(1, 10)), DataError);
}

TEST_CASE("full pipeline on a 128-channel trial") {
  Rng rng(21);
  Matrix x(128, 512 * 10);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  x.row(17) *= 50.0;
  const auto r = preprocess(x);
  CHECK(r.eeg.rows() == 128);
  CHECK(r.eeg.cols() == 640);
  CHECK(r.report.channel_stats.size() == 128);
  CHECK(std::find(r.report.bad_channels.begin(), r.report.bad_channels.end(), 17) != r.report.bad_channels.end());
  CHECK(r.report.stages.front() == "bandpass");
  for (Eigen::Index c = 0; c < 128; ++c) {
    if (c == 68 || c == 100) continue;
    CHECK(std::abs(r.eeg.row(c).mean()) < 1e-6);
  }
}
