#include "wbmm/eeg_preproc.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace wbmm::eeg {

namespace {

constexpr double kPi = std::numbers::pi;

// Butterworth magnitude at the band edges, as a factor of 10^(dB/20), of the
// zero-phase response.
constexpr double kEdgeAttenuationDb = 1.0;

double median(std::vector<double> v) {
  const std::size_t n = v.size();
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n / 2), v.end());
  double hi = v[n / 2];
  if (n % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n / 2));
  return 0.5 * (lo + hi);
}

// Conjugate pole pairs of an order-N Butterworth prototype (unit cutoff), upper half plane.
std::vector<std::complex<double>> prototype_poles(int order) {
  std::vector<std::complex<double>> poles;
  for (int k = 0; k < order / 2; ++k) {
    const double theta = kPi * (2.0 * k + order + 1) / (2.0 * order);
    poles.emplace_back(std::cos(theta), std::sin(theta));
  }
  return poles;
}

// Bilinear transform with prewarping folded in: s-plane poles are expressed
// in units of 2*fs so z = (1 + s) / (1 - s).
std::complex<double> bilinear(std::complex<double> s) { return (1.0 + s) / (1.0 - s); }

std::vector<Biquad> butterworth_sections(int order, double warped, bool highpass) {
  std::vector<Biquad> sections;
  for (const auto& p : prototype_poles(order)) {
    const std::complex<double> s = highpass ? warped / p : warped * p;
    const std::complex<double> z = bilinear(s);
    Biquad q;
    q.a1 = -2.0 * z.real();
    q.a2 = std::norm(z);
    if (highpass) {
      q.b0 = 1;
      q.b1 = -2;
      q.b2 = 1;
    } else {
      q.b0 = 1;
      q.b1 = 2;
      q.b2 = 1;
    }
    const double omega = highpass ? kPi : 0.0;
    const double g = std::abs(q.response(omega));
    q.b0 /= g;
    q.b1 /= g;
    q.b2 /= g;
    sections.push_back(q);
  }
  if (order % 2 == 1) {
    const std::complex<double> s = highpass ? std::complex<double>(-warped) : -warped;
    const double z = bilinear(s).real();
    Biquad q;
    q.a1 = -z;
    q.b0 = 1;
    q.b1 = highpass ? -1 : 1;
    const double g = std::abs(q.response(highpass ? kPi : 0.0));
    q.b0 /= g;
    q.b1 /= g;
    sections.push_back(q);
  }
  return sections;
}

void filter_in_place(std::vector<double>& x, const std::vector<Biquad>& sections) {
  if (x.empty()) return;
  // Initial state is the steady-state response to a constant input of x[0].
  double x0 = x[0];
  for (const Biquad& q : sections) {
    const double dc = (q.b0 + q.b1 + q.b2) / (1.0 + q.a1 + q.a2);
    const double y_ss = x0 * dc;
    double z1 = y_ss - q.b0 * x0;
    double z2 = q.b2 * x0 - q.a2 * y_ss;
    for (double& v : x) {
      const double in = v;
      const double out = q.b0 * in + z1;
      z1 = q.b1 * in - q.a1 * out + z2;
      z2 = q.b2 * in - q.a2 * out;
      v = out;
    }
    x0 = y_ss;
  }
}

// Odd extension about both end points.
std::vector<double> odd_extend(std::span<const double> x, std::size_t pad) {
  const std::size_t n = x.size();
  std::vector<double> ext(n + 2 * pad);
  for (std::size_t i = 0; i < pad; ++i) ext[i] = 2.0 * x[0] - x[pad - i];
  std::copy(x.begin(), x.end(), ext.begin() + static_cast<std::ptrdiff_t>(pad));
  for (std::size_t i = 0; i < pad; ++i) ext[pad + n + i] = 2.0 * x[n - 1] - x[n - 2 - i];
  return ext;
}

}  // namespace

std::complex<double> Biquad::response(double omega) const {
  const std::complex<double> z1 = std::polar(1.0, -omega);
  const std::complex<double> z2 = z1 * z1;
  return (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2);
}

void validate(const FilterSpec& spec) {
  const double nyquist = spec.sample_rate_hz / 2.0;
  if (!(spec.low_hz > 0 && spec.low_hz < spec.high_hz && spec.high_hz < nyquist)) {
    throw ValidationError("band-pass edges must satisfy 0 < low < high < Nyquist (" +
                          std::to_string(nyquist) + " Hz)");
  }
  if (spec.order < 1 || spec.order > 12) throw ValidationError("filter order must be in [1, 12]");
}

BandpassFilter::BandpassFilter(const FilterSpec& spec) : spec_(spec) {
  validate(spec);
  const double fs = spec.sample_rate_hz;
  const int passes = spec.zero_phase ? 2 : 1;
  // Ratio of edge to corner (warped) that puts the edge at -kEdgeAttenuationDb
  // of the applied response: (1 + r^2N)^(-passes/2) = 10^(-dB/20).
  const double r = std::pow(std::pow(10.0, kEdgeAttenuationDb / (10.0 * passes)) - 1.0,
                            1.0 / (2.0 * spec.order));
  const double warped_high_edge = std::tan(kPi * spec.high_hz / fs);
  const double warped_low_edge = std::tan(kPi * spec.low_hz / fs);
  const double warped_lp = warped_high_edge / r;
  const double warped_hp = warped_low_edge * r;
  if (std::atan(warped_lp) >= kPi / 2 * 0.999) {
    throw ValidationError("high edge too close to Nyquist for the requested order");
  }
  high_corner_hz_ = std::atan(warped_lp) * fs / kPi;
  low_corner_hz_ = std::atan(warped_hp) * fs / kPi;
  sections_ = butterworth_sections(spec.order, warped_hp, true);
  auto lp = butterworth_sections(spec.order, warped_lp, false);
  sections_.insert(sections_.end(), lp.begin(), lp.end());
}

double BandpassFilter::single_pass_gain(double hz) const {
  const double omega = 2.0 * kPi * hz / spec_.sample_rate_hz;
  double g = 1.0;
  for (const Biquad& q : sections_) g *= std::abs(q.response(omega));
  return g;
}

double BandpassFilter::gain(double hz) const {
  const double g = single_pass_gain(hz);
  return spec_.zero_phase ? g * g : g;
}

double BandpassFilter::gain_db(double hz) const {
  return 20.0 * std::log10(std::max(gain(hz), 1e-300));
}

std::size_t BandpassFilter::min_length() const {
  return 3 * (2 * 2 * static_cast<std::size_t>(spec_.order) + 1);
}

std::vector<double> BandpassFilter::apply(std::span<const double> x) const {
  const std::size_t n = x.size();
  if (n <= min_length()) {
    throw ValidationError("segment too short to filter: " + std::to_string(n) +
                          " samples, need more than " + std::to_string(min_length()));
  }
  if (!spec_.zero_phase) {
    std::vector<double> y(x.begin(), x.end());
    filter_in_place(y, sections_);
    return y;
  }
  // Reflection long enough to cover the slow high-pass transient.
  const auto settle = static_cast<std::size_t>(std::ceil(3.0 * spec_.sample_rate_hz / low_corner_hz_));
  const std::size_t pad = std::min(n - 1, std::max(min_length(), settle));
  std::vector<double> ext = odd_extend(x, pad);
  filter_in_place(ext, sections_);
  std::reverse(ext.begin(), ext.end());
  filter_in_place(ext, sections_);
  std::reverse(ext.begin(), ext.end());
  return {ext.begin() + static_cast<std::ptrdiff_t>(pad),
          ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

Matrix BandpassFilter::apply(const Matrix& signal) const {
  Matrix out(signal.rows(), signal.cols());
  std::vector<double> row(static_cast<std::size_t>(signal.cols()));
  for (Eigen::Index c = 0; c < signal.rows(); ++c) {
    Eigen::Map<Eigen::RowVectorXd>(row.data(), signal.cols()) = signal.row(c);
    const std::vector<double> y = apply(std::span<const double>(row));
    out.row(c) = Eigen::Map<const Eigen::RowVectorXd>(y.data(), signal.cols());
  }
  return out;
}

Matrix bandpass(const Matrix& eeg, const FilterSpec& spec) { return BandpassFilter(spec).apply(eeg); }

Decimator::Decimator(std::size_t factor, double sample_rate_hz, double cutoff_hz,
                     double transition_hz, double attenuation_db)
    : factor_(factor), sample_rate_hz_(sample_rate_hz) {
  if (factor == 0) throw ValidationError("decimation factor must be positive");
  // Kaiser window design.
  const double a = attenuation_db;
  double beta = 0.0;
  if (a > 50) {
    beta = 0.1102 * (a - 8.7);
  } else if (a >= 21) {
    beta = 0.5842 * std::pow(a - 21, 0.4) + 0.07886 * (a - 21);
  }
  const double delta_omega = 2.0 * kPi * transition_hz / sample_rate_hz;
  auto length = static_cast<std::size_t>(std::ceil((a - 8.0) / (2.285 * delta_omega))) + 1;
  if (length % 2 == 0) ++length;
  const double center = static_cast<double>(length - 1) / 2.0;
  const double fc = cutoff_hz / sample_rate_hz;
  const double norm = std::cyl_bessel_i(0.0, beta);
  taps_.resize(length);
  double sum = 0.0;
  for (std::size_t i = 0; i < length; ++i) {
    const double m = static_cast<double>(i) - center;
    const double sinc = m == 0.0 ? 2.0 * fc : std::sin(2.0 * kPi * fc * m) / (kPi * m);
    const double ratio = m / center;
    const double w = std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - ratio * ratio))) / norm;
    taps_[i] = sinc * w;
    sum += taps_[i];
  }
  for (double& t : taps_) t /= sum;
}

double Decimator::gain(double hz) const {
  const double omega = 2.0 * kPi * hz / sample_rate_hz_;
  std::complex<double> acc = 0.0;
  for (std::size_t k = 0; k < taps_.size(); ++k) acc += taps_[k] * std::polar(1.0, -omega * static_cast<double>(k));
  return std::abs(acc);
}

Matrix Decimator::apply(const Matrix& signal) const {
  const auto n = static_cast<std::size_t>(signal.cols());
  const std::size_t out_len = n / factor_;
  Matrix out(signal.rows(), static_cast<Eigen::Index>(out_len));
  if (out_len == 0) return out;
  if (n < 2) throw ValidationError("signal too short to resample");
  const std::size_t half = (taps_.size() - 1) / 2;
  const std::size_t pad = std::min(half, n - 1);
  std::vector<double> row(n);
  for (Eigen::Index c = 0; c < signal.rows(); ++c) {
    Eigen::Map<Eigen::RowVectorXd>(row.data(), signal.cols()) = signal.row(c);
    const std::vector<double> ext = odd_extend(row, pad);
    const auto ext_len = static_cast<std::ptrdiff_t>(ext.size());
    for (std::size_t m = 0; m < out_len; ++m) {
      // Output sample m is centred on input sample m * factor.
      const auto centre = static_cast<std::ptrdiff_t>(m * factor_ + pad);
      double acc = 0.0;
      for (std::size_t k = 0; k < taps_.size(); ++k) {
        const std::ptrdiff_t idx = centre + static_cast<std::ptrdiff_t>(half) - static_cast<std::ptrdiff_t>(k);
        if (idx >= 0 && idx < ext_len) acc += taps_[k] * ext[static_cast<std::size_t>(idx)];
      }
      out(c, static_cast<Eigen::Index>(m)) = acc;
    }
  }
  return out;
}

Matrix resample_to_64(const Matrix& eeg) {
  static const Decimator decimator;
  return decimator.apply(eeg);
}

std::vector<ChannelStats> channel_stats(const Matrix& eeg) {
  std::vector<ChannelStats> stats(static_cast<std::size_t>(eeg.rows()));
  const auto n = static_cast<double>(eeg.cols());
  for (Eigen::Index c = 0; c < eeg.rows(); ++c) {
    const double mean = eeg.row(c).mean();
    const Eigen::ArrayXd centred = (eeg.row(c).array() - mean).transpose();
    const double m2 = centred.square().sum() / n;
    const double m4 = centred.square().square().sum() / n;
    stats[static_cast<std::size_t>(c)] = {m2, m2 > 0 ? m4 / (m2 * m2) - 3.0 : 0.0};
  }
  return stats;
}

std::vector<std::size_t> detect_bad_channels(const Matrix& eeg, const BadChannelRule& rule) {
  if (eeg.cols() < 64) throw ValidationError("bad-channel detection needs at least 64 samples");
  const auto stats = channel_stats(eeg);
  std::vector<double> log_var;
  for (const auto& s : stats) {
    if (s.variance > 0) log_var.push_back(std::log(s.variance));
  }
  std::vector<std::size_t> bad;
  double centre = 0.0;
  double threshold = 0.0;
  if (!log_var.empty()) {
    centre = median(log_var);
    std::vector<double> dev;
    dev.reserve(log_var.size());
    for (double v : log_var) dev.push_back(std::abs(v - centre));
    // 1.4826 * MAD is the consistent estimate of a normal standard deviation.
    const double mad = 1.4826 * median(dev);
    threshold = std::max(rule.mad_multiplier * mad, rule.min_log_deviation);
  }
  for (std::size_t c = 0; c < stats.size(); ++c) {
    const double v = stats[c].variance;
    if (!(v > 0) || std::abs(std::log(v) - centre) > threshold) bad.push_back(c);
  }
  if (bad.size() == stats.size()) throw DataError("every channel flagged as bad; trial unusable");
  return bad;
}

NeighborMap biosemi128_neighbors() {
  NeighborMap map(kChannels);
  for (std::size_t c = 0; c < kChannels; ++c) {
    const std::size_t bundle = c / 32;
    const std::size_t pos = c % 32;
    if (pos > 0) map[c].push_back(bundle * 32 + pos - 1);
    if (pos < 31) map[c].push_back(bundle * 32 + pos + 1);
  }
  return map;
}

RepairResult repair_channels(const Matrix& eeg, const std::vector<std::size_t>& bad,
                             const NeighborMap& neighbors) {
  RepairResult result{eeg, {}};
  if (bad.empty()) return result;
  const auto channels = static_cast<std::size_t>(eeg.rows());
  std::vector<bool> is_bad(channels, false);
  for (std::size_t c : bad) {
    if (c >= channels) throw ValidationError("bad channel index out of range");
    is_bad[c] = true;
  }
  std::vector<std::size_t> good;
  for (std::size_t c = 0; c < channels; ++c) {
    if (!is_bad[c]) good.push_back(c);
  }
  if (good.empty()) throw DataError("no good channels left to repair from");

  for (std::size_t c : bad) {
    std::vector<std::size_t> sources;
    if (c < neighbors.size()) {
      for (std::size_t n : neighbors[c]) {
        if (n < channels && !is_bad[n]) sources.push_back(n);
      }
    }
    if (sources.empty()) {
      sources = good;
      result.warnings.push_back("channel " + std::to_string(c) +
                                " has no good neighbour; using the mean of all good channels");
    }
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(eeg.cols());
    for (std::size_t n : sources) acc += eeg.row(static_cast<Eigen::Index>(n));
    result.eeg.row(static_cast<Eigen::Index>(c)) = acc / static_cast<double>(sources.size());
  }
  return result;
}

Matrix rereference_mastoids(const Matrix& eeg, std::pair<std::size_t, std::size_t> mastoids) {
  const auto channels = static_cast<std::size_t>(eeg.rows());
  if (mastoids.first >= channels || mastoids.second >= channels) {
    throw ValidationError("mastoid channel index out of range");
  }
  const Eigen::RowVectorXd reference =
      0.5 * (eeg.row(static_cast<Eigen::Index>(mastoids.first)) +
             eeg.row(static_cast<Eigen::Index>(mastoids.second)));
  Matrix out = eeg;
  out.rowwise() -= reference;
  return out;
}

Matrix zscore_channels(const Matrix& eeg) {
  Matrix out(eeg.rows(), eeg.cols());
  const auto n = static_cast<double>(eeg.cols());
  for (Eigen::Index c = 0; c < eeg.rows(); ++c) {
    const double mean = eeg.row(c).mean();
    const Eigen::RowVectorXd centred = eeg.row(c).array() - mean;
    const double sd = std::sqrt(centred.squaredNorm() / n);
    if (!(sd > 0) || !std::isfinite(sd)) {
      throw DataError("channel " + std::to_string(c) + " has zero variance at z-scoring");
    }
    out.row(c) = centred / sd;
  }
  return out;
}

PreprocResult preprocess(const Matrix& eeg_512, const PreprocConfig& cfg) {
  PreprocResult result;
  PreprocReport& report = result.report;
  report.channel_stats = channel_stats(eeg_512);

  Matrix x = bandpass(eeg_512, cfg.filter);
  report.stages.push_back("bandpass");
  x = resample_to_64(x);
  report.stages.push_back("resample");

  report.bad_channels = detect_bad_channels(x, cfg.bad_channel_rule);
  report.stages.push_back("detect_bad_channels");
  const NeighborMap& neighbors =
      cfg.neighbors.empty() && x.rows() == static_cast<Eigen::Index>(kChannels) ? biosemi128_neighbors()
                                                                                 : cfg.neighbors;
  RepairResult repaired = repair_channels(x, report.bad_channels, neighbors);
  report.warnings = std::move(repaired.warnings);
  x = std::move(repaired.eeg);
  report.stages.push_back("repair_channels");

  if (cfg.zscore_before_reference) {
    x = zscore_channels(x);
    report.stages.push_back("zscore");
    x = rereference_mastoids(x, cfg.mastoids);
    report.stages.push_back("rereference");
  } else {
    x = rereference_mastoids(x, cfg.mastoids);
    report.stages.push_back("rereference");
    x = zscore_channels(x);
    report.stages.push_back("zscore");
  }
  result.eeg = std::move(x);
  return result;
}

}  // namespace wbmm::eeg
