#pragma once

#include <complex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wbmm/types.hpp"

namespace wbmm::eeg {

inline constexpr double kRawRateHz = 512.0;
inline constexpr double kTargetRateHz = 64.0;
inline constexpr std::size_t kDecimation = 8;
inline constexpr std::size_t kChannels = 128;

struct FilterSpec {
  double low_hz{0.5};
  double high_hz{32.0};
  // Butterworth order of each edge (high-pass and low-pass section).
  int order{4};
  bool zero_phase{true};
  double sample_rate_hz{kRawRateHz};
};

void validate(const FilterSpec& spec);

// Direct-form II transposed biquad, a0 normalised to 1.
struct Biquad {
  double b0{1}, b1{0}, b2{0}, a1{0}, a2{0};

  std::complex<double> response(double omega) const;
};

// Cascade of second-order sections realising the band-pass. The low-pass
// and high-pass corners are placed so that `low_hz` and `high_hz` sit at
// -1 dB of the zero-phase (two-pass) magnitude response.
class BandpassFilter {
 public:
  explicit BandpassFilter(const FilterSpec& spec);

  // Magnitude of one forward pass at frequency `hz`.
  double single_pass_gain(double hz) const;
  // Magnitude actually applied by `apply` (squared when zero-phase).
  double gain(double hz) const;
  double gain_db(double hz) const;

  // `apply` needs more samples than this: three times the coefficient
  // count of the full transfer function.
  std::size_t min_length() const;

  Matrix apply(const Matrix& signal) const;
  std::vector<double> apply(std::span<const double> x) const;

  const std::vector<Biquad>& sections() const { return sections_; }
  double low_corner_hz() const { return low_corner_hz_; }
  double high_corner_hz() const { return high_corner_hz_; }

 private:
  FilterSpec spec_;
  std::vector<Biquad> sections_;
  double low_corner_hz_{0};
  double high_corner_hz_{0};
};

Matrix bandpass(const Matrix& eeg, const FilterSpec& spec = {});

// Anti-aliased 8:1 decimation (512 Hz -> 64 Hz). Output has floor(N/8) columns.
class Decimator {
 public:
  Decimator(std::size_t factor = kDecimation, double sample_rate_hz = kRawRateHz,
            double cutoff_hz = 30.0, double transition_hz = 4.0, double attenuation_db = 40.0);

  Matrix apply(const Matrix& signal) const;
  double gain(double hz) const;
  const std::vector<double>& taps() const { return taps_; }

 private:
  std::size_t factor_;
  double sample_rate_hz_;
  std::vector<double> taps_;
};

Matrix resample_to_64(const Matrix& eeg);

struct ChannelStats {
  double variance{0};
  double kurtosis{0};
};

std::vector<ChannelStats> channel_stats(const Matrix& eeg);

struct BadChannelRule {
  double mad_multiplier{3.0};
  // Smallest |log-variance deviation| that can flag a channel.
  double min_log_deviation{1.3862943611198906};  // log(4)
};

std::vector<std::size_t> detect_bad_channels(const Matrix& eeg, const BadChannelRule& rule = {});

using NeighborMap = std::vector<std::vector<std::size_t>>;

// Ring neighbours inside each 32-electrode BioSemi bundle (A, B, C, D).
NeighborMap biosemi128_neighbors();

struct RepairResult {
  Matrix eeg;
  std::vector<std::string> warnings;
};

RepairResult repair_channels(const Matrix& eeg, const std::vector<std::size_t>& bad,
                             const NeighborMap& neighbors);

Matrix rereference_mastoids(const Matrix& eeg, std::pair<std::size_t, std::size_t> mastoids);

Matrix zscore_channels(const Matrix& eeg);

struct PreprocConfig {
  FilterSpec filter{};
  BadChannelRule bad_channel_rule{};
  std::pair<std::size_t, std::size_t> mastoids{68, 100};
  NeighborMap neighbors{};  // empty selects biosemi128_neighbors() for 128 channels
  bool zscore_before_reference{false};
};

struct PreprocReport {
  std::string subject_id;
  int trial_id{0};
  std::vector<std::size_t> bad_channels;
  std::vector<ChannelStats> channel_stats;
  std::vector<std::string> stages;
  std::vector<std::string> warnings;
};

struct PreprocResult {
  Matrix eeg;  // [channels x floor(N/8)] at 64 Hz
  PreprocReport report;
};

// bandpass -> resample -> bad-channel detect/repair -> re-reference -> z-score.
PreprocResult preprocess(const Matrix& eeg_512, const PreprocConfig& cfg = {});

}  // namespace wbmm::eeg
