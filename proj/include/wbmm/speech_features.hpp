#pragma once

#include <span>
#include <vector>

#include "wbmm/types.hpp"

namespace wbmm::speech {

struct MelConfig {
  double sample_rate_hz{16000.0};
  int n_mels{28};
  double fmin_hz{0.0};
  double fmax_hz{8000.0};
  double preemphasis{0.97};
  double win_s{0.03125};
  double hop_s{0.015625};
  int n_fft{512};
  bool log_compress{true};
  double log_floor{1e-10};
  // Per-sentence mean/variance normalisation of each mel band.
  bool normalize{false};

  int win_length() const;
  int hop_length() const;
  int n_bins() const { return n_fft / 2 + 1; }
};

// Throws ValidationError on inconsistent settings.
void validate(const MelConfig& cfg);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

std::vector<double> preemphasize(std::span<const double> audio, double alpha);

// [n_mels x n_bins] triangular filters, centres equally spaced in mel.
Matrix mel_filterbank(const MelConfig& cfg);

// Centre frequency (Hz) of each mel filter.
std::vector<double> mel_centers_hz(const MelConfig& cfg);

std::size_t frame_count(std::size_t n_samples, const MelConfig& cfg);

// [n_mels x T] features with T = 1 + floor((N - win) / hop).
Matrix melspectrogram(std::span<const double> audio, const MelConfig& cfg = {});

}  // namespace wbmm::speech
