#include "wbmm/speech_features.hpp"

#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>
#include <string>

#include <fftw3.h>

namespace wbmm::speech {

namespace {

// fftw planning is not thread-safe; execution on a private plan is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    in_ = fftw_alloc_real(static_cast<std::size_t>(n));
    out_ = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
    std::lock_guard lock(fftw_planner_mutex());
    plan_ = fftw_plan_dft_r2c_1d(n, in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    {
      std::lock_guard lock(fftw_planner_mutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_; }

  // Power spectrum |X_k|^2, k = 0..n/2.
  void power(Eigen::Ref<Vector> out) {
    fftw_execute(plan_);
    for (int k = 0; k <= n_ / 2; ++k) {
      out[k] = out_[k][0] * out_[k][0] + out_[k][1] * out_[k][1];
    }
  }

 private:
  int n_;
  double* in_;
  fftw_complex* out_;
  fftw_plan plan_;
};

}  // namespace

int MelConfig::win_length() const { return static_cast<int>(std::lround(win_s * sample_rate_hz)); }
int MelConfig::hop_length() const { return static_cast<int>(std::lround(hop_s * sample_rate_hz)); }

void validate(const MelConfig& cfg) {
  if (cfg.sample_rate_hz <= 0) throw ValidationError("sample rate must be positive");
  if (cfg.n_mels <= 0) throw ValidationError("n_mels must be positive");
  if (!(cfg.fmin_hz >= 0 && cfg.fmin_hz < cfg.fmax_hz && cfg.fmax_hz <= cfg.sample_rate_hz / 2)) {
    throw ValidationError("mel range must satisfy 0 <= fmin < fmax <= sample_rate/2");
  }
  const double win = cfg.win_s * cfg.sample_rate_hz;
  if (std::abs(win - std::round(win)) > 1e-9) {
    throw ValidationError("window length must be an integral number of samples");
  }
  if (std::abs(cfg.hop_s * 2 - cfg.win_s) > 1e-12) throw ValidationError("hop must be half the window");
  if (cfg.n_fft < cfg.win_length()) throw ValidationError("FFT size shorter than the window");
  if (!(cfg.log_floor > 0)) throw ValidationError("log floor must be positive");
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> preemphasize(std::span<const double> audio, double alpha) {
  std::vector<double> out(audio.size());
  if (audio.empty()) return out;
  out[0] = audio[0];
  for (std::size_t t = 1; t < audio.size(); ++t) out[t] = audio[t] - alpha * audio[t - 1];
  return out;
}

std::vector<double> mel_centers_hz(const MelConfig& cfg) {
  const double lo = hz_to_mel(cfg.fmin_hz);
  const double hi = hz_to_mel(cfg.fmax_hz);
  std::vector<double> centers(static_cast<std::size_t>(cfg.n_mels));
  for (int m = 0; m < cfg.n_mels; ++m) {
    centers[static_cast<std::size_t>(m)] = mel_to_hz(lo + (hi - lo) * (m + 1) / (cfg.n_mels + 1));
  }
  return centers;
}

Matrix mel_filterbank(const MelConfig& cfg) {
  validate(cfg);
  const double lo = hz_to_mel(cfg.fmin_hz);
  const double hi = hz_to_mel(cfg.fmax_hz);
  std::vector<double> edges(static_cast<std::size_t>(cfg.n_mels + 2));
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / (cfg.n_mels + 1));
  }
  const int n_bins = cfg.n_bins();
  const double bin_hz = cfg.sample_rate_hz / cfg.n_fft;
  Matrix bank = Matrix::Zero(cfg.n_mels, n_bins);
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double left = edges[static_cast<std::size_t>(m)];
    const double center = edges[static_cast<std::size_t>(m + 1)];
    const double right = edges[static_cast<std::size_t>(m + 2)];
    for (int k = 0; k < n_bins; ++k) {
      const double f = k * bin_hz;
      const double rise = (f - left) / (center - left);
      const double fall = (right - f) / (right - center);
      bank(m, k) = std::max(0.0, std::min(rise, fall));
    }
  }
  return bank;
}

std::size_t frame_count(std::size_t n_samples, const MelConfig& cfg) {
  const auto win = static_cast<std::size_t>(cfg.win_length());
  const auto hop = static_cast<std::size_t>(cfg.hop_length());
  if (n_samples < win) return 0;
  return 1 + (n_samples - win) / hop;
}

Matrix melspectrogram(std::span<const double> audio, const MelConfig& cfg) {
  validate(cfg);
  const int win = cfg.win_length();
  const int hop = cfg.hop_length();
  if (audio.size() < static_cast<std::size_t>(win)) {
    throw ValidationError("audio of " + std::to_string(audio.size()) +
                          " samples is shorter than one analysis window (" + std::to_string(win) +
                          ")");
  }
  const std::vector<double> emphasized = preemphasize(audio, cfg.preemphasis);
  const std::size_t frames = frame_count(audio.size(), cfg);

  std::vector<double> window(static_cast<std::size_t>(win));
  for (int i = 0; i < win; ++i) {
    window[static_cast<std::size_t>(i)] =
        0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (win - 1));
  }

  const Matrix bank = mel_filterbank(cfg);
  Matrix power(cfg.n_bins(), static_cast<Eigen::Index>(frames));
  RealFft fft(cfg.n_fft);
  Vector column(cfg.n_bins());
  for (std::size_t f = 0; f < frames; ++f) {
    double* in = fft.input();
    const std::size_t offset = f * static_cast<std::size_t>(hop);
    for (int i = 0; i < win; ++i) {
      in[i] = emphasized[offset + static_cast<std::size_t>(i)] * window[static_cast<std::size_t>(i)];
    }
    for (int i = win; i < cfg.n_fft; ++i) in[i] = 0.0;
    fft.power(column);
    power.col(static_cast<Eigen::Index>(f)) = column;
  }

  Matrix mel = bank * power;
  if (cfg.log_compress) mel = (mel.array() + cfg.log_floor).log().matrix();
  if (cfg.normalize && frames > 1) {
    for (Eigen::Index r = 0; r < mel.rows(); ++r) {
      const double mean = mel.row(r).mean();
      const double var = (mel.row(r).array() - mean).square().mean();
      const double sd = var > 0 ? std::sqrt(var) : 1.0;
      mel.row(r) = (mel.row(r).array() - mean) / sd;
    }
  }
  return mel;
}

}  // namespace wbmm::speech
