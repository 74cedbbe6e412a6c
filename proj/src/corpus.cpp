#include "wbmm/corpus.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>

#include <openssl/evp.h>

#include <json.hpp>

#include "wbmm/log.hpp"
#include "wbmm/rng.hpp"

namespace wbmm::corpus {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kFrameRate = segmentation::kFrameRateHz;
constexpr double kDurationSlackS = 1.0;
constexpr std::size_t kMinSentenceFrames = 9;

// Synthetic generator constants.
constexpr int kBands = 8;
constexpr std::array<double, kBands> kBandHz{250, 500, 850, 1300, 1900, 2700, 3800, 5300};
constexpr int kLeadFrames = 64;
constexpr double kToneAmplitude = 0.05;
constexpr double kToneLogSpread = 0.5;
constexpr double kBackgroundSigma = 0.003;
constexpr double kResponseTau_s = 0.015;
constexpr double kResponseLength_s = 0.19;
constexpr double kSubjectMixingJitter = 0.1;
constexpr double kChannelOffsetSigma = 5.0;

template <typename T>
void write_le(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw DataError("unexpected end of file");
  return value;
}

std::string trial_stem(int trial_id) {
  std::ostringstream os;
  os << "trial_" << std::setw(2) << std::setfill('0') << trial_id;
  return os.str();
}

std::vector<std::vector<std::string>> read_tsv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, '\t')) cells.push_back(cell);
    // A first row whose leading cell is not numeric is a header.
    if (first && !cells.empty() && !cells[0].empty() &&
        !(std::isdigit(static_cast<unsigned char>(cells[0][0])) || cells[0][0] == '-' || cells[0][0] == '.')) {
      first = false;
      continue;
    }
    first = false;
    rows.push_back(std::move(cells));
  }
  return rows;
}

double parse_double(const std::string& s, const fs::path& path) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError(path.string() + ": malformed number '" + s + "'");
  }
}

struct StimulusFiles {
  std::vector<double> audio;
  double rate_hz{kAudioRateHz};
  std::vector<TimeSpan> sentences;
  std::vector<std::vector<WordSpan>> words;
};

StimulusFiles read_stimulus(const fs::path& root, int trial_id) {
  const fs::path dir = root / "stimuli";
  const std::string stem = trial_stem(trial_id);
  StimulusFiles s;
  s.audio = read_wav(dir / (stem + ".wav"), &s.rate_hz);
  const fs::path sent_path = dir / (stem + ".sentences.tsv");
  for (const auto& row : read_tsv(sent_path)) {
    if (row.size() < 2) throw DataError(sent_path.string() + ": expected start_s and end_s columns");
    s.sentences.push_back({parse_double(row[0], sent_path), parse_double(row[1], sent_path)});
  }
  s.words.resize(s.sentences.size());
  const fs::path word_path = dir / (stem + ".words.tsv");
  for (const auto& row : read_tsv(word_path)) {
    if (row.size() < 3) throw DataError(word_path.string() + ": expected sentence, start_s, end_s[, token]");
    const auto idx = static_cast<long>(parse_double(row[0], word_path));
    if (idx < 0 || static_cast<std::size_t>(idx) >= s.words.size()) {
      throw DataError(word_path.string() + ": word refers to unknown sentence " + row[0]);
    }
    s.words[static_cast<std::size_t>(idx)].push_back(
        {parse_double(row[1], word_path), parse_double(row[2], word_path), row.size() > 3 ? row[3] : ""});
  }
  return s;
}

int parse_trial_id(const std::string& filename) {
  // trial_NN.eeg
  if (filename.rfind("trial_", 0) != 0) return -1;
  const auto dot = filename.find('.');
  if (dot == std::string::npos || filename.substr(dot) != ".eeg") return -1;
  try {
    return std::stoi(filename.substr(6, dot - 6));
  } catch (const std::exception&) {
    return -1;
  }
}

Matrix synthetic_mixing(const SyntheticSpec& spec, int subject_index) {
  Rng base_rng(mix_seed(spec.seed, 0x5EED));
  Rng subject_rng(mix_seed(spec.seed, 2000 + static_cast<std::uint64_t>(subject_index)));
  Matrix mixing(spec.eeg_channels, kBands);
  for (Eigen::Index c = 0; c < mixing.rows(); ++c) {
    for (Eigen::Index k = 0; k < kBands; ++k) mixing(c, k) = base_rng.normal();
  }
  for (Eigen::Index c = 0; c < mixing.rows(); ++c) {
    for (Eigen::Index k = 0; k < kBands; ++k) {
      mixing(c, k) += kSubjectMixingJitter * subject_rng.normal();
    }
    mixing.row(c).normalize();
  }
  return mixing;
}

struct SyntheticStimulus {
  std::vector<double> audio;
  Matrix drive;  // [kBands x eeg samples]
  std::vector<TimeSpan> sentences;
  std::vector<std::vector<WordSpan>> words;
  std::size_t frames{0};
};

SyntheticStimulus synthetic_stimulus(const SyntheticSpec& spec, int trial_index) {
  Rng rng(mix_seed(spec.seed, 1000 + static_cast<std::uint64_t>(trial_index)));
  constexpr auto kSamplesPerFrame = static_cast<std::size_t>(kAudioRateHz / kFrameRate);   // 250
  constexpr auto kEegPerFrame = static_cast<std::size_t>(eeg::kRawRateHz / kFrameRate);    // 8

  struct Word {
    std::size_t start_frame, end_frame;
    std::array<double, kBands> latent, phase;
    double gain;
  };
  std::vector<std::vector<Word>> layout;
  std::size_t frame = kLeadFrames;
  for (int s = 0; s < spec.sentences_per_trial; ++s) {
    std::vector<Word> words;
    const auto n_words = rng.between(spec.words_per_sentence.first, spec.words_per_sentence.second);
    for (std::int64_t w = 0; w < n_words; ++w) {
      Word word{};
      const auto len = static_cast<std::size_t>(rng.between(spec.word_len_frames.first, spec.word_len_frames.second));
      word.start_frame = frame;
      word.end_frame = frame + len;
      for (int k = 0; k < kBands; ++k) {
        word.latent[static_cast<std::size_t>(k)] = rng.normal();
        word.phase[static_cast<std::size_t>(k)] = rng.uniform(0.0, 2.0 * std::numbers::pi);
      }
      word.gain = rng.uniform(0.75, 1.25);
      frame += len;
      words.push_back(word);
    }
    frame += static_cast<std::size_t>(rng.between(8, 16));  // inter-sentence pause
    layout.push_back(std::move(words));
  }
  frame += kLeadFrames;

  SyntheticStimulus out;
  out.frames = frame;
  out.audio.resize(frame * kSamplesPerFrame);
  for (double& a : out.audio) a = kBackgroundSigma * rng.normal();
  out.drive = Matrix::Zero(kBands, static_cast<Eigen::Index>(frame * kEegPerFrame));

  constexpr std::size_t kRamp = 32;  // 2 ms raised-cosine edges
  for (const auto& words : layout) {
    out.sentences.push_back({static_cast<double>(words.front().start_frame) / kFrameRate,
                             static_cast<double>(words.back().end_frame) / kFrameRate});
    std::vector<WordSpan> spans;
    int token = 0;
    for (const Word& w : words) {
      spans.push_back({static_cast<double>(w.start_frame) / kFrameRate,
                       static_cast<double>(w.end_frame) / kFrameRate, "w" + std::to_string(token++)});
      const std::size_t a0 = w.start_frame * kSamplesPerFrame;
      const std::size_t a1 = w.end_frame * kSamplesPerFrame;
      for (std::size_t n = a0; n < a1; ++n) {
        const double t = static_cast<double>(n) / kAudioRateHz;
        double v = 0.0;
        for (int k = 0; k < kBands; ++k) {
          const auto ku = static_cast<std::size_t>(k);
          v += kToneAmplitude * std::exp(kToneLogSpread * w.latent[ku]) *
               std::sin(2.0 * std::numbers::pi * kBandHz[ku] * t + w.phase[ku]);
        }
        const std::size_t from_start = n - a0;
        const std::size_t to_end = a1 - 1 - n;
        const std::size_t edge = std::min(from_start, to_end);
        if (edge < kRamp) v *= 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(edge) / kRamp);
        out.audio[n] += v;
      }
      for (std::size_t n = w.start_frame * kEegPerFrame; n < w.end_frame * kEegPerFrame; ++n) {
        for (int k = 0; k < kBands; ++k) {
          out.drive(k, static_cast<Eigen::Index>(n)) = w.gain * w.latent[static_cast<std::size_t>(k)];
        }
      }
    }
    out.words.push_back(std::move(spans));
  }

  // Causal gamma-shaped response kernel applied to the drive.
  const double tau = kResponseTau_s * eeg::kRawRateHz;
  const auto klen = static_cast<std::size_t>(kResponseLength_s * eeg::kRawRateHz);
  std::vector<double> kernel(klen);
  double ksum = 0.0;
  for (std::size_t m = 0; m < klen; ++m) {
    const double x = static_cast<double>(m) / tau;
    kernel[m] = x * x * std::exp(-x);
    ksum += kernel[m];
  }
  for (double& k : kernel) k /= ksum;
  Matrix smoothed = Matrix::Zero(out.drive.rows(), out.drive.cols());
  for (Eigen::Index n = 0; n < out.drive.cols(); ++n) {
    const auto lags = std::min<Eigen::Index>(static_cast<Eigen::Index>(klen), n + 1);
    for (Eigen::Index m = 0; m < lags; ++m) {
      smoothed.col(n) += kernel[static_cast<std::size_t>(m)] * out.drive.col(n - m);
    }
  }
  out.drive = std::move(smoothed);
  return out;
}

Matrix synthetic_noise(const SyntheticSpec& spec, int subject_index, int trial_index,
                       Eigen::Index channels, Eigen::Index samples) {
  Rng rng(mix_seed(spec.seed, 3000 + 1000 * static_cast<std::uint64_t>(subject_index) +
                                  static_cast<std::uint64_t>(trial_index)));
  Matrix noise(channels, samples);
  for (Eigen::Index c = 0; c < channels; ++c) {
    // Kellet's economy pink filter.
    double b0 = 0, b1 = 0, b2 = 0;
    for (Eigen::Index n = 0; n < samples; ++n) {
      const double white = rng.normal();
      b0 = 0.99765 * b0 + white * 0.0990460;
      b1 = 0.96300 * b1 + white * 0.2965164;
      b2 = 0.57000 * b2 + white * 1.0526913;
      noise(c, n) = b0 + b1 + b2 + white * 0.1848;
    }
  }
  noise = eeg::bandpass(noise, eeg::FilterSpec{0.5, 30.0, 4, true, eeg::kRawRateHz});
  for (Eigen::Index c = 0; c < channels; ++c) {
    const double mean = noise.row(c).mean();
    noise.row(c).array() -= mean;
    const double sd = std::sqrt(noise.row(c).squaredNorm() / static_cast<double>(samples));
    if (sd > 0) noise.row(c) /= sd;
  }
  return noise;
}

void hash_update_f32(EVP_MD_CTX* ctx, const Matrix& m) {
  std::vector<float> buf(static_cast<std::size_t>(m.size()));
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) buf[i++] = static_cast<float>(m(r, c));
  }
  EVP_DigestUpdate(ctx, buf.data(), buf.size() * sizeof(float));
}

json bounds_json(const segmentation::WordBoundaries& b) {
  json arr = json::array();
  for (const Span& s : b.spans) arr.push_back({s.start, s.end});
  return arr;
}

segmentation::WordBoundaries bounds_from_json(const json& arr, double rate) {
  segmentation::WordBoundaries b;
  b.rate_hz = rate;
  for (const auto& s : arr) b.spans.push_back({s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>()});
  return b;
}

void write_matrix_f32(std::ostream& out, const Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) write_le<float>(out, static_cast<float>(m(r, c)));
  }
}

Matrix read_matrix_f32(std::istream& in, Eigen::Index rows, Eigen::Index cols) {
  std::vector<float> buf(static_cast<std::size_t>(rows * cols));
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!in) throw DataError("truncated matrix payload");
  Matrix m(rows, cols);
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = buf[i++];
  }
  return m;
}

}  // namespace

void validate(const RawTrial& trial) {
  const std::string where = trial.subject_id + "/" + trial_stem(trial.trial_id);
  if (trial.word_spans.size() != trial.sentence_spans.size()) {
    throw ValidationError(where + ": word annotation count does not match sentence count");
  }
  double prev_end = -1e300;
  for (std::size_t i = 0; i < trial.sentence_spans.size(); ++i) {
    const TimeSpan& s = trial.sentence_spans[i];
    if (!(s.start_s < s.end_s) || s.start_s < prev_end) {
      throw ValidationError(where + ": sentence " + std::to_string(i) + " overlaps or is out of order");
    }
    prev_end = s.end_s;
    double word_end = s.start_s;
    for (const WordSpan& w : trial.word_spans[i]) {
      if (w.start_s < s.start_s - 1e-9 || w.end_s > s.end_s + 1e-9 || w.start_s > w.end_s ||
          w.start_s < word_end - 1e-9) {
        throw ValidationError(where + ": word '" + w.token + "' outside sentence " + std::to_string(i) +
                              " or out of order");
      }
      word_end = w.end_s;
    }
  }
  const double audio_s = trial.audio_duration_s();
  const double eeg_s = trial.eeg_duration_s();
  if (std::abs(audio_s - eeg_s) > kDurationSlackS) {
    throw ValidationError(where + ": EEG lasts " + std::to_string(eeg_s) + " s but audio " +
                          std::to_string(audio_s) + " s");
  }
  if (!trial.sentence_spans.empty() && trial.sentence_spans.back().end_s > audio_s + kDurationSlackS) {
    throw ValidationError(where + ": annotations end at " + std::to_string(trial.sentence_spans.back().end_s) +
                          " s but audio lasts " + std::to_string(audio_s) + " s (duration mismatch)");
  }
}

void validate(const SyntheticSpec& spec) {
  if (spec.n_subjects < 1 || spec.n_trials < 1 || spec.sentences_per_trial < 1) {
    throw ValidationError("synthetic corpus needs at least one subject, trial and sentence");
  }
  if (spec.words_per_sentence.first < 1 || spec.words_per_sentence.second < spec.words_per_sentence.first) {
    throw ValidationError("words_per_sentence must satisfy 1 <= min <= max");
  }
  if (spec.word_len_frames.first < 1 || spec.word_len_frames.second < spec.word_len_frames.first) {
    throw ValidationError("word_len_frames must satisfy 1 <= min <= max");
  }
  if (!(spec.coupling >= 0.0 && spec.coupling <= 1.0)) throw ValidationError("coupling must lie in [0, 1]");
  if (!(spec.noise_sigma >= 0.0)) throw ValidationError("noise_sigma must be non-negative");
  if (spec.coupling == 0.0 && spec.noise_sigma == 0.0) {
    throw ValidationError("coupling and noise_sigma cannot both be zero (flat EEG)");
  }
  if (spec.eeg_channels < 3) throw ValidationError("synthetic EEG needs at least 3 channels");
}

std::string synthetic_subject_id(int subject_index) {
  std::ostringstream os;
  os << "S" << std::setw(2) << std::setfill('0') << subject_index + 1;
  return os.str();
}

RawTrial synthesize_trial(const SyntheticSpec& spec, int subject_index, int trial_index) {
  validate(spec);
  SyntheticStimulus stim = synthetic_stimulus(spec, trial_index);
  RawTrial trial;
  trial.subject_id = synthetic_subject_id(subject_index);
  trial.trial_id = trial_index + 1;
  trial.audio = std::move(stim.audio);
  trial.sentence_spans = std::move(stim.sentences);
  trial.word_spans = std::move(stim.words);

  const Eigen::Index channels = spec.eeg_channels;
  const Eigen::Index samples = stim.drive.cols();
  Matrix eeg = Matrix::Zero(channels, samples);
  if (spec.coupling > 0) eeg = spec.coupling * (synthetic_mixing(spec, subject_index) * stim.drive);
  if (spec.noise_sigma > 0) {
    eeg += spec.noise_sigma * synthetic_noise(spec, subject_index, trial_index, channels, samples);
  }
  Rng offset_rng(mix_seed(spec.seed, 9000 + static_cast<std::uint64_t>(subject_index)));
  for (Eigen::Index c = 0; c < channels; ++c) eeg.row(c).array() += kChannelOffsetSigma * offset_rng.normal();
  trial.eeg = std::move(eeg);
  return trial;
}

std::vector<RawTrial> synthesize_corpus(const SyntheticSpec& spec) {
  validate(spec);
  std::vector<RawTrial> trials;
  for (int s = 0; s < spec.n_subjects; ++s) {
    for (int t = 0; t < spec.n_trials; ++t) trials.push_back(synthesize_trial(spec, s, t));
  }
  return trials;
}

bool natural_less(const std::string& a, const std::string& b) {
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const bool da = std::isdigit(static_cast<unsigned char>(a[i])) != 0;
    const bool db = std::isdigit(static_cast<unsigned char>(b[j])) != 0;
    if (da && db) {
      std::size_t ie = i, je = j;
      while (ie < a.size() && std::isdigit(static_cast<unsigned char>(a[ie]))) ++ie;
      while (je < b.size() && std::isdigit(static_cast<unsigned char>(b[je]))) ++je;
      std::string na = a.substr(i, ie - i), nb = b.substr(j, je - j);
      na.erase(0, std::min(na.find_first_not_of('0'), na.size()));
      nb.erase(0, std::min(nb.find_first_not_of('0'), nb.size()));
      if (na.size() != nb.size()) return na.size() < nb.size();
      if (na != nb) return na < nb;
      i = ie;
      j = je;
    } else {
      if (a[i] != b[j]) return a[i] < b[j];
      ++i;
      ++j;
    }
  }
  return a.size() - i < b.size() - j;
}

void write_eeg_file(const fs::path& path, const Matrix& eeg, double rate_hz) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write("WBMMEEG1", 8);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(eeg.rows()));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(eeg.cols()));
  write_le<double>(out, rate_hz);
  write_matrix_f32(out, eeg);
}

Matrix read_eeg_file(const fs::path& path, double* rate_hz) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "WBMMEEG1", 8) != 0) throw DataError("bad magic");
    const auto channels = read_le<std::uint32_t>(in);
    const auto samples = read_le<std::uint32_t>(in);
    const double rate = read_le<double>(in);
    if (rate_hz) *rate_hz = rate;
    return read_matrix_f32(in, channels, samples);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": corrupt EEG file (" + e.what() + ")");
  }
}

void write_wav(const fs::path& path, const std::vector<double>& audio, double rate_hz) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  const auto data_bytes = static_cast<std::uint32_t>(audio.size() * sizeof(float));
  out.write("RIFF", 4);
  write_le<std::uint32_t>(out, 36 + data_bytes);
  out.write("WAVEfmt ", 8);
  write_le<std::uint32_t>(out, 16);
  write_le<std::uint16_t>(out, 3);  // IEEE float
  write_le<std::uint16_t>(out, 1);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(rate_hz));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(rate_hz) * 4);
  write_le<std::uint16_t>(out, 4);
  write_le<std::uint16_t>(out, 32);
  out.write("data", 4);
  write_le<std::uint32_t>(out, data_bytes);
  for (double v : audio) write_le<float>(out, static_cast<float>(v));
}

std::vector<double> read_wav(const fs::path& path, double* rate_hz) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    char id[4];
    in.read(id, 4);
    if (!in || std::memcmp(id, "RIFF", 4) != 0) throw DataError("not a RIFF file");
    read_le<std::uint32_t>(in);
    in.read(id, 4);
    if (!in || std::memcmp(id, "WAVE", 4) != 0) throw DataError("not a WAVE file");
    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    bool have_fmt = false;
    while (true) {
      in.read(id, 4);
      if (!in) throw DataError("no data chunk");
      const auto size = read_le<std::uint32_t>(in);
      if (std::memcmp(id, "fmt ", 4) == 0) {
        format = read_le<std::uint16_t>(in);
        channels = read_le<std::uint16_t>(in);
        rate = read_le<std::uint32_t>(in);
        read_le<std::uint32_t>(in);
        read_le<std::uint16_t>(in);
        bits = read_le<std::uint16_t>(in);
        if (size > 16) in.seekg(size - 16, std::ios::cur);
        have_fmt = true;
      } else if (std::memcmp(id, "data", 4) == 0) {
        if (!have_fmt) throw DataError("data chunk before fmt chunk");
        if (channels != 1) throw DataError("only mono audio is supported");
        if (rate_hz) *rate_hz = rate;
        std::vector<double> audio;
        if (format == 1 && bits == 16) {
          audio.resize(size / 2);
          std::vector<std::int16_t> buf(audio.size());
          in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 2));
          if (!in) throw DataError("truncated audio data");
          for (std::size_t i = 0; i < buf.size(); ++i) audio[i] = buf[i] / 32768.0;
        } else if (format == 3 && bits == 32) {
          audio.resize(size / 4);
          std::vector<float> buf(audio.size());
          in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
          if (!in) throw DataError("truncated audio data");
          for (std::size_t i = 0; i < buf.size(); ++i) audio[i] = buf[i];
        } else {
          throw DataError("unsupported sample format");
        }
        return audio;
      } else {
        in.seekg(size + (size & 1), std::ios::cur);
      }
    }
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_dataset(const fs::path& root, const std::vector<RawTrial>& trials) {
  fs::create_directories(root / "stimuli");
  std::map<int, bool> written;
  for (const RawTrial& t : trials) {
    const std::string stem = trial_stem(t.trial_id);
    if (!written[t.trial_id]) {
      write_wav(root / "stimuli" / (stem + ".wav"), t.audio, t.audio_rate_hz);
      std::ofstream sent(root / "stimuli" / (stem + ".sentences.tsv"));
      sent << "start_s\tend_s\n" << std::setprecision(17);
      for (const TimeSpan& s : t.sentence_spans) sent << s.start_s << '\t' << s.end_s << '\n';
      std::ofstream words(root / "stimuli" / (stem + ".words.tsv"));
      words << "sentence\tstart_s\tend_s\ttoken\n" << std::setprecision(17);
      for (std::size_t i = 0; i < t.word_spans.size(); ++i) {
        for (const WordSpan& w : t.word_spans[i]) {
          words << i << '\t' << w.start_s << '\t' << w.end_s << '\t' << w.token << '\n';
        }
      }
      written[t.trial_id] = true;
    }
    fs::create_directories(root / "eeg" / t.subject_id);
    write_eeg_file(root / "eeg" / t.subject_id / (stem + ".eeg"), t.eeg, t.eeg_rate_hz);
  }
}

std::vector<TrialRef> list_trials(const fs::path& root) {
  std::vector<TrialRef> refs;
  const fs::path eeg_dir = root / "eeg";
  if (!fs::is_directory(eeg_dir)) return refs;
  for (const auto& subject : fs::directory_iterator(eeg_dir)) {
    if (!subject.is_directory()) continue;
    for (const auto& file : fs::directory_iterator(subject.path())) {
      const int id = parse_trial_id(file.path().filename().string());
      if (id >= 0) refs.push_back({subject.path().filename().string(), id});
    }
  }
  std::sort(refs.begin(), refs.end(), [](const TrialRef& a, const TrialRef& b) {
    if (a.subject_id != b.subject_id) return natural_less(a.subject_id, b.subject_id);
    return a.trial_id < b.trial_id;
  });
  return refs;
}

RawTrial load_trial(const fs::path& root, const TrialRef& ref) {
  StimulusFiles stim = read_stimulus(root, ref.trial_id);
  RawTrial trial;
  trial.subject_id = ref.subject_id;
  trial.trial_id = ref.trial_id;
  trial.eeg = read_eeg_file(root / "eeg" / ref.subject_id / (trial_stem(ref.trial_id) + ".eeg"), &trial.eeg_rate_hz);
  trial.audio = std::move(stim.audio);
  trial.audio_rate_hz = stim.rate_hz;
  trial.sentence_spans = std::move(stim.sentences);
  trial.word_spans = std::move(stim.words);
  validate(trial);
  return trial;
}

LoadResult load_broderick(const fs::path& root) {
  LoadResult result;
  const auto refs = list_trials(root);
  if (refs.empty()) {
    result.diagnostics.push_back("no trials found under " + (root / "eeg").string());
    return result;
  }
  for (const TrialRef& ref : refs) {
    const fs::path eeg_path = root / "eeg" / ref.subject_id / (trial_stem(ref.trial_id) + ".eeg");
    try {
      result.trials.push_back(load_trial(root, ref));
    } catch (const std::exception& e) {
      result.errors.push_back({eeg_path, e.what()});
    }
  }
  return result;
}

TrialRecords build_sentence_records(const RawTrial& trial, const SentencePipelineConfig& cfg) {
  validate(trial);
  if (std::abs(trial.eeg_rate_hz - eeg::kRawRateHz) > 1e-9) {
    throw ValidationError("EEG must be sampled at 512 Hz");
  }
  if (std::abs(trial.audio_rate_hz - cfg.mel.sample_rate_hz) > 1e-9) {
    throw ValidationError("audio rate does not match the mel configuration");
  }
  TrialRecords out;
  const std::string where = trial.subject_id + "/" + trial_stem(trial.trial_id);

  // Trim EEG and audio to the shorter of the two.
  const double duration = std::min(trial.eeg_duration_s(), trial.audio_duration_s());
  const auto eeg_samples = std::min<Eigen::Index>(
      trial.eeg.cols(), static_cast<Eigen::Index>(std::floor(duration * trial.eeg_rate_hz)));
  const auto audio_samples =
      std::min(trial.audio.size(), static_cast<std::size_t>(std::floor(duration * trial.audio_rate_hz)));

  eeg::PreprocResult pre = eeg::preprocess(trial.eeg.leftCols(eeg_samples), cfg.eeg);
  pre.report.subject_id = trial.subject_id;
  pre.report.trial_id = trial.trial_id;
  out.report = pre.report;
  const Matrix& eeg64 = pre.eeg;

  for (std::size_t i = 0; i < trial.sentence_spans.size(); ++i) {
    const TimeSpan& s = trial.sentence_spans[i];
    const std::string label = where + " sentence " + std::to_string(i);
    if (s.start_s >= duration) {
      out.warnings.push_back(label + " starts after the trimmed recording; dropped");
      continue;
    }
    const auto f0 = static_cast<Eigen::Index>(std::lround(s.start_s * kFrameRate));
    const auto f1 = std::min<Eigen::Index>(eeg64.cols(), std::lround(s.end_s * kFrameRate));
    const auto a0 = static_cast<std::size_t>(std::lround(s.start_s * trial.audio_rate_hz));
    const auto a1 = std::min(audio_samples, static_cast<std::size_t>(std::lround(s.end_s * trial.audio_rate_hz)));
    if (a1 <= a0 || speech::frame_count(a1 - a0, cfg.mel) == 0 || f1 <= f0) {
      out.warnings.push_back(label + " is shorter than one analysis window; dropped");
      continue;
    }
    const Matrix mel = speech::melspectrogram(
        std::span<const double>(trial.audio.data() + a0, a1 - a0), cfg.mel);
    const auto frames = static_cast<std::size_t>(std::min<Eigen::Index>(f1 - f0, mel.cols()));
    if (frames < kMinSentenceFrames) {
      out.warnings.push_back(label + " has fewer than " + std::to_string(kMinSentenceFrames) + " frames; dropped");
      continue;
    }

    segmentation::WordBoundaries b64;
    std::size_t prev_end = 0;
    for (const WordSpan& w : trial.word_spans[i]) {
      const long ws = std::lround((w.start_s - s.start_s) * kFrameRate);
      const long we = std::lround((w.end_s - s.start_s) * kFrameRate);
      const std::size_t start = std::max<std::size_t>(prev_end, static_cast<std::size_t>(std::max(0L, ws)));
      const std::size_t end = std::min<std::size_t>(frames, static_cast<std::size_t>(std::max(0L, we)));
      if (end <= start) {
        out.warnings.push_back(label + ": word '" + w.token + "' collapses to zero frames; skipped");
        continue;
      }
      b64.spans.push_back({start, end});
      prev_end = end;
    }
    if (b64.empty()) {
      out.warnings.push_back(label + " has no annotated words; dropped");
      continue;
    }

    SentenceRecord r;
    r.subject_id = trial.subject_id;
    r.trial_id = trial.trial_id;
    r.sentence_index = static_cast<int>(i);
    r.eeg_feat = eeg64.middleCols(f0, static_cast<Eigen::Index>(frames));
    r.mel_feat = mel.leftCols(static_cast<Eigen::Index>(frames));
    r.word_bounds_feat = segmentation::to_feature_rate(b64, frames);
    r.word_bounds_64 = std::move(b64);
    out.records.push_back(std::move(r));
  }
  for (const auto& w : out.warnings) log::warn(w);
  for (const auto& w : pre.report.warnings) log::warn(where + ": " + w);
  return out;
}

void write_record(const fs::path& path, const SentenceRecord& r) {
  json header = {
      {"subject_id", r.subject_id},
      {"trial_id", r.trial_id},
      {"sentence_index", r.sentence_index},
      {"frames", r.frames()},
      {"eeg_channels", r.eeg_feat.rows()},
      {"mel_bands", r.mel_feat.rows()},
      {"rate_hz", segmentation::kFrameRateHz},
      {"feature_rate_hz", r.word_bounds_feat.rate_hz},
      {"word_bounds_64", bounds_json(r.word_bounds_64)},
      {"word_bounds_feat", bounds_json(r.word_bounds_feat)},
      {"dtype", "float32"},
      {"layout", "eeg then mel, each channel-major, little-endian"},
  };
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "WBMMREC1\n" << header.dump() << '\n';
  write_matrix_f32(out, r.eeg_feat);
  write_matrix_f32(out, r.mel_feat);
}

SentenceRecord read_record(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    std::string magic, header_line;
    std::getline(in, magic);
    if (magic != "WBMMREC1") throw DataError("bad magic");
    std::getline(in, header_line);
    const json h = json::parse(header_line);
    SentenceRecord r;
    r.subject_id = h.at("subject_id").get<std::string>();
    r.trial_id = h.at("trial_id").get<int>();
    r.sentence_index = h.at("sentence_index").get<int>();
    const auto frames = h.at("frames").get<Eigen::Index>();
    r.eeg_feat = read_matrix_f32(in, h.at("eeg_channels").get<Eigen::Index>(), frames);
    r.mel_feat = read_matrix_f32(in, h.at("mel_bands").get<Eigen::Index>(), frames);
    r.word_bounds_64 = bounds_from_json(h.at("word_bounds_64"), h.at("rate_hz").get<double>());
    r.word_bounds_feat = bounds_from_json(h.at("word_bounds_feat"), h.at("feature_rate_hz").get<double>());
    segmentation::validate(r.word_bounds_64, static_cast<std::size_t>(frames));
    return r;
  } catch (const std::exception& e) {
    throw DataError(path.string() + ": corrupt record (" + e.what() + ")");
  }
}

fs::path record_path(const fs::path& corpus_dir, const SentenceRecord& r) {
  std::ostringstream name;
  name << trial_stem(r.trial_id) << "_s" << std::setw(3) << std::setfill('0') << r.sentence_index << ".wbr";
  return corpus_dir / "records" / r.subject_id / name.str();
}

std::vector<SentenceRecord> load_records(const fs::path& corpus_dir) {
  std::vector<fs::path> paths;
  const fs::path dir = corpus_dir / "records";
  if (!fs::is_directory(dir)) throw DataError("no records directory under " + corpus_dir.string());
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".wbr") paths.push_back(entry.path());
  }
  std::vector<SentenceRecord> records;
  records.reserve(paths.size());
  for (const auto& p : paths) records.push_back(read_record(p));
  std::sort(records.begin(), records.end(), [](const SentenceRecord& a, const SentenceRecord& b) {
    if (a.subject_id != b.subject_id) return natural_less(a.subject_id, b.subject_id);
    if (a.trial_id != b.trial_id) return a.trial_id < b.trial_id;
    return a.sentence_index < b.sentence_index;
  });
  return records;
}

std::string fingerprint(const std::vector<SentenceRecord>& records) {
  std::vector<const SentenceRecord*> order;
  for (const auto& r : records) order.push_back(&r);
  std::sort(order.begin(), order.end(), [](const SentenceRecord* a, const SentenceRecord* b) {
    if (a->subject_id != b->subject_id) return natural_less(a->subject_id, b->subject_id);
    if (a->trial_id != b->trial_id) return a->trial_id < b->trial_id;
    return a->sentence_index < b->sentence_index;
  });
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  for (const SentenceRecord* r : order) {
    const std::string id = r->subject_id + "|" + std::to_string(r->trial_id) + "|" +
                           std::to_string(r->sentence_index) + "|" + bounds_json(r->word_bounds_64).dump();
    EVP_DigestUpdate(ctx, id.data(), id.size());
    hash_update_f32(ctx, r->eeg_feat);
    hash_update_f32(ctx, r->mel_feat);
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

std::vector<SentenceRecord> synthetic_records(const SyntheticSpec& spec, const SentencePipelineConfig& cfg) {
  validate(spec);
  std::vector<SentenceRecord> records;
  for (int s = 0; s < spec.n_subjects; ++s) {
    for (int t = 0; t < spec.n_trials; ++t) {
      TrialRecords tr = build_sentence_records(synthesize_trial(spec, s, t), cfg);
      for (auto& r : tr.records) records.push_back(std::move(r));
    }
  }
  return records;
}

}  // namespace wbmm::corpus
