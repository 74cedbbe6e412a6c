#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "wbmm/eeg_preproc.hpp"
#include "wbmm/segmentation.hpp"
#include "wbmm/speech_features.hpp"
#include "wbmm/types.hpp"

namespace wbmm::corpus {

inline constexpr double kAudioRateHz = 16000.0;

struct RawTrial {
  std::string subject_id;
  int trial_id{0};
  Matrix eeg;                       // [128 x samples] at eeg_rate_hz
  double eeg_rate_hz{eeg::kRawRateHz};
  std::vector<double> audio;        // mono at audio_rate_hz
  double audio_rate_hz{kAudioRateHz};
  std::vector<TimeSpan> sentence_spans;
  std::vector<std::vector<WordSpan>> word_spans;  // one list per sentence

  double eeg_duration_s() const { return static_cast<double>(eeg.cols()) / eeg_rate_hz; }
  double audio_duration_s() const { return static_cast<double>(audio.size()) / audio_rate_hz; }
};

// Throws ValidationError when annotations are unordered, words fall outside
// their sentence, or the EEG and audio durations differ by more than 1 s.
void validate(const RawTrial& trial);

struct SentenceRecord {
  std::string subject_id;
  int trial_id{0};
  int sentence_index{0};
  Matrix eeg_feat;  // [channels x T] at 64 Hz
  Matrix mel_feat;  // [n_mels x T] at 64 Hz
  segmentation::WordBoundaries word_bounds_64;
  segmentation::WordBoundaries word_bounds_feat;

  std::size_t frames() const { return static_cast<std::size_t>(eeg_feat.cols()); }
};

struct SyntheticSpec {
  int n_subjects{4};
  int n_trials{2};
  int sentences_per_trial{20};
  std::pair<int, int> words_per_sentence{4, 8};
  std::pair<int, int> word_len_frames{8, 20};
  double coupling{1.0};
  double noise_sigma{0.1};
  std::uint64_t seed{7};
  int eeg_channels{static_cast<int>(eeg::kChannels)};
};

void validate(const SyntheticSpec& spec);

// One trial of the synthetic corpus. Stimuli depend only on the trial index
// so all subjects hear the same audio, as in the real dataset.
RawTrial synthesize_trial(const SyntheticSpec& spec, int subject_index, int trial_index);

std::vector<RawTrial> synthesize_corpus(const SyntheticSpec& spec);

std::string synthetic_subject_id(int subject_index);

struct LoadError {
  std::filesystem::path path;
  std::string message;
};

struct LoadResult {
  std::vector<RawTrial> trials;
  std::vector<LoadError> errors;
  std::vector<std::string> diagnostics;
};

// Reads the on-disk layout documented in README.md:
//   stimuli/trial_NN.wav, stimuli/trial_NN.sentences.tsv, stimuli/trial_NN.words.tsv
//   eeg/<subject>/trial_NN.eeg
LoadResult load_broderick(const std::filesystem::path& root);

// Lists (subject, trial) pairs without reading signal data.
struct TrialRef {
  std::string subject_id;
  int trial_id{0};
};
std::vector<TrialRef> list_trials(const std::filesystem::path& root);
RawTrial load_trial(const std::filesystem::path& root, const TrialRef& ref);

// Binary EEG matrix: "WBMMEEG1", u32 channels, u32 samples, f64 rate, f32 channel-major data.
void write_eeg_file(const std::filesystem::path& path, const Matrix& eeg, double rate_hz);
Matrix read_eeg_file(const std::filesystem::path& path, double* rate_hz = nullptr);

// 16-bit PCM or 32-bit float mono WAV.
void write_wav(const std::filesystem::path& path, const std::vector<double>& audio, double rate_hz);
std::vector<double> read_wav(const std::filesystem::path& path, double* rate_hz = nullptr);

void write_dataset(const std::filesystem::path& root, const std::vector<RawTrial>& trials);

// Subject ordering that treats digit runs numerically (Subject2 < Subject10).
bool natural_less(const std::string& a, const std::string& b);

struct SentencePipelineConfig {
  eeg::PreprocConfig eeg{};
  speech::MelConfig mel{};
};

struct TrialRecords {
  std::vector<SentenceRecord> records;
  eeg::PreprocReport report;
  std::vector<std::string> warnings;
};

// Preprocesses one trial and cuts it into sentence records.
TrialRecords build_sentence_records(const RawTrial& trial, const SentencePipelineConfig& cfg = {});

// Self-describing record file: magic line, JSON header line, float32 payload.
void write_record(const std::filesystem::path& path, const SentenceRecord& record);
SentenceRecord read_record(const std::filesystem::path& path);

std::filesystem::path record_path(const std::filesystem::path& corpus_dir, const SentenceRecord& r);

// Loads every record under corpus_dir/records in (subject, trial, sentence) order.
std::vector<SentenceRecord> load_records(const std::filesystem::path& corpus_dir);

// SHA-256 over record contents in canonical order.
std::string fingerprint(const std::vector<SentenceRecord>& records);

// Builds records for the whole synthetic corpus one trial at a time.
std::vector<SentenceRecord> synthetic_records(const SyntheticSpec& spec,
                                              const SentencePipelineConfig& cfg = {});

}  // namespace wbmm::corpus
