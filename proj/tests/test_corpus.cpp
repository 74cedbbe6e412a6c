#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "wbmm/corpus.hpp"
#include "wbmm/log.hpp"

using namespace wbmm;
using namespace wbmm::corpus;
namespace fs = std::filesystem;

namespace {

SyntheticSpec small_spec() {
  SyntheticSpec s;
  s.n_subjects = 2;
  s.n_trials = 2;
  s.sentences_per_trial = 4;
  return s;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("wbmm_test_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("synthetic corpus is deterministic") {
  log::threshold() = log::Level::error;
  const auto a = synthesize_trial(small_spec(), 1, 0);
  const auto b = synthesize_trial(small_spec(), 1, 0);
  CHECK(a.eeg == b.eeg);
  CHECK(a.audio == b.audio);
  CHECK(a.subject_id == "S02");
  CHECK(a.trial_id == 1);
  auto other = small_spec();
  other.seed = 8;
  CHECK_FALSE(synthesize_trial(other, 1, 0).eeg.leftCols(100) == a.eeg.leftCols(100));
  CHECK(synthesize_corpus(small_spec()).size() == 4);
}

TEST_CASE("all subjects hear the same stimulus") {
  const auto s1 = synthesize_trial(small_spec(), 0, 1);
  const auto s2 = synthesize_trial(small_spec(), 1, 1);
  CHECK(s1.audio == s2.audio);
  CHECK(s1.sentence_spans.size() == 4);
  CHECK_FALSE(s1.eeg == s2.eeg);
  CHECK(std::abs(s1.eeg_duration_s() - s1.audio_duration_s()) < 1e-9);
  CHECK_NOTHROW(validate(s1));
}

TEST_CASE("coupling zero removes the stimulus from the EEG") {
  auto spec = small_spec();
  spec.coupling = 0.0;
  // Same seed, same noise stream; the EEG equals noise plus channel offsets.
  auto quiet = spec;
  quiet.noise_sigma = 1e-3;
  const auto a = synthesize_trial(spec, 0, 0);
  const auto q = synthesize_trial(quiet, 0, 0);
  // Scaling the noise scales the deviation from the channel offsets exactly.
  const Matrix da = a.eeg.colwise() - a.eeg.rowwise().mean();
  const Matrix dq = q.eeg.colwise() - q.eeg.rowwise().mean();
  CHECK((da * 1e-2 - dq).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("synthetic spec validation") {
  auto s = small_spec();
  s.n_subjects = 0;
  CHECK_THROWS_AS(validate(s), ValidationError);
  s = small_spec();
  s.words_per_sentence = {5, 3};
  CHECK_THROWS_AS(validate(s), ValidationError);
  s = small_spec();
  s.coupling = 1.5;
  CHECK_THROWS_AS(validate(s), ValidationError);
  s = small_spec();
  s.coupling = 0;
  s.noise_sigma = 0;
  CHECK_THROWS_AS(validate(s), ValidationError);
}

TEST_CASE("every word span lands in exactly one record within one frame") {
  const auto trial = synthesize_trial(small_spec(), 0, 0);
  const auto out = build_sentence_records(trial);
  REQUIRE(out.records.size() == trial.sentence_spans.size());
  std::size_t words = 0;
  for (const auto& r : out.records) {
    const auto i = static_cast<std::size_t>(r.sentence_index);
    const auto& src = trial.word_spans[i];
    REQUIRE(r.word_bounds_64.size() == src.size());
    words += src.size();
    CHECK(r.eeg_feat.rows() == 128);
    CHECK(r.mel_feat.rows() == 28);
    CHECK(r.eeg_feat.cols() == r.mel_feat.cols());
    CHECK(r.word_bounds_64.spans.back().end <= r.frames());
    for (std::size_t w = 0; w < src.size(); ++w) {
      const double s0 = (src[w].start_s - trial.sentence_spans[i].start_s) * 64.0;
      const double s1 = (src[w].end_s - trial.sentence_spans[i].start_s) * 64.0;
      CHECK(std::abs(static_cast<double>(r.word_bounds_64.spans[w].start) - s0) <= 1.0);
      CHECK(std::abs(static_cast<double>(r.word_bounds_64.spans[w].end) - s1) <= 1.0);
    }
    CHECK(r.word_bounds_feat == segmentation::to_feature_rate(r.word_bounds_64, r.frames()));
  }
  std::size_t total = 0;
  for (const auto& s : trial.word_spans) total += s.size();
  CHECK(words == total);
}

TEST_CASE("sentences without words are dropped with a warning") {
  auto trial = synthesize_trial(small_spec(), 0, 0);
  trial.word_spans[1].clear();
  const auto out = build_sentence_records(trial);
  CHECK(out.records.size() == 3);
  CHECK(std::any_of(out.warnings.begin(), out.warnings.end(),
                    [](const std::string& w) { return w.find("no annotated words") != std::string::npos; }));
}

TEST_CASE("raw trial validation") {
  auto t = synthesize_trial(small_spec(), 0, 0);
  auto overlap = t;
  overlap.sentence_spans[1].start_s = overlap.sentence_spans[0].end_s - 0.5;
  CHECK_THROWS_AS(validate(overlap), ValidationError);
  auto outside = t;
  outside.word_spans[0][0].start_s -= 1.0;
  CHECK_THROWS_AS(validate(outside), ValidationError);
  auto shortened = t;
  shortened.audio.resize(shortened.audio.size() - 20000);
  CHECK_THROWS_AS(validate(shortened), ValidationError);
}

TEST_CASE("natural subject ordering") {
  CHECK(natural_less("Subject2", "Subject10"));
  CHECK_FALSE(natural_less("Subject10", "Subject2"));
  CHECK(natural_less("S02", "S3"));
  CHECK(natural_less("A", "B"));
  CHECK(natural_less("S1", "S1a"));
  CHECK_FALSE(natural_less("S1", "S1"));
}

TEST_CASE("dataset round trip through the on-disk layout") {
  TempDir dir("dataset");
  const auto trials = synthesize_corpus(small_spec());
  write_dataset(dir.path, trials);
  CHECK(fs::exists(dir.path / "stimuli" / "trial_01.wav"));
  CHECK(fs::exists(dir.path / "stimuli" / "trial_02.words.tsv"));
  CHECK(fs::exists(dir.path / "eeg" / "S01" / "trial_02.eeg"));

  const auto loaded = load_broderick(dir.path);
  CHECK(loaded.errors.empty());
  REQUIRE(loaded.trials.size() == 4);
  CHECK(loaded.trials[0].subject_id == "S01");
  CHECK(loaded.trials[3].trial_id == 2);
  const auto& a = loaded.trials[2];
  CHECK(a.sentence_spans.size() == trials[2].sentence_spans.size());
  CHECK(a.word_spans[0][0].token == "w0");
  CHECK(a.word_spans[0][0].start_s == trials[2].word_spans[0][0].start_s);
  CHECK((a.eeg - trials[2].eeg).cwiseAbs().maxCoeff() < 1e-4 * (1.0 + trials[2].eeg.cwiseAbs().maxCoeff()));
  CHECK(a.audio.size() == trials[2].audio.size());
}

TEST_CASE("loader reports bad trials and keeps the rest") {
  TempDir dir("badtrials");
  write_dataset(dir.path, synthesize_corpus(small_spec()));
  { std::ofstream(dir.path / "eeg" / "S02" / "trial_01.eeg", std::ios::binary) << "garbage"; }
  // Truncate the shared audio of trial 2 so its annotations overrun it.
  double rate = 0;
  auto audio = read_wav(dir.path / "stimuli" / "trial_02.wav", &rate);
  audio.resize(audio.size() / 2);
  write_wav(dir.path / "stimuli" / "trial_02.wav", audio, rate);

  const auto r = load_broderick(dir.path);
  CHECK(r.trials.size() == 1);
  REQUIRE(r.errors.size() == 3);
  CHECK(r.errors[0].path.filename() == "trial_02.eeg");
  CHECK(r.errors[1].path == dir.path / "eeg" / "S02" / "trial_01.eeg");
  CHECK(r.errors[2].message.find("audio") != std::string::npos);
}

TEST_CASE("empty dataset gives a diagnostic") {
  TempDir dir("empty");
  const auto r = load_broderick(dir.path);
  CHECK(r.trials.empty());
  REQUIRE(r.diagnostics.size() == 1);
  CHECK(r.diagnostics[0].find("no trials found") != std::string::npos);
}

TEST_CASE("record files round trip and fingerprints are content hashes") {
  TempDir dir("records");
  const auto out = build_sentence_records(synthesize_trial(small_spec(), 0, 1));
  for (const auto& r : out.records) {
    fs::create_directories(record_path(dir.path, r).parent_path());
    write_record(record_path(dir.path, r), r);
  }
  const auto back = load_records(dir.path);
  REQUIRE(back.size() == out.records.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].subject_id == out.records[i].subject_id);
    CHECK(back[i].sentence_index == out.records[i].sentence_index);
    CHECK(back[i].word_bounds_64 == out.records[i].word_bounds_64);
    CHECK(back[i].word_bounds_feat == out.records[i].word_bounds_feat);
    CHECK((back[i].eeg_feat - out.records[i].eeg_feat).cwiseAbs().maxCoeff() < 1e-5);
  }
  const std::string fp = fingerprint(out.records);
  CHECK(fp.size() == 64);
  CHECK(fingerprint(back) == fp);
  auto reversed = back;
  std::reverse(reversed.begin(), reversed.end());
  CHECK(fingerprint(reversed) == fp);
  reversed[0].mel_feat(0, 0) += 1.0;
  CHECK(fingerprint(reversed) != fp);

  { std::ofstream(record_path(dir.path, out.records[0]), std::ios::binary) << "WBMMREC1\n{"; }
  CHECK_THROWS_AS(load_records(dir.path), DataError);
}
