#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wbmm/corpus.hpp"
#include "wbmm/encoder.hpp"
#include "wbmm/segmentation.hpp"

namespace wbmm::mm {

enum class MismatchStrategy { random_same_trial, next_sentence };

std::string to_string(MismatchStrategy s);
MismatchStrategy strategy_from_string(const std::string& s);

// Word boundaries handed to both encoders.
struct BoundaryMode {
  enum class Kind { true_bounds, random_n, random_count, skip_n };
  Kind kind{Kind::true_bounds};
  int n{0};          // word count for random_n, skip period for skip_n
  int min_words{1};  // random_count range
  int max_words{1};

  static BoundaryMode truth() { return {}; }
  static BoundaryMode random(int words) { return {Kind::random_n, words, 1, 1}; }
  static BoundaryMode random_count(int lo, int hi) { return {Kind::random_count, 0, lo, hi}; }
  static BoundaryMode skip(int n) { return {Kind::skip_n, n, 1, 1}; }

  std::string label() const;
  bool operator==(const BoundaryMode&) const = default;
};

BoundaryMode boundary_from_string(const std::string& s);

enum class ModelKind { proposed, baseline };

std::string to_string(ModelKind k);
ModelKind model_kind_from_string(const std::string& s);

struct TrainConfig {
  int batch_size{32};
  double learning_rate{1e-3};
  double weight_decay{1e-4};
  double adam_beta1{0.9};
  double adam_beta2{0.999};
  double adam_eps{1e-8};
  int epochs{20};
  std::uint64_t seed{1};
  ModelKind model{ModelKind::proposed};
  encoder::SimilarityKind similarity{encoder::SimilarityKind::manhattan};
  MismatchStrategy strategy{MismatchStrategy::random_same_trial};
  BoundaryMode boundary{};
  double dropout{0.2};
  std::optional<std::filesystem::path> checkpoint_dir{};
};

void validate(const TrainConfig& cfg);

// A contiguous slice of a source record's EEG and mel features. Sentences
// are whole records; fixed windows are slices of a concatenated trial.
struct Segment {
  const corpus::SentenceRecord* source{nullptr};
  Eigen::Index offset{0};
  Eigen::Index length{0};
  segmentation::WordBoundaries bounds;  // strided-grid word spans
  std::string subject_id;
  int trial_id{0};
  int position{0};  // order within (subject, trial)
  bool trainable{true};  // false for stimulus-only mismatch windows

  Matrix eeg() const { return source->eeg_feat.middleCols(offset, length); }
  Matrix mel() const { return source->mel_feat.middleCols(offset, length); }
};

std::vector<Segment> sentence_segments(const std::vector<corpus::SentenceRecord>& records);

// Matched EEG/stimulus plus a mismatched stimulus from the same trial.
struct PairedExample {
  std::size_t matched{0};     // segment index supplying EEG and S+
  std::size_t mismatched{0};  // segment index supplying S-
  MismatchStrategy strategy{MismatchStrategy::random_same_trial};
};

// One pair per trainable segment; S- drawn from the same (subject, trial).
std::vector<PairedExample> build_pairs(const std::vector<Segment>& segments, MismatchStrategy strategy,
                                       std::uint64_t seed);

// Seeded shuffle into batches. Pairs are laid down along partner chains
// (the pair whose S+ is the current pair's S-), so every pair shares a
// batch with its partner unless the partner was already placed or the
// batch filled up.
std::vector<std::vector<std::size_t>> batch_compose(const std::vector<PairedExample>& pairs,
                                                    std::size_t batch_size, std::uint64_t seed);

// Partner pair index for each pair, or SIZE_MAX when S- is never matched.
std::vector<std::size_t> partner_index(const std::vector<PairedExample>& pairs);

inline constexpr double kProbabilityClamp = 1e-7;

// Binary cross-entropy with targets [1, 0] for (d+, d-).
double pair_loss(double d_plus, double d_minus);
// d(loss)/d(d+), d(loss)/d(d-); zero where the clamp is active.
std::pair<double, double> pair_loss_gradient(double d_plus, double d_minus);

// A pair counts as correct iff d+ > d- (ties are wrong).
double accuracy_from_scores(const std::vector<double>& d_plus, const std::vector<double>& d_minus);

encoder::MatchModel build_model(const TrainConfig& cfg, int eeg_channels, int mel_bands);

// Resolves the boundary mode into per-segment strided-grid spans. Random
// boundaries are keyed by (trial, position) so every subject and both
// streams see the same spans for a sentence.
std::vector<segmentation::WordBoundaries> resolve_boundaries(const std::vector<Segment>& segments,
                                                             const BoundaryMode& mode,
                                                             const encoder::EncoderConfig& enc,
                                                             std::uint64_t seed);

struct PairScores {
  std::vector<double> d_plus;
  std::vector<double> d_minus;
};

PairScores score_pairs(const encoder::MatchModel& model, const std::vector<Segment>& segments,
                       const std::vector<segmentation::WordBoundaries>& bounds,
                       const std::vector<PairedExample>& pairs);

// Accuracy in percent; throws ValidationError on an empty test set.
double evaluate(const encoder::MatchModel& model, const std::vector<Segment>& segments,
                const std::vector<segmentation::WordBoundaries>& bounds,
                const std::vector<PairedExample>& pairs);

struct FoldSplit {
  int fold_id{1};
  std::vector<std::string> train_subjects;
  std::vector<std::string> test_subjects;
};

// Naturally sorted subjects cut into `folds` contiguous test blocks, larger
// blocks first (19 subjects -> 7, 6, 6).
std::vector<FoldSplit> make_folds(std::vector<std::string> subjects, int folds = 3);

void validate(const FoldSplit& split);

struct FoldResult {
  int fold_id{0};
  std::vector<double> train_loss;     // per epoch
  std::vector<double> test_accuracy;  // per epoch, percent
  double final_accuracy{0};
  std::map<std::string, double> subject_accuracy;  // final epoch, per test subject
  std::size_t train_pairs{0};
  std::size_t test_pairs{0};
};

using EpochCallback = std::function<void(int epoch, double loss, double accuracy)>;

// Trains from scratch on the split's training subjects and evaluates on the
// test subjects after every epoch.
FoldResult run_fold(const TrainConfig& cfg, const FoldSplit& split,
                    const std::vector<corpus::SentenceRecord>& records, const EpochCallback& on_epoch = {});

// Generic driver over prepared segments; used by run_fold and the window baseline.
FoldResult train_and_evaluate(const TrainConfig& cfg, int fold_id, const std::vector<Segment>& train_segments,
                              const std::vector<Segment>& test_segments, int eeg_channels, int mel_bands,
                              const EpochCallback& on_epoch = {});

// Sentence-level baseline: frame-level LSTM, time-averaged embeddings,
// sigmoid(mean(Re .* Rs)) score.
FoldResult baseline_sentence(TrainConfig cfg, const FoldSplit& split,
                             const std::vector<corpus::SentenceRecord>& records,
                             const EpochCallback& on_epoch = {});

struct WindowConfig {
  double window_s{5.0};
  double test_step_s{0.5};
  double train_overlap{0.9};
};

// Concatenates each (subject, trial)'s sentence records in order.
std::vector<corpus::SentenceRecord> trial_streams(const std::vector<corpus::SentenceRecord>& records);

// Fixed windows over trial streams; the mismatch is the adjacent window.
struct WindowSet {
  std::vector<Segment> segments;
  std::vector<PairedExample> pairs;
};
WindowSet fixed_windows(const std::vector<corpus::SentenceRecord>& streams,
                        const std::vector<std::string>& subjects, std::size_t window_frames,
                        std::size_t step_frames);

FoldResult baseline_fixed_window(TrainConfig cfg, const WindowConfig& window, const FoldSplit& split,
                                 const std::vector<corpus::SentenceRecord>& records,
                                 const EpochCallback& on_epoch = {});

}  // namespace wbmm::mm
