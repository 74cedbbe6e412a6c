#pragma once

#include <cstdint>
#include <vector>

#include "wbmm/types.hpp"

namespace wbmm::segmentation {

inline constexpr double kFrameRateHz = 64.0;
inline constexpr std::size_t kFeatureDownsample = 3;

// Sorted, non-overlapping, non-empty half-open spans at a given rate.
struct WordBoundaries {
  std::vector<Span> spans;
  double rate_hz{kFrameRateHz};

  std::size_t size() const { return spans.size(); }
  bool empty() const { return spans.empty(); }
  bool operator==(const WordBoundaries&) const = default;
};

// Throws ValidationError when the spans are unsorted, overlapping, empty or
// run past `sequence_length`.
void validate(const WordBoundaries& bounds, std::size_t sequence_length);

// Maps 64 Hz spans onto the strided feature grid. `sequence_length` is the
// 64 Hz frame count; the feature grid has ceil(sequence_length / factor)
// steps. Spans are floored, widened to at least one step, advanced past
// the previous span on collision, and dropped if they no longer fit.
WordBoundaries to_feature_rate(const WordBoundaries& bounds, std::size_t sequence_length,
                               std::size_t factor = kFeatureDownsample);

// Column w of the result is the mean of feature columns in span w.
Matrix word_pool(const Matrix& features, const WordBoundaries& bounds);

// Adjoint of word_pool: scatters each pooled-column gradient evenly over its
// span. Frames outside every span receive zero gradient.
Matrix word_pool_backward(const Matrix& pooled_grad, const WordBoundaries& bounds,
                          std::size_t sequence_length);

// Partition of [0, length) into `n_words` spans with uniformly drawn interior cuts.
WordBoundaries random_boundaries(std::size_t length, std::size_t n_words, std::uint64_t seed);

// As random_boundaries, with the word count drawn uniformly from [min_words, max_words]
// and clipped to `length`.
WordBoundaries random_count_boundaries(std::size_t length, std::size_t min_words,
                                       std::size_t max_words, std::uint64_t seed);

// Deletes the boundary after every n-th word (1-based), merging that word
// into its successor; a final word with no successor merges backward.
WordBoundaries skip_boundaries(const WordBoundaries& bounds, std::size_t n);

}  // namespace wbmm::segmentation
