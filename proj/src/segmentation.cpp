#include "wbmm/segmentation.hpp"

#include <algorithm>
#include <string>

#include "wbmm/rng.hpp"

namespace wbmm::segmentation {

void validate(const WordBoundaries& bounds, std::size_t sequence_length) {
  std::size_t prev_end = 0;
  for (std::size_t i = 0; i < bounds.spans.size(); ++i) {
    const Span& s = bounds.spans[i];
    if (s.start >= s.end) {
      throw ValidationError("word span " + std::to_string(i) + " is empty");
    }
    if (s.start < prev_end) {
      throw ValidationError("word span " + std::to_string(i) + " overlaps its predecessor");
    }
    if (s.end > sequence_length) {
      throw ValidationError("word span " + std::to_string(i) + " ends at " +
                            std::to_string(s.end) + " past sequence length " +
                            std::to_string(sequence_length));
    }
    prev_end = s.end;
  }
}

WordBoundaries to_feature_rate(const WordBoundaries& bounds, std::size_t sequence_length,
                               std::size_t factor) {
  if (factor == 0) throw ValidationError("downsample factor must be positive");
  validate(bounds, sequence_length);
  const std::size_t feature_length = (sequence_length + factor - 1) / factor;

  WordBoundaries out;
  out.rate_hz = bounds.rate_hz / static_cast<double>(factor);
  std::size_t prev_end = 0;
  for (const Span& s : bounds.spans) {
    std::size_t start = std::max(s.start / factor, prev_end);
    if (start >= feature_length) break;
    std::size_t end = std::max(start + 1, s.end / factor);
    end = std::min(end, feature_length);
    out.spans.push_back({start, end});
    prev_end = end;
  }
  if (out.spans.empty()) {
    throw ValidationError("sequence of " + std::to_string(sequence_length) +
                          " frames too short for any word span");
  }
  return out;
}

Matrix word_pool(const Matrix& features, const WordBoundaries& bounds) {
  const auto length = static_cast<std::size_t>(features.cols());
  Matrix pooled(features.rows(), static_cast<Eigen::Index>(bounds.spans.size()));
  for (std::size_t w = 0; w < bounds.spans.size(); ++w) {
    const Span& s = bounds.spans[w];
    if (s.start >= s.end) throw ValidationError("cannot pool an empty word span");
    if (s.end > length) throw ValidationError("word span exceeds feature length");
    const auto first = static_cast<Eigen::Index>(s.start);
    const auto width = static_cast<Eigen::Index>(s.length());
    pooled.col(static_cast<Eigen::Index>(w)) =
        features.middleCols(first, width).rowwise().sum() / static_cast<double>(width);
  }
  return pooled;
}

Matrix word_pool_backward(const Matrix& pooled_grad, const WordBoundaries& bounds,
                          std::size_t sequence_length) {
  Matrix grad = Matrix::Zero(pooled_grad.rows(), static_cast<Eigen::Index>(sequence_length));
  for (std::size_t w = 0; w < bounds.spans.size(); ++w) {
    const Span& s = bounds.spans[w];
    const double scale = 1.0 / static_cast<double>(s.length());
    for (std::size_t t = s.start; t < s.end; ++t) {
      grad.col(static_cast<Eigen::Index>(t)) += scale * pooled_grad.col(static_cast<Eigen::Index>(w));
    }
  }
  return grad;
}

WordBoundaries random_boundaries(std::size_t length, std::size_t n_words, std::uint64_t seed) {
  if (n_words == 0) throw ValidationError("random boundaries need at least one word");
  if (n_words > length) {
    throw ValidationError("cannot place " + std::to_string(n_words) + " words in " +
                          std::to_string(length) + " frames");
  }
  // Partial Fisher-Yates over the interior cut positions 1..length-1.
  std::vector<std::size_t> interior(length - 1);
  for (std::size_t i = 0; i < interior.size(); ++i) interior[i] = i + 1;
  Rng rng(seed);
  const std::size_t n_cuts = n_words - 1;
  for (std::size_t i = 0; i < n_cuts; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(interior.size() - i));
    std::swap(interior[i], interior[j]);
  }
  std::vector<std::size_t> cuts(interior.begin(), interior.begin() + static_cast<std::ptrdiff_t>(n_cuts));
  std::sort(cuts.begin(), cuts.end());

  WordBoundaries out;
  std::size_t start = 0;
  for (std::size_t cut : cuts) {
    out.spans.push_back({start, cut});
    start = cut;
  }
  out.spans.push_back({start, length});
  return out;
}

WordBoundaries random_count_boundaries(std::size_t length, std::size_t min_words,
                                       std::size_t max_words, std::uint64_t seed) {
  if (min_words == 0 || min_words > max_words) {
    throw ValidationError("word count range must satisfy 1 <= min <= max");
  }
  Rng rng(mix_seed(seed, 0xC0));
  auto n = static_cast<std::size_t>(
      rng.between(static_cast<std::int64_t>(min_words), static_cast<std::int64_t>(max_words)));
  n = std::min(n, length);
  return random_boundaries(length, n, seed);
}

WordBoundaries skip_boundaries(const WordBoundaries& bounds, std::size_t n) {
  if (n < 2) throw ValidationError("skip-n requires n >= 2");
  WordBoundaries out;
  out.rate_hz = bounds.rate_hz;
  const std::size_t count = bounds.spans.size();
  bool carrying = false;
  std::size_t carry_start = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t word = i + 1;
    const Span& s = bounds.spans[i];
    const std::size_t start = carrying ? carry_start : s.start;
    carrying = false;
    if (word % n == 0) {
      if (word < count) {
        carrying = true;
        carry_start = start;
        continue;
      }
      if (!out.spans.empty()) {
        out.spans.back().end = s.end;
        continue;
      }
    }
    out.spans.push_back({start, s.end});
  }
  return out;
}

}  // namespace wbmm::segmentation
