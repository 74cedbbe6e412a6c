#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace wbmm {

// Signals are stored channel-major: one row per channel, one column per sample.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Error classes map onto distinct CLI exit codes.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Half-open [start, end) index interval.
struct Span {
  std::size_t start{0};
  std::size_t end{0};

  std::size_t length() const { return end - start; }
  bool operator==(const Span&) const = default;
};

// Half-open interval in seconds.
struct TimeSpan {
  double start_s{0.0};
  double end_s{0.0};
};

struct WordSpan {
  double start_s{0.0};
  double end_s{0.0};
  std::string token;
};

}  // namespace wbmm
