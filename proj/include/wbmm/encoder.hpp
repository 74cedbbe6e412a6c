#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wbmm/rng.hpp"
#include "wbmm/segmentation.hpp"
#include "wbmm/types.hpp"

namespace wbmm::encoder {

enum class Stream { stimulus, response };
enum class Mode { train, eval };
enum class Activation { relu, tanh };

// How per-time-step features become the LSTM input sequence and how the
// LSTM output becomes the embedding.
enum class Readout {
  word_pool_last,  // word-level average pooling, last hidden state
  frame_mean,      // every strided frame fed to the LSTM, hidden states averaged over time
};

struct EncoderConfig {
  int input_channels{28};
  int conv1d_kernels{8};
  int conv1d_kernel_size{8};
  int conv2d_kernels{16};
  int conv2d_kernel_height{16};
  int conv2d_kernel_width{9};
  int conv2d_stride{3};
  int lstm_hidden{32};
  double dropout{0.2};
  Activation activation{Activation::relu};
  Readout readout{Readout::word_pool_last};

  int feature_dim() const { return conv2d_kernels * conv1d_kernels; }
  std::size_t strided_length(std::size_t frames) const {
    return (frames + static_cast<std::size_t>(conv2d_stride) - 1) / static_cast<std::size_t>(conv2d_stride);
  }
  std::size_t min_frames() const {
    return static_cast<std::size_t>(std::max(conv1d_kernel_size, conv2d_kernel_width));
  }
  bool operator==(const EncoderConfig&) const = default;

  static EncoderConfig stimulus(int mel_bands = 28) { return EncoderConfig{.input_channels = mel_bands}; }
  static EncoderConfig response(int eeg_channels = 128) { return EncoderConfig{.input_channels = eeg_channels}; }
};

void validate(const EncoderConfig& cfg);

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);
std::string to_string(Readout r);
Readout readout_from_string(const std::string& s);

struct Tensor {
  std::string name;
  Matrix value;
};

// Gradient buffers shaped like an encoder's parameters.
using Gradients = std::vector<Matrix>;

struct Embedding {
  Vector values;
  Stream stream{Stream::stimulus};
};

class Encoder {
 public:
  // Intermediate activations retained for the backward pass.
  struct Cache {
    std::size_t frames{0};
    std::size_t strided{0};
    Matrix col1;          // im2col of the input
    Matrix pre1, act1;    // conv1d
    Matrix col2;          // im2col of act1 as a 1-channel image
    Matrix pre2, act2;    // conv2d, act2 reshaped to [feature_dim x strided]
    segmentation::WordBoundaries bounds;
    Matrix seq_in;        // LSTM inputs after dropout [feature_dim x steps]
    Matrix dropout_mask;  // same shape, empty in eval mode
    Matrix gates;         // post-nonlinearity gates [4H x steps]: i, f, g, o
    Matrix cells;         // [H x steps]
    Matrix hidden;        // [H x steps]
  };

  Encoder(const EncoderConfig& cfg, Stream stream, Rng& init_rng);

  const EncoderConfig& config() const { return cfg_; }
  Stream stream() const { return stream_; }

  // `bounds` must index the strided grid of length ceil(T / stride). They
  // are ignored by the frame_mean readout.
  Embedding forward(const Matrix& features, const segmentation::WordBoundaries& bounds, Mode mode,
                    std::uint64_t dropout_seed, Cache* cache = nullptr) const;

  // Accumulates d(loss)/d(params) into `grads` given d(loss)/d(embedding).
  void backward(const Cache& cache, const Vector& d_embedding, Gradients& grads) const;

  Gradients zero_gradients() const;

  std::vector<Tensor>& parameters() { return params_; }
  const std::vector<Tensor>& parameters() const { return params_; }
  std::size_t parameter_count() const;

 private:
  EncoderConfig cfg_;
  Stream stream_;
  std::vector<Tensor> params_;
};

enum class SimilarityKind { manhattan, euclidean, cosine };

std::string to_string(SimilarityKind k);
SimilarityKind similarity_from_string(const std::string& s);

double similarity(const Vector& response, const Vector& stimulus, SimilarityKind kind);

// Gradients of the similarity score with respect to both embeddings.
void similarity_gradient(const Vector& response, const Vector& stimulus, SimilarityKind kind,
                         Vector& d_response, Vector& d_stimulus);

// Sentence-level baseline head: sigmoid(mean(response .* stimulus)).
double product_score(const Vector& response, const Vector& stimulus);
void product_score_gradient(const Vector& response, const Vector& stimulus, Vector& d_response,
                            Vector& d_stimulus);

enum class Head { similarity, product };

// Stimulus and response encoders plus the scoring head.
struct MatchModel {
  Encoder response;
  Encoder stimulus;
  Head head{Head::similarity};
  SimilarityKind similarity{SimilarityKind::manhattan};

  double score(const Vector& re, const Vector& rs) const;
  void score_gradient(const Vector& re, const Vector& rs, Vector& d_re, Vector& d_rs) const;
};

MatchModel make_model(const EncoderConfig& response_cfg, const EncoderConfig& stimulus_cfg, Head head,
                      SimilarityKind kind, std::uint64_t seed);

// Binary checkpoint: magic line, JSON header with both encoder configs and
// the tensor table, then float64 tensor payloads.
void save_checkpoint(const std::filesystem::path& path, const MatchModel& model);
// Throws ValidationError when the stored configuration differs from `model`'s.
void load_checkpoint(const std::filesystem::path& path, MatchModel& model);

}  // namespace wbmm::encoder
