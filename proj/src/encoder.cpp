#include "wbmm/encoder.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

namespace wbmm::encoder {

namespace {

using nlohmann::json;
using Index = Eigen::Index;

enum ParamIndex : std::size_t {
  kConv1dWeight = 0,
  kConv1dBias,
  kConv2dWeight,
  kConv2dBias,
  kLstmWeightIh,
  kLstmWeightHh,
  kLstmBias,
  kParamCount
};

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Matrix activate(const Matrix& pre, Activation a) {
  switch (a) {
    case Activation::relu:
      return pre.cwiseMax(0.0);
    case Activation::tanh:
      return pre.array().tanh().matrix();
  }
  return pre;
}

// d(act)/d(pre) expressed through whichever of pre/act is cheaper.
Matrix activation_slope(const Matrix& pre, const Matrix& act, Activation a) {
  switch (a) {
    case Activation::relu:
      return (pre.array() > 0.0).cast<double>().matrix();
    case Activation::tanh:
      return (1.0 - act.array().square()).matrix();
  }
  return Matrix::Ones(pre.rows(), pre.cols());
}

void fill_uniform(Matrix& m, double bound, Rng& rng) {
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-bound, bound);
  }
}

json config_json(const EncoderConfig& c) {
  return {{"input_channels", c.input_channels},
          {"conv1d_kernels", c.conv1d_kernels},
          {"conv1d_kernel_size", c.conv1d_kernel_size},
          {"conv2d_kernels", c.conv2d_kernels},
          {"conv2d_kernel_height", c.conv2d_kernel_height},
          {"conv2d_kernel_width", c.conv2d_kernel_width},
          {"conv2d_stride", c.conv2d_stride},
          {"lstm_hidden", c.lstm_hidden},
          {"dropout", c.dropout},
          {"activation", to_string(c.activation)},
          {"readout", to_string(c.readout)}};
}

}  // namespace

void validate(const EncoderConfig& c) {
  if (c.input_channels < 1 || c.conv1d_kernels < 1 || c.conv1d_kernel_size < 1 || c.conv2d_kernels < 1 ||
      c.conv2d_kernel_height < 1 || c.conv2d_kernel_width < 1 || c.conv2d_stride < 1 || c.lstm_hidden < 1) {
    throw ValidationError("encoder dimensions must be positive");
  }
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw ValidationError("dropout must lie in [0, 1)");
}

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw ValidationError("unknown activation '" + s + "' (allowed: relu, tanh)");
}

std::string to_string(Readout r) { return r == Readout::word_pool_last ? "word_pool_last" : "frame_mean"; }

Readout readout_from_string(const std::string& s) {
  if (s == "word_pool_last") return Readout::word_pool_last;
  if (s == "frame_mean") return Readout::frame_mean;
  throw ValidationError("unknown readout '" + s + "' (allowed: word_pool_last, frame_mean)");
}

Encoder::Encoder(const EncoderConfig& cfg, Stream stream, Rng& rng) : cfg_(cfg), stream_(stream) {
  validate(cfg);
  const Index k1 = cfg.conv1d_kernels;
  const Index fan1 = static_cast<Index>(cfg.input_channels) * cfg.conv1d_kernel_size;
  const Index f2 = cfg.conv2d_kernels;
  const Index fan2 = static_cast<Index>(cfg.conv2d_kernel_height) * cfg.conv2d_kernel_width;
  const Index h = cfg.lstm_hidden;
  const Index d = cfg.feature_dim();

  params_.resize(kParamCount);
  params_[kConv1dWeight] = {"conv1d.weight", Matrix(k1, fan1)};
  params_[kConv1dBias] = {"conv1d.bias", Matrix(k1, 1)};
  params_[kConv2dWeight] = {"conv2d.weight", Matrix(f2, fan2)};
  params_[kConv2dBias] = {"conv2d.bias", Matrix(f2, 1)};
  params_[kLstmWeightIh] = {"lstm.weight_ih", Matrix(4 * h, d)};
  params_[kLstmWeightHh] = {"lstm.weight_hh", Matrix(4 * h, h)};
  params_[kLstmBias] = {"lstm.bias", Matrix(4 * h, 1)};

  const double b1 = 1.0 / std::sqrt(static_cast<double>(fan1));
  const double b2 = 1.0 / std::sqrt(static_cast<double>(fan2));
  const double bl = 1.0 / std::sqrt(static_cast<double>(h));
  fill_uniform(params_[kConv1dWeight].value, b1, rng);
  fill_uniform(params_[kConv1dBias].value, b1, rng);
  fill_uniform(params_[kConv2dWeight].value, b2, rng);
  fill_uniform(params_[kConv2dBias].value, b2, rng);
  fill_uniform(params_[kLstmWeightIh].value, bl, rng);
  fill_uniform(params_[kLstmWeightHh].value, bl, rng);
  fill_uniform(params_[kLstmBias].value, bl, rng);
}

std::size_t Encoder::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

Gradients Encoder::zero_gradients() const {
  Gradients g;
  g.reserve(params_.size());
  for (const auto& p : params_) g.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
  return g;
}

Embedding Encoder::forward(const Matrix& x, const segmentation::WordBoundaries& bounds, Mode mode,
                           std::uint64_t dropout_seed, Cache* cache) const {
  const EncoderConfig& c = cfg_;
  if (x.rows() != c.input_channels) {
    throw ValidationError("encoder expects " + std::to_string(c.input_channels) + " input channels, got " +
                          std::to_string(x.rows()));
  }
  const auto frames = static_cast<std::size_t>(x.cols());
  if (frames < c.min_frames()) {
    throw ValidationError("input of " + std::to_string(frames) + " frames is shorter than the receptive minimum " +
                          std::to_string(c.min_frames()));
  }
  const std::size_t strided = c.strided_length(frames);
  if (c.readout == Readout::word_pool_last) {
    if (bounds.empty()) throw ValidationError("word pooling needs at least one word span");
    segmentation::validate(bounds, strided);
  }

  Cache local;
  Cache& k = cache ? *cache : local;
  k.frames = frames;
  k.strided = strided;
  const Index T = static_cast<Index>(frames);
  const Index C = c.input_channels;

  // 1-D convolution over time, same padding.
  const Index k1 = c.conv1d_kernel_size;
  const Index pad1 = (k1 - 1) / 2;
  k.col1 = Matrix::Zero(C * k1, T);
  for (Index ch = 0; ch < C; ++ch) {
    for (Index j = 0; j < k1; ++j) {
      const Index shift = j - pad1;
      const Index t0 = std::max<Index>(0, -shift);
      const Index t1 = std::min<Index>(T, T - shift);
      if (t1 > t0) k.col1.row(ch * k1 + j).segment(t0, t1 - t0) = x.row(ch).segment(t0 + shift, t1 - t0);
    }
  }
  k.pre1 = params_[kConv1dWeight].value * k.col1;
  k.pre1.colwise() += params_[kConv1dBias].value.col(0);
  k.act1 = activate(k.pre1, c.activation);

  // 2-D convolution treating the conv1d maps as a one-channel image.
  const Index H = c.conv1d_kernels;
  const Index kh = c.conv2d_kernel_height;
  const Index kw = c.conv2d_kernel_width;
  const Index stride = c.conv2d_stride;
  const Index T2 = static_cast<Index>(strided);
  const Index pad_top = (kh - 1) / 2;
  const Index pad_left = std::max<Index>(0, (T2 - 1) * stride + kw - T) / 2;
  k.col2 = Matrix::Zero(kh * kw, H * T2);
  for (Index i = 0; i < kh; ++i) {
    for (Index h = 0; h < H; ++h) {
      const Index src_row = h + i - pad_top;
      if (src_row < 0 || src_row >= H) continue;
      for (Index j = 0; j < kw; ++j) {
        for (Index tau = 0; tau < T2; ++tau) {
          const Index src_col = tau * stride + j - pad_left;
          if (src_col >= 0 && src_col < T) k.col2(i * kw + j, h * T2 + tau) = k.act1(src_row, src_col);
        }
      }
    }
  }
  Matrix pre2 = params_[kConv2dWeight].value * k.col2;
  pre2.colwise() += params_[kConv2dBias].value.col(0);
  const Index D = c.feature_dim();
  k.pre2 = Eigen::Map<const Matrix>(pre2.data(), D, T2);
  k.act2 = activate(k.pre2, c.activation);

  // Sequence fed to the LSTM.
  Matrix seq;
  if (c.readout == Readout::word_pool_last) {
    k.bounds = bounds;
    seq = segmentation::word_pool(k.act2, bounds);
  } else {
    k.bounds = {};
    seq = k.act2;
  }
  if (mode == Mode::train && c.dropout > 0.0) {
    Rng rng(dropout_seed);
    const double keep = 1.0 - c.dropout;
    k.dropout_mask.resize(seq.rows(), seq.cols());
    for (Index r = 0; r < seq.rows(); ++r) {
      for (Index col = 0; col < seq.cols(); ++col) k.dropout_mask(r, col) = rng.uniform() < keep ? 1.0 / keep : 0.0;
    }
    k.seq_in = seq.cwiseProduct(k.dropout_mask);
  } else {
    k.dropout_mask.resize(0, 0);
    k.seq_in = std::move(seq);
  }

  // LSTM.
  const Index Hh = c.lstm_hidden;
  const Index steps = k.seq_in.cols();
  const Matrix& Wih = params_[kLstmWeightIh].value;
  const Matrix& Whh = params_[kLstmWeightHh].value;
  Matrix input_proj = Wih * k.seq_in;
  input_proj.colwise() += params_[kLstmBias].value.col(0);
  k.gates.resize(4 * Hh, steps);
  k.cells.resize(Hh, steps);
  k.hidden.resize(Hh, steps);
  Vector h_prev = Vector::Zero(Hh);
  Vector c_prev = Vector::Zero(Hh);
  for (Index t = 0; t < steps; ++t) {
    Vector a = input_proj.col(t) + Whh * h_prev;
    for (Index u = 0; u < Hh; ++u) {
      const double ig = sigmoid(a(u));
      const double fg = sigmoid(a(Hh + u));
      const double gg = std::tanh(a(2 * Hh + u));
      const double og = sigmoid(a(3 * Hh + u));
      const double cell = fg * c_prev(u) + ig * gg;
      k.gates(u, t) = ig;
      k.gates(Hh + u, t) = fg;
      k.gates(2 * Hh + u, t) = gg;
      k.gates(3 * Hh + u, t) = og;
      k.cells(u, t) = cell;
      k.hidden(u, t) = og * std::tanh(cell);
    }
    h_prev = k.hidden.col(t);
    c_prev = k.cells.col(t);
  }

  Embedding e;
  e.stream = stream_;
  if (c.readout == Readout::word_pool_last) {
    e.values = k.hidden.col(steps - 1);
  } else {
    e.values = k.hidden.rowwise().mean();
  }
  if (!e.values.allFinite()) throw std::runtime_error("non-finite embedding");
  return e;
}

void Encoder::backward(const Cache& k, const Vector& d_embedding, Gradients& grads) const {
  const EncoderConfig& c = cfg_;
  const Index Hh = c.lstm_hidden;
  const Index steps = k.seq_in.cols();

  // dL/dh_t contributed by the readout.
  Matrix d_hidden_ext = Matrix::Zero(Hh, steps);
  if (c.readout == Readout::word_pool_last) {
    d_hidden_ext.col(steps - 1) = d_embedding;
  } else {
    d_hidden_ext.colwise() = d_embedding / static_cast<double>(steps);
  }

  const Matrix& Whh = params_[kLstmWeightHh].value;
  Matrix d_pre_gates(4 * Hh, steps);
  Vector dh_next = Vector::Zero(Hh);
  Vector dc_next = Vector::Zero(Hh);
  for (Index t = steps - 1; t >= 0; --t) {
    const Vector dh = d_hidden_ext.col(t) + dh_next;
    for (Index u = 0; u < Hh; ++u) {
      const double ig = k.gates(u, t);
      const double fg = k.gates(Hh + u, t);
      const double gg = k.gates(2 * Hh + u, t);
      const double og = k.gates(3 * Hh + u, t);
      const double tc = std::tanh(k.cells(u, t));
      const double c_prev = t > 0 ? k.cells(u, t - 1) : 0.0;
      const double d_o = dh(u) * tc;
      const double dc = dc_next(u) + dh(u) * og * (1.0 - tc * tc);
      d_pre_gates(u, t) = dc * gg * ig * (1.0 - ig);
      d_pre_gates(Hh + u, t) = dc * c_prev * fg * (1.0 - fg);
      d_pre_gates(2 * Hh + u, t) = dc * ig * (1.0 - gg * gg);
      d_pre_gates(3 * Hh + u, t) = d_o * og * (1.0 - og);
      dc_next(u) = dc * fg;
    }
    dh_next = Whh.transpose() * d_pre_gates.col(t);
  }
  grads[kLstmWeightIh].noalias() += d_pre_gates * k.seq_in.transpose();
  if (steps > 1) {
    grads[kLstmWeightHh].noalias() +=
        d_pre_gates.rightCols(steps - 1) * k.hidden.leftCols(steps - 1).transpose();
  }
  grads[kLstmBias] += d_pre_gates.rowwise().sum();

  Matrix d_seq = params_[kLstmWeightIh].value.transpose() * d_pre_gates;
  if (k.dropout_mask.size() > 0) d_seq = d_seq.cwiseProduct(k.dropout_mask);

  Matrix d_act2 = c.readout == Readout::word_pool_last
                      ? segmentation::word_pool_backward(d_seq, k.bounds, k.strided)
                      : d_seq;
  Matrix d_pre2_flat = d_act2.cwiseProduct(activation_slope(k.pre2, k.act2, c.activation));

  const Index H = c.conv1d_kernels;
  const Index T2 = static_cast<Index>(k.strided);
  const Index F = c.conv2d_kernels;
  const Eigen::Map<const Matrix> d_pre2(d_pre2_flat.data(), F, H * T2);
  grads[kConv2dWeight].noalias() += d_pre2 * k.col2.transpose();
  grads[kConv2dBias] += d_pre2.rowwise().sum();
  const Matrix d_col2 = params_[kConv2dWeight].value.transpose() * d_pre2;

  // col2im
  const Index T = static_cast<Index>(k.frames);
  const Index kh = c.conv2d_kernel_height;
  const Index kw = c.conv2d_kernel_width;
  const Index stride = c.conv2d_stride;
  const Index pad_top = (kh - 1) / 2;
  const Index pad_left = std::max<Index>(0, (T2 - 1) * stride + kw - T) / 2;
  Matrix d_act1 = Matrix::Zero(H, T);
  for (Index i = 0; i < kh; ++i) {
    for (Index h = 0; h < H; ++h) {
      const Index src_row = h + i - pad_top;
      if (src_row < 0 || src_row >= H) continue;
      for (Index j = 0; j < kw; ++j) {
        for (Index tau = 0; tau < T2; ++tau) {
          const Index src_col = tau * stride + j - pad_left;
          if (src_col >= 0 && src_col < T) d_act1(src_row, src_col) += d_col2(i * kw + j, h * T2 + tau);
        }
      }
    }
  }
  const Matrix d_pre1 = d_act1.cwiseProduct(activation_slope(k.pre1, k.act1, c.activation));
  grads[kConv1dWeight].noalias() += d_pre1 * k.col1.transpose();
  grads[kConv1dBias] += d_pre1.rowwise().sum();
}

std::string to_string(SimilarityKind k) {
  switch (k) {
    case SimilarityKind::manhattan:
      return "manhattan";
    case SimilarityKind::euclidean:
      return "euclidean";
    case SimilarityKind::cosine:
      return "cosine";
  }
  return "manhattan";
}

SimilarityKind similarity_from_string(const std::string& s) {
  if (s == "manhattan") return SimilarityKind::manhattan;
  if (s == "euclidean") return SimilarityKind::euclidean;
  if (s == "cosine") return SimilarityKind::cosine;
  throw ValidationError("unknown similarity '" + s + "' (allowed: manhattan, euclidean, cosine)");
}

double similarity(const Vector& re, const Vector& rs, SimilarityKind kind) {
  if (re.size() != rs.size()) throw ValidationError("embedding dimensions differ");
  if (!re.allFinite() || !rs.allFinite()) throw ValidationError("non-finite embedding");
  switch (kind) {
    case SimilarityKind::manhattan:
      return std::exp(-(re - rs).lpNorm<1>());
    case SimilarityKind::euclidean:
      return std::exp(-(re - rs).norm());
    case SimilarityKind::cosine: {
      const double ne = re.norm();
      const double ns = rs.norm();
      if (ne == 0.0 || ns == 0.0) throw ValidationError("cosine similarity of a zero-norm embedding is undefined");
      const double cos = std::clamp(re.dot(rs) / (ne * ns), -1.0, 1.0);
      return 0.5 * (1.0 + cos);
    }
  }
  return 0.0;
}

void similarity_gradient(const Vector& re, const Vector& rs, SimilarityKind kind, Vector& d_re, Vector& d_rs) {
  const double d = similarity(re, rs, kind);
  const Vector diff = re - rs;
  switch (kind) {
    case SimilarityKind::manhattan:
      d_re = -d * diff.array().sign().matrix();
      break;
    case SimilarityKind::euclidean: {
      const double n = diff.norm();
      d_re = n > 0 ? Vector(-d * diff / n) : Vector::Zero(re.size());
      break;
    }
    case SimilarityKind::cosine: {
      const double ne = re.norm();
      const double ns = rs.norm();
      const double cos = re.dot(rs) / (ne * ns);
      d_re = 0.5 * (rs / (ne * ns) - cos * re / (ne * ne));
      d_rs = 0.5 * (re / (ne * ns) - cos * rs / (ns * ns));
      return;
    }
  }
  d_rs = -d_re;
}

double product_score(const Vector& re, const Vector& rs) {
  return sigmoid(re.cwiseProduct(rs).mean());
}

void product_score_gradient(const Vector& re, const Vector& rs, Vector& d_re, Vector& d_rs) {
  const double p = product_score(re, rs);
  const double scale = p * (1.0 - p) / static_cast<double>(re.size());
  d_re = scale * rs;
  d_rs = scale * re;
}

double MatchModel::score(const Vector& re, const Vector& rs) const {
  return head == Head::product ? product_score(re, rs) : encoder::similarity(re, rs, similarity);
}

void MatchModel::score_gradient(const Vector& re, const Vector& rs, Vector& d_re, Vector& d_rs) const {
  if (head == Head::product) {
    product_score_gradient(re, rs, d_re, d_rs);
  } else {
    similarity_gradient(re, rs, similarity, d_re, d_rs);
  }
}

MatchModel make_model(const EncoderConfig& response_cfg, const EncoderConfig& stimulus_cfg, Head head,
                      SimilarityKind kind, std::uint64_t seed) {
  Rng response_rng(mix_seed(seed, 0xE1));
  Rng stimulus_rng(mix_seed(seed, 0x51));
  return MatchModel{Encoder(response_cfg, Stream::response, response_rng),
                    Encoder(stimulus_cfg, Stream::stimulus, stimulus_rng), head, kind};
}

namespace {

json model_header(const MatchModel& m) {
  json tensors = json::array();
  for (const auto* enc : {&m.response, &m.stimulus}) {
    const std::string prefix = enc->stream() == Stream::response ? "response." : "stimulus.";
    for (const auto& p : enc->parameters()) {
      tensors.push_back({{"name", prefix + p.name}, {"shape", {p.value.rows(), p.value.cols()}}, {"dtype", "f64"}});
    }
  }
  return {{"format", 1},
          {"head", m.head == Head::product ? "product" : "similarity"},
          {"similarity", to_string(m.similarity)},
          {"response", config_json(m.response.config())},
          {"stimulus", config_json(m.stimulus.config())},
          {"tensors", tensors}};
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const MatchModel& model) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint " + tmp.string());
    out << "WBMMCKPT1\n" << model_header(model).dump() << '\n';
    for (const auto* enc : {&model.response, &model.stimulus}) {
      for (const auto& p : enc->parameters()) {
        out.write(reinterpret_cast<const char*>(p.value.data()),
                  static_cast<std::streamsize>(p.value.size() * sizeof(double)));
      }
    }
    if (!out) throw DataError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void load_checkpoint(const std::filesystem::path& path, MatchModel& model) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::string magic, header_line;
  std::getline(in, magic);
  if (magic != "WBMMCKPT1") throw DataError(path.string() + ": not a checkpoint");
  std::getline(in, header_line);
  json stored;
  try {
    stored = json::parse(header_line);
  } catch (const std::exception& e) {
    throw DataError(path.string() + ": corrupt checkpoint header");
  }
  const json expected = model_header(model);
  for (const char* key : {"head", "similarity", "response", "stimulus", "tensors"}) {
    if (stored.at(key) != expected.at(key)) {
      throw ValidationError(path.string() + ": checkpoint " + key + " does not match the model configuration");
    }
  }
  for (auto* enc : {&model.response, &model.stimulus}) {
    for (auto& p : enc->parameters()) {
      in.read(reinterpret_cast<char*>(p.value.data()), static_cast<std::streamsize>(p.value.size() * sizeof(double)));
      if (!in) throw DataError(path.string() + ": truncated checkpoint");
    }
  }
}

}  // namespace wbmm::encoder
