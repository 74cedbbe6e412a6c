#pragma once

#include <algorithm>
#include <cmath>

#include "wbmm/encoder.hpp"
#include "wbmm/matchmismatch.hpp"
#include "wbmm/rng.hpp"

namespace wbmm::testing {

// Match-mismatch problem small enough for central finite differences.
struct TinyProblem {
  encoder::MatchModel model;
  Matrix eeg, s_plus, s_minus;
  segmentation::WordBoundaries b_plus, b_minus;
  std::uint64_t dropout_seed{77};
  encoder::Mode mode{encoder::Mode::train};

  std::size_t parameter_count() const { return model.response.parameter_count() + model.stimulus.parameter_count(); }

  double loss() const {
    const auto re = model.response.forward(eeg, b_plus, mode, dropout_seed).values;
    const auto rp = model.stimulus.forward(s_plus, b_plus, mode, dropout_seed + 1).values;
    const auto rm = model.stimulus.forward(s_minus, b_minus, mode, dropout_seed + 2).values;
    return mm::pair_loss(model.score(re, rp), model.score(re, rm));
  }

  void gradients(encoder::Gradients& g_resp, encoder::Gradients& g_stim) const {
    encoder::Encoder::Cache ce, cp, cm;
    const auto re = model.response.forward(eeg, b_plus, mode, dropout_seed, &ce).values;
    const auto rp = model.stimulus.forward(s_plus, b_plus, mode, dropout_seed + 1, &cp).values;
    const auto rm = model.stimulus.forward(s_minus, b_minus, mode, dropout_seed + 2, &cm).values;
    const auto [gp, gm] = mm::pair_loss_gradient(model.score(re, rp), model.score(re, rm));
    Vector dre_p, drp, dre_m, drm;
    model.score_gradient(re, rp, dre_p, drp);
    model.score_gradient(re, rm, dre_m, drm);
    g_resp = model.response.zero_gradients();
    g_stim = model.stimulus.zero_gradients();
    model.response.backward(ce, gp * dre_p + gm * dre_m, g_resp);
    model.stimulus.backward(cp, gp * drp, g_stim);
    model.stimulus.backward(cm, gm * drm, g_stim);
  }
};

inline TinyProblem make_tiny_problem(encoder::Activation act, encoder::SimilarityKind kind, std::uint64_t seed) {
  encoder::EncoderConfig cfg;
  cfg.input_channels = 3;
  cfg.conv1d_kernels = 2;
  cfg.conv1d_kernel_size = 3;
  cfg.conv2d_kernels = 2;
  cfg.conv2d_kernel_height = 2;
  cfg.conv2d_kernel_width = 3;
  cfg.conv2d_stride = 3;
  cfg.lstm_hidden = 3;
  cfg.dropout = 0.2;
  cfg.activation = act;
  TinyProblem p{encoder::make_model(cfg, cfg, encoder::Head::similarity, kind, seed), {}, {}, {}, {}, {}};
  Rng rng(mix_seed(seed, 1));
  auto fill = [&](Matrix& m) {
    m.resize(3, 18);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  };
  fill(p.eeg);
  fill(p.s_plus);
  fill(p.s_minus);
  p.s_plus = 0.5 * p.s_plus + 0.5 * p.eeg;
  p.b_plus.spans = {{0, 2}, {2, 3}, {3, 6}};
  p.b_minus.spans = {{0, 4}, {4, 6}};
  return p;
}

// Largest |analytic - numeric| / max(1e-6, |analytic| + |numeric|) over every parameter.
inline double max_relative_error(TinyProblem& p, double h = 1e-6) {
  encoder::Gradients g_resp, g_stim;
  p.gradients(g_resp, g_stim);
  double worst = 0.0;
  auto sweep = [&](encoder::Encoder& enc, const encoder::Gradients& g) {
    auto& params = enc.parameters();
    for (std::size_t t = 0; t < params.size(); ++t) {
      Matrix& w = params[t].value;
      for (Eigen::Index i = 0; i < w.size(); ++i) {
        const double keep = w.data()[i];
        w.data()[i] = keep + h;
        const double up = p.loss();
        w.data()[i] = keep - h;
        const double down = p.loss();
        w.data()[i] = keep;
        const double numeric = (up - down) / (2.0 * h);
        const double analytic = g[t].data()[i];
        const double denom = std::max(1e-6, std::abs(analytic) + std::abs(numeric));
        worst = std::max(worst, std::abs(analytic - numeric) / denom);
      }
    }
  };
  sweep(p.model.response, g_resp);
  sweep(p.model.stimulus, g_stim);
  return worst;
}

}  // namespace wbmm::testing
