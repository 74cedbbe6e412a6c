#include <cmath>
#include <iostream>
#include <json.hpp>
#include "wbmm/encoder.hpp"
using namespace wbmm;
int main() {
  nlohmann::json out;
  for (int readout = 0; readout < 2; ++readout) {
    auto cfg = encoder::EncoderConfig::stimulus(28);
    cfg.readout = readout ? encoder::Readout::frame_mean : encoder::Readout::word_pool_last;
    Rng rng(42);
    encoder::Encoder enc(cfg, encoder::Stream::stimulus, rng);
    Matrix x(28, 40);
    for (int c = 0; c < 28; ++c) for (int t = 0; t < 40; ++t) x(c, t) = std::sin(0.3 * c + 0.17 * t) + 0.1 * std::cos(0.05 * c * t);
    segmentation::WordBoundaries b; b.spans = {{0, 3}, {3, 7}, {7, 14}};
    auto e = enc.forward(x, b, encoder::Mode::eval, 0);
    nlohmann::json j;
    for (auto& p : enc.parameters()) j["params"][p.name] = std::vector<double>(p.value.data(), p.value.data() + p.value.size());
    j["x"] = std::vector<double>(x.data(), x.data() + x.size());
    j["emb"] = std::vector<double>(e.values.data(), e.values.data() + e.values.size());
    out[readout ? "frame_mean" : "word_pool_last"] = j;
  }
  std::cout << out.dump();
}
