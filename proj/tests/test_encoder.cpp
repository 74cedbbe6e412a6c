#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "gradcheck.hpp"
#include "wbmm/encoder.hpp"

using namespace wbmm;
using namespace wbmm::encoder;
namespace fs = std::filesystem;

namespace {

// Input used by tests/oracles/dump_encoder.cpp and encoder_oracle.py.
Matrix oracle_input() {
  Matrix x(28, 40);
  for (int c = 0; c < 28; ++c)
    for (int t = 0; t < 40; ++t) x(c, t) = std::sin(0.3 * c + 0.17 * t) + 0.1 * std::cos(0.05 * c * t);
  return x;
}

segmentation::WordBoundaries oracle_bounds() {
  segmentation::WordBoundaries b;
  b.spans = {{0, 3}, {3, 7}, {7, 14}};
  return b;
}

Vector random_vector(Rng& rng, Eigen::Index n, double scale = 1.0) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = scale * rng.normal();
  return v;
}

}  // namespace

TEST_CASE("forward pass matches the PyTorch reference") {
  // Values from encoder_oracle.py (torch.nn.Conv1d/Conv2d/LSTM, float64).
  auto cfg = EncoderConfig::stimulus(28);
  {
    Rng rng(42);
    const Encoder enc(cfg, Stream::stimulus, rng);
    const Vector e = enc.forward(oracle_input(), oracle_bounds(), Mode::eval, 0).values;
    REQUIRE(e.size() == 32);
    CHECK(std::abs(e(0) - 0.056454924520533266) < 1e-12);
    CHECK(std::abs(e(1) - -0.046959284548949445) < 1e-12);
    CHECK(std::abs(e(15) - -0.0533509478176342) < 1e-12);
    CHECK(std::abs(e(31) - 0.03483332593922011) < 1e-12);
  }
  cfg.readout = Readout::frame_mean;
  {
    Rng rng(42);
    const Encoder enc(cfg, Stream::stimulus, rng);
    const Vector e = enc.forward(oracle_input(), oracle_bounds(), Mode::eval, 0).values;
    CHECK(std::abs(e(0) - 0.0656045923550063) < 1e-12);
    CHECK(std::abs(e(1) - -0.054606587897084335) < 1e-12);
    CHECK(std::abs(e(15) - -0.05678365955050557) < 1e-12);
    CHECK(std::abs(e(31) - 0.026334211463826463) < 1e-12);
  }
}

TEST_CASE("embedding shape and stream") {
  Rng rng(1);
  const Encoder enc(EncoderConfig::response(128), Stream::response, rng);
  Matrix x = Matrix::Random(128, 30);
  const auto e = enc.forward(x, segmentation::random_boundaries(10, 3, 1), Mode::eval, 0);
  CHECK(e.values.size() == 32);
  CHECK(e.stream == Stream::response);
  CHECK(enc.parameter_count() == 8 * 128 * 8 + 8 + 16 * 16 * 9 + 16 + 4 * 32 * 128 + 4 * 32 * 32 + 4 * 32);
  CHECK_THROWS_AS(enc.forward(Matrix::Random(127, 30), segmentation::random_boundaries(10, 3, 1), Mode::eval, 0),
                  ValidationError);
  CHECK_THROWS_AS(enc.forward(Matrix::Random(128, 30), segmentation::random_boundaries(11, 3, 1), Mode::eval, 0),
                  ValidationError);
}

TEST_CASE("dropout is active only in train mode and seeded") {
  Rng rng(2);
  const Encoder enc(EncoderConfig::stimulus(28), Stream::stimulus, rng);
  const auto b = oracle_bounds();
  const Vector e1 = enc.forward(oracle_input(), b, Mode::eval, 1).values;
  const Vector e2 = enc.forward(oracle_input(), b, Mode::eval, 2).values;
  CHECK(e1 == e2);
  const Vector t1 = enc.forward(oracle_input(), b, Mode::train, 1).values;
  const Vector t1b = enc.forward(oracle_input(), b, Mode::train, 1).values;
  const Vector t2 = enc.forward(oracle_input(), b, Mode::train, 2).values;
  CHECK(t1 == t1b);
  CHECK_FALSE(t1 == t2);
  CHECK_FALSE(t1 == e1);
}

TEST_CASE("similarity closed forms") {
  Vector a = Vector::Zero(32), b = Vector::Zero(32);
  for (auto kind : {SimilarityKind::manhattan, SimilarityKind::euclidean}) {
    CHECK(std::abs(similarity(a, b, kind) - 1.0) < 1e-12);
  }
  b(3) = 1.0;
  CHECK(std::abs(similarity(a, b, SimilarityKind::manhattan) - std::exp(-1.0)) < 1e-12);
  b(7) = -1.0;
  CHECK(std::abs(similarity(a, b, SimilarityKind::manhattan) - std::exp(-2.0)) < 1e-12);
  CHECK(std::abs(similarity(a, b, SimilarityKind::euclidean) - std::exp(-std::sqrt(2.0))) < 1e-12);

  Vector u = Vector::Zero(3), v = Vector::Zero(3);
  u(0) = 1;
  v(0) = 2;
  CHECK(similarity(u, v, SimilarityKind::cosine) == doctest::Approx(1.0));
  v(0) = -2;
  CHECK(similarity(u, v, SimilarityKind::cosine) == doctest::Approx(0.0));
  v(0) = 0;
  v(1) = 1;
  CHECK(similarity(u, v, SimilarityKind::cosine) == doctest::Approx(0.5));
  CHECK_THROWS_AS(similarity(u, Vector::Zero(3), SimilarityKind::cosine), ValidationError);
  CHECK_THROWS_AS(similarity(u, Vector::Zero(4), SimilarityKind::manhattan), ValidationError);
}

TEST_CASE("similarity gradients match finite differences") {
  Rng rng(9);
  for (auto kind : {SimilarityKind::manhattan, SimilarityKind::euclidean, SimilarityKind::cosine}) {
    const Vector re = random_vector(rng, 6, 0.3), rs = random_vector(rng, 6, 0.3);
    Vector dre, drs;
    similarity_gradient(re, rs, kind, dre, drs);
    for (Eigen::Index i = 0; i < 6; ++i) {
      Vector up = re, down = re;
      up(i) += 1e-6;
      down(i) -= 1e-6;
      CHECK(dre(i) == doctest::Approx((similarity(up, rs, kind) - similarity(down, rs, kind)) / 2e-6).epsilon(1e-6));
      up = rs;
      down = rs;
      up(i) += 1e-6;
      down(i) -= 1e-6;
      CHECK(drs(i) == doctest::Approx((similarity(re, up, kind) - similarity(re, down, kind)) / 2e-6).epsilon(1e-6));
    }
  }
}

TEST_CASE("product head lies in (0, 1)") {
  Rng rng(4);
  for (int i = 0; i < 1000; ++i) {
    const double s = product_score(random_vector(rng, 32, 3.0), random_vector(rng, 32, 3.0));
    CHECK(s > 0.0);
    CHECK(s < 1.0);
  }
  const Vector re = random_vector(rng, 5), rs = random_vector(rng, 5);
  Vector dre, drs;
  product_score_gradient(re, rs, dre, drs);
  Vector up = re;
  up(2) += 1e-6;
  Vector down = re;
  down(2) -= 1e-6;
  CHECK(dre(2) == doctest::Approx((product_score(up, rs) - product_score(down, rs)) / 2e-6).epsilon(1e-6));
}

TEST_CASE("full match-mismatch loss gradient check") {
  for (auto act : {Activation::tanh, Activation::relu}) {
    for (auto kind : {SimilarityKind::manhattan, SimilarityKind::euclidean, SimilarityKind::cosine}) {
      auto p = testing::make_tiny_problem(act, kind, 3);
      CHECK(p.parameter_count() <= 500);
      CAPTURE(to_string(act));
      CAPTURE(to_string(kind));
      CHECK(testing::max_relative_error(p) < 1e-4);
    }
  }
}

TEST_CASE("frame_mean readout gradient check") {
  auto p = testing::make_tiny_problem(Activation::tanh, SimilarityKind::manhattan, 5);
  for (auto* enc : {&p.model.response, &p.model.stimulus}) {
    auto cfg = enc->config();
    cfg.readout = Readout::frame_mean;
    Rng rng(6);
    *enc = Encoder(cfg, enc->stream(), rng);
  }
  CHECK(testing::max_relative_error(p) < 1e-4);
}

TEST_CASE("checkpoint round trip and configuration mismatch") {
  const fs::path path = fs::temp_directory_path() / "wbmm_test_model.ckpt";
  const auto cfg_r = EncoderConfig::response(16);
  const auto cfg_s = EncoderConfig::stimulus(28);
  const auto a = make_model(cfg_r, cfg_s, Head::similarity, SimilarityKind::manhattan, 1);
  save_checkpoint(path, a);
  auto b = make_model(cfg_r, cfg_s, Head::similarity, SimilarityKind::manhattan, 2);
  CHECK_FALSE(b.response.parameters()[0].value == a.response.parameters()[0].value);
  load_checkpoint(path, b);
  for (std::size_t i = 0; i < a.response.parameters().size(); ++i) {
    CHECK(b.response.parameters()[i].value == a.response.parameters()[i].value);
    CHECK(b.stimulus.parameters()[i].value == a.stimulus.parameters()[i].value);
  }

  auto wrong = make_model(EncoderConfig::response(32), cfg_s, Head::similarity, SimilarityKind::manhattan, 1);
  CHECK_THROWS_AS(load_checkpoint(path, wrong), ValidationError);
  auto other_head = make_model(cfg_r, cfg_s, Head::product, SimilarityKind::manhattan, 1);
  CHECK_THROWS_AS(load_checkpoint(path, other_head), ValidationError);

  { std::ofstream(path, std::ios::binary) << "not a checkpoint"; }
  CHECK_THROWS(load_checkpoint(path, b));
  fs::remove(path);
}

TEST_CASE("name parsing lists the allowed set") {
  CHECK(similarity_from_string("cosine") == SimilarityKind::cosine);
  CHECK_THROWS_WITH_AS(similarity_from_string("l3"), doctest::Contains("manhattan"), ValidationError);
  CHECK_THROWS_AS(activation_from_string("gelu"), ValidationError);
  CHECK(readout_from_string("frame_mean") == Readout::frame_mean);
  EncoderConfig bad;
  bad.dropout = 1.0;
  CHECK_THROWS_AS(validate(bad), ValidationError);
}
