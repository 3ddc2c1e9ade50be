#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "bevrl/hazard.hpp"

using namespace bevrl;

TEST_CASE("identical masks score zero, the maximum") {
  Mask route(8, 8);
  route.at(2, 3) = 1;
  route.at(4, 4) = 1;
  std::vector<float> pred(64, 0.0f);
  pred[2 * 8 + 3] = 1.0f;
  pred[4 * 8 + 4] = 1.0f;
  auto h = hazard(route, pred);
  CHECK(h.raw == doctest::Approx(0.0));
  CHECK(h.normalized == doctest::Approx(0.0));
}

TEST_CASE("K route pixels against an all-zero pred give raw -K/2") {
  Mask route(16, 16);
  int k = 0;
  for (int r = 0; r < 16; r += 3)
    for (int c = 0; c < 16; c += 5) {
      route.at(r, c) = 1;
      ++k;
    }
  std::vector<float> pred(256, 0.0f);
  auto h = hazard(route, pred);
  CHECK(h.raw == doctest::Approx(-k / 2.0));
  CHECK(h.normalized == doctest::Approx(-k / 2.0 / 256));
}

TEST_CASE("both masks empty scores zero") {
  Mask route(4, 4);
  auto h = hazard(route, std::vector<float>(16, 0.0f));
  CHECK(h.raw == 0.0);
}

TEST_CASE("hazard equals a direct double-loop summation on random pairs") {
  std::mt19937 rng(1);
  std::uniform_real_distribution<float> prob(0.0f, 1.0f);
  for (int trial = 0; trial < 100; ++trial) {
    int h = 5 + static_cast<int>(rng() % 8);
    int w = 5 + static_cast<int>(rng() % 8);
    Mask route(h, w);
    for (auto& v : route.data) v = static_cast<uint8_t>(rng() & 1);
    std::vector<float> pred(static_cast<size_t>(h) * w);
    for (auto& v : pred) v = prob(rng);

    double acc = 0;
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        double d = route.at(r, c) - static_cast<double>(pred[static_cast<size_t>(r) * w + c]);
        acc += d * d;
      }
    auto got = hazard(route, pred);
    CHECK(got.raw == doctest::Approx(-0.5 * acc).epsilon(1e-9));
    CHECK(got.raw <= 0.0);
    CHECK(got.normalized >= -0.5);
    CHECK(got.normalized <= 0.0);
  }
}

TEST_CASE("one extra fully mismatched pixel costs exactly one half") {
  Mask route(8, 8);
  route.at(0, 0) = 1;
  std::vector<float> pred(64, 0.0f);
  pred[0] = 1.0f;  // matching so far
  double before = hazard(route, pred).raw;
  route.at(7, 7) = 1;  // pred stays 0 there: full mismatch
  double after = hazard(route, pred).raw;
  CHECK(before - after == doctest::Approx(0.5));
}

TEST_CASE("shape mismatch is an error") {
  Mask route(4, 4);
  CHECK_THROWS_AS(hazard(route, std::vector<float>(15, 0.0f)), std::invalid_argument);
}

TEST_CASE("hazard from latent decodes the pred head deterministically") {
  VaeConfig cfg;
  cfg.height = 16;
  cfg.width = 16;
  cfg.latent = 8;
  cfg.enc_channels = {8, 16};
  MultiHeadVae model(cfg, 3);

  BevFrame frame(16, 16);
  std::mt19937 rng(4);
  for (auto& v : frame.data) v = static_cast<uint8_t>(rng() & 1);
  auto mu = model.encode_mu(frame);
  Mask route(16, 16);
  route.at(3, 3) = 1;

  auto h1 = hazard_from_latent(model, mu, route);
  auto h2 = hazard_from_latent(model, mu, route);
  CHECK(h1.raw == h2.raw);
  CHECK(h1.raw <= 0.0);
  // Matches scoring the decoded probability map directly.
  CHECK(h1.raw == doctest::Approx(hazard(route, model.decode_pred(mu)).raw));

  Mask wrong(8, 8);
  CHECK_THROWS_AS(hazard_from_latent(model, mu, wrong), std::invalid_argument);

  VaeConfig no_pred = cfg;
  no_pred.head_pred = false;
  MultiHeadVae rec_only(no_pred, 5);
  CHECK_THROWS_AS(hazard_from_latent(rec_only, rec_only.encode_mu(frame), route),
                  std::invalid_argument);
}
