#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bevrl/raster.hpp"
#include "bevrl/world.hpp"

using namespace bevrl;

namespace {

TargetInput stationary_future(const WorldState& w) {
  TargetInput in;
  int n = static_cast<int>(std::lround(kFutureSeconds / kFutureStride)) + 1;
  for (int k = 0; k < n; ++k) {
    in.ego_future.push_back(
        {w.ego.x, w.ego.y, w.ego.yaw, w.ego.length, w.ego.width});
    for (const auto& o : w.others)
      in.others_future.push_back({o.x, o.y, o.yaw, o.length, o.width});
  }
  return in;
}

void translate_world(WorldState& w, double dx, double dy) {
  auto shift = [&](VehicleState& v) {
    v.x += dx;
    v.y += dy;
    for (auto& p : v.history) {
      p.x += dx;
      p.y += dy;
    }
  };
  shift(w.ego);
  for (auto& o : w.others) shift(o);
  for (auto& l : w.graph.lanes)
    for (auto& p : l.pts) {
      p.x += dx;
      p.y += dy;
    }
  for (auto& p : w.route.pts) {
    p.x += dx;
    p.y += dy;
  }
}

}  // namespace

TEST_CASE("empty world has empty dynamic channels") {
  auto w = spawn_scenario(ScenarioKind::kRoundabout, 0, 0.0, 1);
  RasterSpec spec;
  auto frame = rasterize_input(w, spec);
  CHECK(frame.channel_count(kChOthersNow) == 0);
  CHECK(frame.channel_count(kChOthersHistory) == 0);
  CHECK(frame.channel_count(kChEgoNow) > 0);
  CHECK(frame.channel_count(kChRoad) > 0);
}

TEST_CASE("ego sits at the fixed anchor pixel") {
  auto w = spawn_scenario(ScenarioKind::kRoundabout, 0, 0.0, 5);
  RasterSpec spec;
  CHECK(spec.ego_row() == 48);
  CHECK(spec.ego_col() == 32);
  auto frame = rasterize_input(w, spec);
  CHECK(frame.at(kChEgoNow, spec.ego_row(), spec.ego_col()) == 1);
}

TEST_CASE("vehicle 10m ahead lands about 12.8px above the ego row") {
  auto w = spawn_scenario(ScenarioKind::kRoundabout, 0, 0.0, 5);
  VehicleState other;
  other.x = w.ego.x + 10.0 * std::cos(w.ego.yaw);
  other.y = w.ego.y + 10.0 * std::sin(w.ego.yaw);
  other.yaw = w.ego.yaw;
  w.others.push_back(other);
  RasterSpec spec;
  auto frame = rasterize_input(w, spec);
  REQUIRE(frame.channel_count(kChOthersNow) > 0);
  double row_sum = 0;
  int64_t n = 0;
  for (int r = 0; r < spec.height; ++r)
    for (int c = 0; c < spec.width; ++c)
      if (frame.at(kChOthersNow, r, c)) {
        row_sum += r;
        ++n;
      }
  double centroid_row = row_sum / n;
  CHECK(centroid_row == doctest::Approx(48.0 - 12.8).epsilon(0.05));
}

TEST_CASE("binarity and light channel exclusivity") {
  auto w = spawn_scenario(ScenarioKind::kFiveWay, 8, 0.25, 3);
  for (int t = 0; t < 30; ++t) step(w, EgoAction{0.3, 0.0});
  RasterSpec spec;
  auto frame = rasterize_input(w, spec);
  for (uint8_t v : frame.data) CHECK((v == 0 || v == 1));
  int nonempty_lights = 0;
  for (int ch : {kChLightGreen, kChLightYellow, kChLightRed})
    if (frame.channel_count(ch) > 0) ++nonempty_lights;
  CHECK(nonempty_lights <= 1);
  // a five-way route always has a stop line ahead at spawn
  auto fresh = spawn_scenario(ScenarioKind::kFiveWay, 0, 0.0, 3);
  auto f2 = rasterize_input(fresh, spec);
  int lit = 0;
  for (int ch : {kChLightGreen, kChLightYellow, kChLightRed})
    if (f2.channel_count(ch) > 0) ++lit;
  CHECK(lit == 1);
}

TEST_CASE("translation invariance of the ego-frame raster") {
  auto w = spawn_scenario(ScenarioKind::kFiveWay, 6, 0.0, 11);
  for (int t = 0; t < 20; ++t) step(w, EgoAction{0.3, 0.0});
  RasterSpec spec;
  auto before = rasterize_input(w, spec);
  translate_world(w, 123.0, -77.0);
  auto after = rasterize_input(w, spec);
  CHECK(before.data == after.data);
}

TEST_CASE("pixel footprint consistency within 30%") {
  auto w = spawn_scenario(ScenarioKind::kRoundabout, 0, 0.0, 5);
  VehicleState other;
  other.x = w.ego.x + 8.0 * std::cos(w.ego.yaw);
  other.y = w.ego.y + 8.0 * std::sin(w.ego.yaw);
  other.yaw = w.ego.yaw + 0.3;
  w.others.push_back(other);
  RasterSpec spec;
  auto frame = rasterize_input(w, spec);
  double area_m2 = other.length * other.width;
  double px_area = spec.m_per_px_row() * spec.m_per_px_col();
  double expected = area_m2 / px_area;
  double actual = static_cast<double>(frame.channel_count(kChOthersNow));
  CHECK(actual > expected * 0.7);
  CHECK(actual < expected * 1.3);
}

TEST_CASE("stationary targets: plan equals ego-now, pred equals others-now") {
  auto w = spawn_scenario(ScenarioKind::kRoundabout, 5, 0.0, 7);
  RasterSpec spec;
  auto frame = rasterize_input(w, spec);
  auto targets = rasterize_targets(w, stationary_future(w), spec);
  for (int r = 0; r < spec.height; ++r)
    for (int c = 0; c < spec.width; ++c) {
      CHECK(targets.plan.at(r, c) == frame.at(kChEgoNow, r, c));
      CHECK(targets.pred.at(r, c) == frame.at(kChOthersNow, r, c));
    }
}

TEST_CASE("constant-speed plan mask sweeps about 20m ahead") {
  auto w = spawn_scenario(ScenarioKind::kRoundabout, 0, 0.0, 7);
  TargetInput in;
  int n = static_cast<int>(std::lround(kFutureSeconds / kFutureStride)) + 1;
  for (int k = 0; k < n; ++k) {
    double d = 10.0 * k * kFutureStride;
    in.ego_future.push_back({w.ego.x + d * std::cos(w.ego.yaw),
                             w.ego.y + d * std::sin(w.ego.yaw), w.ego.yaw,
                             w.ego.length, w.ego.width});
  }
  RasterSpec spec;
  auto targets = rasterize_targets(w, in, spec);
  // Swept rectangle of (20 + length) x width, all within the view.
  double expected =
      (20.0 + w.ego.length) * w.ego.width / (spec.m_per_px_row() * spec.m_per_px_col());
  double actual = static_cast<double>(targets.plan.count());
  CHECK(actual > expected * 0.7);
  CHECK(actual < expected * 1.3);
  CHECK(targets.pred.count() == 0);
}

TEST_CASE("insufficient lookahead is an error") {
  auto w = spawn_scenario(ScenarioKind::kRoundabout, 0, 0.0, 7);
  TargetInput in;
  in.ego_future.push_back({w.ego.x, w.ego.y, w.ego.yaw, 4.5, 2.0});
  CHECK_THROWS_AS(rasterize_targets(w, in, RasterSpec{}), std::invalid_argument);
}

TEST_CASE("rgb render is deterministic with the expected palette") {
  auto w = spawn_scenario(ScenarioKind::kFiveWay, 4, 0.0, 13);
  RasterSpec spec;
  auto a = render_rgb(w, spec);
  auto b = render_rgb(w, spec);
  CHECK(a.data == b.data);
  // ego pixel is the red triple
  CHECK(a.at(0, spec.ego_row(), spec.ego_col()) == doctest::Approx(1.0f));
  CHECK(a.at(1, spec.ego_row(), spec.ego_col()) == doctest::Approx(0.1f));
  CHECK(a.at(2, spec.ego_row(), spec.ego_col()) == doctest::Approx(0.1f));
  for (float v : a.data) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
}
