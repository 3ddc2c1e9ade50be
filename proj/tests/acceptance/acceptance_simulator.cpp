// Criterion 5: simulator soundness -- bit-identical seeded replays, the
// SAT collision detector against a point-sampling oracle, and no
// red-line crossings by normal-behavior traffic.

#include <cmath>
#include <random>
#include <sstream>

#include "acceptance.hpp"
#include "bevrl/world.hpp"

using namespace bevrl;

namespace {

std::vector<double> run_trajectory(ScenarioKind kind, uint32_t seed, int ticks) {
  WorldState w = spawn_scenario(kind, 6, 0.3, seed);
  std::vector<double> trace;
  for (int t = 0; t < ticks; ++t) {
    auto [accel, steer] = autopilot(w.ego, w);
    step(w, EgoAction{accel, steer});
    trace.push_back(w.ego.x);
    trace.push_back(w.ego.y);
    trace.push_back(w.ego.yaw);
    trace.push_back(w.ego.v);
    for (const auto& o : w.others) {
      trace.push_back(o.x);
      trace.push_back(o.y);
      trace.push_back(o.yaw);
      trace.push_back(o.v);
    }
  }
  return trace;
}

bool check_determinism(accept::Report& report) {
  bool ok = true;
  for (auto kind : {ScenarioKind::kRoundabout, ScenarioKind::kFiveWay}) {
    auto a = run_trajectory(kind, 42, 300);
    auto b = run_trajectory(kind, 42, 300);
    if (a != b) ok = false;  // exact double equality: bit-identical replay
  }
  report.note("2 scenarios x 300 ticks x 2 runs, exact floating-point comparison");
  return ok;
}

bool point_in_obb(double px, double py, const VehicleState& v) {
  double dx = px - v.x, dy = py - v.y;
  double c = std::cos(-v.yaw), s = std::sin(-v.yaw);
  double lx = c * dx - s * dy;
  double ly = s * dx + c * dy;
  return std::abs(lx) <= v.length / 2 && std::abs(ly) <= v.width / 2;
}

// 10^4-point oracle: a 50x100 grid over each footprint, tested against
// the other footprint.
bool oracle_overlap(const VehicleState& a, const VehicleState& b) {
  for (const auto& [src, dst] : {std::pair{&a, &b}, std::pair{&b, &a}}) {
    double c = std::cos(src->yaw), s = std::sin(src->yaw);
    for (int i = 0; i < 50; ++i)
      for (int j = 0; j < 100; ++j) {
        double lx = (-0.5 + (j + 0.5) / 100.0) * src->length;
        double ly = (-0.5 + (i + 0.5) / 50.0) * src->width;
        double px = src->x + c * lx - s * ly;
        double py = src->y + s * lx + c * ly;
        if (point_in_obb(px, py, *dst)) return true;
      }
  }
  return false;
}

bool check_collision_oracle(accept::Report& report) {
  std::mt19937 rng(20260825);
  std::uniform_real_distribution<double> pos(-6.0, 6.0);
  std::uniform_real_distribution<double> ang(0.0, 2 * M_PI);
  std::uniform_real_distribution<double> len(2.0, 6.0);
  std::uniform_real_distribution<double> wid(1.0, 3.0);
  int agree = 0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    VehicleState a, b;
    a.x = pos(rng), a.y = pos(rng), a.yaw = ang(rng);
    a.length = len(rng), a.width = wid(rng);
    b.x = pos(rng), b.y = pos(rng), b.yaw = ang(rng);
    b.length = len(rng), b.width = wid(rng);
    if (detect_collision(a, b) == oracle_overlap(a, b)) ++agree;
  }
  std::ostringstream os;
  os << agree << "/" << trials << " agreements with the sampling oracle";
  report.note(os.str());
  return agree >= 999;
}

bool check_red_lines(accept::Report& report) {
  WorldState w = spawn_scenario(ScenarioKind::kFiveWay, 10, 0.0, 99);
  int violations = 0;
  for (int t = 0; t < 1000; ++t) {
    // Pre-step snapshot of every vehicle's progress and the light phases.
    struct Snap {
      std::vector<int> path;
      int path_idx;
      double s;
    };
    std::vector<Snap> before;
    for (const auto& o : w.others) before.push_back({o.path, o.path_idx, o.s});
    Snap ego_before{w.ego.path, 0, w.ego_route_s};
    auto red_at = [&](int group) { return w.light_color(group) == LightColor::kRed; };
    std::vector<bool> red(static_cast<size_t>(w.graph.lights.n_groups));
    for (int g = 0; g < w.graph.lights.n_groups; ++g) red[g] = red_at(g);

    auto [accel, steer] = autopilot(w.ego, w);
    step(w, EgoAction{accel, steer});

    for (size_t i = 0; i < w.others.size(); ++i) {
      const auto& prev = before[i];
      const auto& now = w.others[i];
      if (now.path != prev.path) continue;  // respawned or re-routed
      if (prev.path_idx >= static_cast<int>(prev.path.size())) continue;
      const Lane& lane = w.graph.lane(prev.path[prev.path_idx]);
      if (lane.light_group < 0 || lane.stop_s < 0) continue;
      if (!red[lane.light_group]) continue;
      bool crossed = (now.path_idx > prev.path_idx) ||
                     (now.path_idx == prev.path_idx && prev.s < lane.stop_s &&
                      now.s >= lane.stop_s);
      if (prev.s < lane.stop_s && crossed) ++violations;
    }
    // The autopilot-driven ego obeys the same rule along its route.
    for (const auto& stop : w.route.stop_lines) {
      if (stop.light_group < 0) continue;
      if (ego_before.s < stop.route_s && w.ego_route_s >= stop.route_s &&
          red[stop.light_group])
        ++violations;
    }
  }
  std::ostringstream os;
  os << violations << " red-line crossings over 1000 ticks, 10 normal vehicles + ego";
  report.note(os.str());
  return violations == 0;
}

}  // namespace

int main() {
  accept::Report report;
  bool det = check_determinism(report);
  bool col = check_collision_oracle(report);
  bool red = check_red_lines(report);
  std::ostringstream os;
  os << "replays " << (det ? "ok" : "FAILED") << ", collision oracle "
     << (col ? "ok" : "FAILED") << ", red lines " << (red ? "ok" : "FAILED");
  report.line(5,
              "simulator soundness: bit-identical replays, collision oracle, red-line discipline",
              det && col && red, os.str());
  return report.exit_code();
}
