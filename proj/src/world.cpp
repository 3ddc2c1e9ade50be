#include "bevrl/world.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>

namespace bevrl {

namespace {

constexpr double kCruiseSpeed = 8.0;        // m/s target for scripted traffic
constexpr double kStopMargin = 2.0;         // stop this far before the line
constexpr double kComfortDecel = 3.0;       // continue through yellow below this
constexpr double kTimeGapNormal = 1.5;      // s
constexpr double kStandstillGap = 4.0;      // m

// Cubic Hermite blend between two poses; headings become tangents.
std::vector<Vec2> hermite(const Vec2& p0, double yaw0, const Vec2& p1, double yaw1,
                          int n_samples) {
  double d = (p1 - p0).norm();
  Vec2 t0 = Vec2{std::cos(yaw0), std::sin(yaw0)} * d;
  Vec2 t1 = Vec2{std::cos(yaw1), std::sin(yaw1)} * d;
  std::vector<Vec2> pts;
  pts.reserve(n_samples + 1);
  for (int i = 0; i <= n_samples; ++i) {
    double t = static_cast<double>(i) / n_samples;
    double h00 = 2 * t * t * t - 3 * t * t + 1;
    double h10 = t * t * t - 2 * t * t + t;
    double h01 = -2 * t * t * t + 3 * t * t;
    double h11 = t * t * t - t * t;
    pts.push_back(p0 * h00 + t0 * h10 + p1 * h01 + t1 * h11);
  }
  return pts;
}

std::vector<Vec2> arc(const Vec2& center, double radius, double a0, double a1,
                      int n_samples) {
  std::vector<Vec2> pts;
  pts.reserve(n_samples + 1);
  for (int i = 0; i <= n_samples; ++i) {
    double a = a0 + (a1 - a0) * static_cast<double>(i) / n_samples;
    pts.push_back({center.x + radius * std::cos(a), center.y + radius * std::sin(a)});
  }
  return pts;
}

std::vector<Vec2> straight(const Vec2& a, const Vec2& b, int n_samples) {
  std::vector<Vec2> pts;
  pts.reserve(n_samples + 1);
  for (int i = 0; i <= n_samples; ++i) {
    double t = static_cast<double>(i) / n_samples;
    pts.push_back(a + (b - a) * t);
  }
  return pts;
}

// Arclength of the nearest point on the polyline, searched within
// [hint - back, hint + fwd] so reprojection stays locally monotone.
double project_near(const std::vector<Vec2>& pts, const std::vector<double>& cum_s,
                    const Vec2& p, double hint, double back = 4.0, double fwd = 10.0) {
  double best_d = std::numeric_limits<double>::max();
  double best_s = hint;
  for (size_t i = 0; i + 1 < pts.size(); ++i) {
    if (cum_s[i + 1] < hint - back || cum_s[i] > hint + fwd) continue;
    Vec2 ab = pts[i + 1] - pts[i];
    double len2 = ab.dot(ab);
    double t = len2 > 1e-12 ? std::clamp((p - pts[i]).dot(ab) / len2, 0.0, 1.0) : 0.0;
    double d = (p - (pts[i] + ab * t)).norm();
    if (d < best_d) {
      best_d = d;
      best_s = cum_s[i] + t * std::sqrt(len2);
    }
  }
  return best_s;
}

}  // namespace

void Lane::finalize() {
  cum_s.resize(pts.size());
  double s = 0.0;
  for (size_t i = 0; i < pts.size(); ++i) {
    if (i > 0) s += (pts[i] - pts[i - 1]).norm();
    cum_s[i] = s;
  }
}

Vec2 Lane::point_at(double s) const {
  s = std::clamp(s, 0.0, length());
  auto it = std::lower_bound(cum_s.begin(), cum_s.end(), s);
  size_t i = it == cum_s.begin() ? 0 : (it - cum_s.begin()) - 1;
  if (i + 1 >= pts.size()) return pts.back();
  double seg = cum_s[i + 1] - cum_s[i];
  double t = seg > 1e-12 ? (s - cum_s[i]) / seg : 0.0;
  return pts[i] + (pts[i + 1] - pts[i]) * t;
}

double Lane::heading_at(double s) const {
  s = std::clamp(s, 0.0, length());
  auto it = std::lower_bound(cum_s.begin(), cum_s.end(), s);
  size_t i = it == cum_s.begin() ? 0 : (it - cum_s.begin()) - 1;
  i = std::min(i, pts.size() - 2);
  Vec2 d = pts[i + 1] - pts[i];
  return std::atan2(d.y, d.x);
}

const Lane& LaneGraph::lane(int id) const {
  if (id < 0 || id >= static_cast<int>(lanes.size()))
    throw std::out_of_range("lane id " + std::to_string(id));
  return lanes[id];
}

std::vector<int> LaneGraph::entry_lanes() const {
  std::vector<int> ids;
  for (const auto& l : lanes)
    if (l.is_entry) ids.push_back(l.id);
  return ids;
}

std::vector<int> LaneGraph::exit_lanes() const {
  std::vector<int> ids;
  for (const auto& l : lanes)
    if (l.is_exit) ids.push_back(l.id);
  return ids;
}

void LaneGraph::validate() const {
  for (size_t i = 0; i < lanes.size(); ++i) {
    const Lane& l = lanes[i];
    if (l.id != static_cast<int>(i))
      throw std::runtime_error(name + ": lane ids must be dense and ordered");
    if (l.pts.size() < 2) throw std::runtime_error(name + ": degenerate lane polyline");
    if (l.cum_s.size() != l.pts.size())
      throw std::runtime_error(name + ": lane not finalized");
    for (size_t k = 1; k < l.cum_s.size(); ++k)
      if (l.cum_s[k] <= l.cum_s[k - 1])
        throw std::runtime_error(name + ": polyline points not strictly ordered");
    if (l.width < 2.2) throw std::runtime_error(name + ": lane narrower than a vehicle");
    for (int sid : l.successors)
      if (sid < 0 || sid >= static_cast<int>(lanes.size()))
        throw std::runtime_error(name + ": successor id out of range");
    if (l.light_group >= lights.n_groups)
      throw std::runtime_error(name + ": light group out of range");
  }
}

// ---------------------------------------------------------------------------
// Built-in scenarios
// ---------------------------------------------------------------------------

LaneGraph make_roundabout() {
  LaneGraph g;
  g.name = "roundabout";
  const double r_out = 21.75, r_in = 18.25;
  const double approach_r = 45.0;
  const double merge_off = 0.12;   // rad before the approach angle
  const double diverge_off = 0.12;

  // Outer ring: per approach a short arc through the junction zone (A_i,
  // merge->diverge) and a long arc to the next merge (B_i).
  std::vector<int> arc_a(4), arc_b(4), inner(4), entries(4), exits(4);
  auto add_lane = [&](Lane l) {
    l.id = static_cast<int>(g.lanes.size());
    l.finalize();
    g.lanes.push_back(std::move(l));
    return g.lanes.back().id;
  };
  for (int i = 0; i < 4; ++i) {
    double th = i * M_PI / 2.0;
    Lane a;
    a.pts = arc({0, 0}, r_out, th - merge_off, th + diverge_off, 8);
    arc_a[i] = add_lane(std::move(a));
  }
  for (int i = 0; i < 4; ++i) {
    double th = i * M_PI / 2.0;
    double th_next = th + M_PI / 2.0;
    Lane b;
    b.pts = arc({0, 0}, r_out, th + diverge_off, th_next - merge_off, 24);
    arc_b[i] = add_lane(std::move(b));
  }
  for (int i = 0; i < 4; ++i) {
    double th = i * M_PI / 2.0;
    Lane c;
    c.pts = arc({0, 0}, r_in, th, th + M_PI / 2.0, 26);
    inner[i] = add_lane(std::move(c));
  }
  for (int i = 0; i < 4; ++i) {
    double th = i * M_PI / 2.0;
    // Entry: offset to the right of the approach direction (driving inward).
    Vec2 inward{-std::cos(th), -std::sin(th)};
    Vec2 right{inward.y, -inward.x};
    Vec2 start = Vec2{approach_r * std::cos(th), approach_r * std::sin(th)} + right * 1.75;
    Vec2 merge_pt{r_out * std::cos(th - merge_off), r_out * std::sin(th - merge_off)};
    double ring_heading = th - merge_off + M_PI / 2.0;  // CCW tangent
    Lane e;
    e.pts = hermite(start, std::atan2(inward.y, inward.x), merge_pt, ring_heading, 24);
    e.is_entry = true;
    entries[i] = add_lane(std::move(e));

    Vec2 diverge_pt{r_out * std::cos(th + diverge_off), r_out * std::sin(th + diverge_off)};
    Vec2 outward{std::cos(th), std::sin(th)};
    Vec2 end = Vec2{approach_r * std::cos(th), approach_r * std::sin(th)} - right * 1.75;
    Lane x;
    x.pts = hermite(diverge_pt, th + diverge_off + M_PI / 2.0, end,
                    std::atan2(outward.y, outward.x), 24);
    x.is_exit = true;
    x.spawnable = false;
    exits[i] = add_lane(std::move(x));
  }
  for (int i = 0; i < 4; ++i) {
    int next = (i + 1) % 4;
    g.lanes[arc_a[i]].successors = {arc_b[i], exits[i]};
    g.lanes[arc_b[i]].successors = {arc_a[next]};
    g.lanes[inner[i]].successors = {inner[next]};
    g.lanes[entries[i]].successors = {arc_a[i]};
  }
  g.validate();
  return g;
}

LaneGraph make_five_way() {
  LaneGraph g;
  g.name = "five_way";
  const int n = 5;
  const double far_r = 55.0, near_r = 14.0;
  g.lights.n_groups = n;
  auto add_lane = [&](Lane l) {
    l.id = static_cast<int>(g.lanes.size());
    l.finalize();
    g.lanes.push_back(std::move(l));
    return g.lanes.back().id;
  };
  std::vector<int> in_ids(n), out_ids(n);
  for (int i = 0; i < n; ++i) {
    double th = M_PI / 2.0 + i * 2.0 * M_PI / n;
    Vec2 dir{std::cos(th), std::sin(th)};        // outward
    Vec2 inward = dir * -1.0;
    Vec2 right{inward.y, -inward.x};             // right of inbound travel
    Lane in;
    in.pts = straight(dir * far_r + right * 1.75, dir * near_r + right * 1.75, 40);
    in.light_group = i;
    in.is_entry = true;
    in.finalize();
    in.stop_s = in.length() - 0.5;
    in_ids[i] = add_lane(std::move(in));

    Lane out;
    out.pts = straight(dir * near_r - right * 1.75, dir * far_r - right * 1.75, 40);
    out.is_exit = true;
    out_ids[i] = add_lane(std::move(out));
  }
  // Connectors through the junction: inbound i to every other outbound.
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const Lane& in = g.lanes[in_ids[i]];
      const Lane& out = g.lanes[out_ids[j]];
      Lane c;
      c.pts = hermite(in.pts.back(), in.heading_at(in.length()), out.pts.front(),
                      out.heading_at(0.0), 20);
      c.spawnable = false;
      int cid = add_lane(std::move(c));
      g.lanes[cid].successors = {out_ids[j]};
      g.lanes[in_ids[i]].successors.push_back(cid);
    }
  g.validate();
  return g;
}

LaneGraph make_scenario(ScenarioKind kind) {
  return kind == ScenarioKind::kRoundabout ? make_roundabout() : make_five_way();
}

// ---------------------------------------------------------------------------
// Routing
// ---------------------------------------------------------------------------

namespace {

// Appends lane centerline points in [s0, s1] to out (skipping duplicates).
void append_slice(const Lane& lane, double s0, double s1, std::vector<Vec2>& out) {
  s0 = std::clamp(s0, 0.0, lane.length());
  s1 = std::clamp(s1, 0.0, lane.length());
  auto push = [&](const Vec2& p) {
    if (out.empty() || (out.back() - p).norm() > 1e-9) out.push_back(p);
  };
  push(lane.point_at(s0));
  for (size_t i = 0; i < lane.pts.size(); ++i)
    if (lane.cum_s[i] > s0 + 1e-9 && lane.cum_s[i] < s1 - 1e-9) push(lane.pts[i]);
  push(lane.point_at(s1));
}

}  // namespace

Vec2 Route::point_at(double s) const {
  s = std::clamp(s, 0.0, length());
  auto it = std::lower_bound(cum_s.begin(), cum_s.end(), s);
  size_t i = it == cum_s.begin() ? 0 : (it - cum_s.begin()) - 1;
  if (i + 1 >= pts.size()) return pts.back();
  double seg = cum_s[i + 1] - cum_s[i];
  double t = seg > 1e-12 ? (s - cum_s[i]) / seg : 0.0;
  return pts[i] + (pts[i + 1] - pts[i]) * t;
}

Route plan_route(const LaneGraph& graph, int start_lane, double start_s,
                 int goal_lane, double goal_s) {
  const int n = static_cast<int>(graph.lanes.size());
  if (start_lane < 0 || start_lane >= n || goal_lane < 0 || goal_lane >= n)
    throw std::invalid_argument("plan_route: lane id out of range");

  std::vector<int> lane_seq;
  if (start_lane == goal_lane && goal_s >= start_s) {
    lane_seq = {start_lane};
  } else {
    // Dijkstra over lanes; dist[i] = cost from start to the *start* of lane i.
    std::vector<double> dist(n, std::numeric_limits<double>::max());
    std::vector<int> prev(n, -1);
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    double first_cost = graph.lanes[start_lane].length() - start_s;
    for (int sid : graph.lanes[start_lane].successors) {
      if (first_cost < dist[sid]) {
        dist[sid] = first_cost;
        prev[sid] = start_lane;
        pq.push({first_cost, sid});
      }
    }
    while (!pq.empty()) {
      auto [d, id] = pq.top();
      pq.pop();
      if (d > dist[id]) continue;
      if (id == goal_lane) break;
      double next_d = d + graph.lanes[id].length();
      for (int sid : graph.lanes[id].successors)
        if (next_d < dist[sid]) {
          dist[sid] = next_d;
          prev[sid] = id;
          pq.push({next_d, sid});
        }
    }
    if (dist[goal_lane] == std::numeric_limits<double>::max())
      throw std::runtime_error("plan_route: goal lane " + std::to_string(goal_lane) +
                               " unreachable from lane " + std::to_string(start_lane));
    for (int id = goal_lane; id != -1; id = prev[id]) lane_seq.push_back(id);
    std::reverse(lane_seq.begin(), lane_seq.end());
  }

  Route r;
  r.lane_ids = lane_seq;
  for (size_t k = 0; k < lane_seq.size(); ++k) {
    const Lane& lane = graph.lanes[lane_seq[k]];
    double s0 = k == 0 ? start_s : 0.0;
    double s1 = k + 1 == lane_seq.size() ? goal_s : lane.length();
    // route arclength corresponding to this lane's s = 0
    double base = (r.pts.empty() ? 0.0 : r.cum_s.back()) - s0;
    size_t before = r.pts.size();
    append_slice(lane, s0, s1, r.pts);
    // extend cum_s
    r.cum_s.resize(r.pts.size());
    for (size_t i = std::max<size_t>(before, 1); i < r.pts.size(); ++i)
      r.cum_s[i] = r.cum_s[i - 1] + (r.pts[i] - r.pts[i - 1]).norm();
    if (before == 0 && !r.pts.empty()) r.cum_s[0] = 0.0;
    if (lane.light_group >= 0 && lane.stop_s >= s0 && lane.stop_s <= s1)
      r.stop_lines.push_back({base + lane.stop_s, lane.light_group, lane.id});
  }
  if (r.pts.size() < 2) throw std::runtime_error("plan_route: empty route");
  return r;
}

double distance_to_route(const Vec2& pos, const std::vector<Vec2>& route_pts) {
  return point_polyline_distance(pos, route_pts);
}

bool detect_collision(const VehicleState& a, const VehicleState& b) {
  return obb_overlap(a.footprint(), b.footprint());
}

EgoAction decode_action(int index) {
  if (index < 0 || index >= kNumActions)
    throw std::out_of_range("action index " + std::to_string(index));
  static const double accel[3] = {-0.3, 0.0, 0.3};
  static const double steer[3] = {-0.15, 0.0, 0.15};
  return EgoAction{accel[index / 3], steer[index % 3]};
}

int encode_action(const EgoAction& a) {
  int ai = a.accel_cmd < -0.15 ? 0 : (a.accel_cmd > 0.15 ? 2 : 1);
  int si = a.steer_cmd < -0.075 ? 0 : (a.steer_cmd > 0.075 ? 2 : 1);
  return ai * 3 + si;
}

LightColor WorldState::light_color(int group) const {
  if (graph.lights.n_groups == 0 || group < 0) return LightColor::kGreen;
  double cycle = graph.lights.cycle();
  double t = std::fmod(light_time, cycle);
  double slot = graph.lights.green_s + graph.lights.yellow_s;
  int active = static_cast<int>(t / slot);
  if (active != group) return LightColor::kRed;
  double in_slot = t - active * slot;
  return in_slot < graph.lights.green_s ? LightColor::kGreen : LightColor::kYellow;
}

std::optional<RouteStop> WorldState::next_route_stop() const {
  for (const auto& st : route.stop_lines)
    if (st.route_s > ego_route_s) return st;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Spawning
// ---------------------------------------------------------------------------

namespace {

VehicleState place_on_lane(const Lane& lane, double s, double v) {
  VehicleState veh;
  Vec2 p = lane.point_at(s);
  veh.x = p.x;
  veh.y = p.y;
  veh.yaw = lane.heading_at(s);
  veh.v = v;
  veh.path = {lane.id};
  veh.path_idx = 0;
  veh.s = s;
  return veh;
}

bool spawn_clear(const VehicleState& cand, const WorldState& world) {
  // Inflated footprint keeps initial spacing so tick 0 is collision free.
  auto inflated = [](const VehicleState& v) {
    return Obb{v.x, v.y, v.yaw, v.length + 5.0, v.width + 0.6};
  };
  if (obb_overlap(inflated(cand), inflated(world.ego))) return false;
  for (const auto& o : world.others)
    if (obb_overlap(inflated(cand), inflated(o))) return false;
  return true;
}

// Keeps at least `horizon` meters of path ahead, appending random
// successors; returns false when the vehicle ran out of road.
bool extend_path(VehicleState& veh, const LaneGraph& graph, std::mt19937& rng,
                 double horizon = 60.0) {
  double remaining = graph.lane(veh.path[veh.path_idx]).length() - veh.s;
  for (size_t k = veh.path_idx + 1; k < veh.path.size(); ++k)
    remaining += graph.lane(veh.path[k]).length();
  while (remaining < horizon) {
    const Lane& last = graph.lane(veh.path.back());
    if (last.successors.empty()) return remaining > 1.0;
    int pick = 0;
    if (last.successors.size() > 1) {
      std::uniform_int_distribution<int> dist(0,
          static_cast<int>(last.successors.size()) - 1);
      pick = dist(rng);
    }
    veh.path.push_back(last.successors[pick]);
    remaining += graph.lane(veh.path.back()).length();
  }
  return true;
}

}  // namespace

WorldState spawn_scenario(ScenarioKind kind, int n_agents, double aggressive_fraction,
                          uint32_t seed) {
  if (n_agents < 0) throw std::invalid_argument("spawn_scenario: negative n_agents");
  if (aggressive_fraction < 0.0 || aggressive_fraction > 1.0)
    throw std::invalid_argument("spawn_scenario: aggressive_fraction outside [0,1]");
  WorldState world;
  world.graph = make_scenario(kind);
  world.rng.seed(seed);

  // Ego: random entry anchor, random exit goal.
  auto entries = world.graph.entry_lanes();
  auto exits = world.graph.exit_lanes();
  std::uniform_int_distribution<int> e_dist(0, static_cast<int>(entries.size()) - 1);
  int start_lane = entries[e_dist(world.rng)];
  std::uniform_real_distribution<double> s_dist(2.0, 10.0);
  double start_s = s_dist(world.rng);
  int goal_lane = start_lane;
  double goal_s = 0.0;
  for (int attempt = 0; attempt < 64; ++attempt) {
    std::uniform_int_distribution<int> x_dist(0, static_cast<int>(exits.size()) - 1);
    goal_lane = exits[x_dist(world.rng)];
    goal_s = world.graph.lane(goal_lane).length() - 3.0;
    try {
      world.route = plan_route(world.graph, start_lane, start_s, goal_lane, goal_s);
      break;
    } catch (const std::runtime_error&) {
      if (attempt == 63) throw;
    }
  }
  world.ego = place_on_lane(world.graph.lane(start_lane), start_s, 0.0);
  world.ego.path = world.route.lane_ids;
  world.ego_route_s = 0.0;

  // Background traffic.
  std::vector<int> spawn_lanes;
  for (const auto& l : world.graph.lanes)
    if (l.spawnable) spawn_lanes.push_back(l.id);
  for (int i = 0; i < n_agents; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < 300 && !placed; ++attempt) {
      std::uniform_int_distribution<int> l_dist(0,
          static_cast<int>(spawn_lanes.size()) - 1);
      const Lane& lane = world.graph.lane(spawn_lanes[l_dist(world.rng)]);
      if (lane.length() < 8.0) continue;
      std::uniform_real_distribution<double> pos_dist(2.0, lane.length() - 2.0);
      double s = pos_dist(world.rng);
      // Keep clear of controlled stop lines so a red phase is always stoppable.
      if (lane.stop_s >= 0.0 && s > lane.stop_s - 14.0) continue;
      std::uniform_real_distribution<double> v_dist(2.0, 6.0);
      VehicleState cand = place_on_lane(lane, s, v_dist(world.rng));
      if (!spawn_clear(cand, world)) continue;
      world.others.push_back(std::move(cand));
      placed = true;
    }
    if (!placed)
      throw std::runtime_error(
          "spawn_scenario: scenario capacity exceeded, placed " + std::to_string(i) +
          " of " + std::to_string(n_agents) + " agents");
  }

  // Exactly floor(fraction * n) aggressive vehicles.
  int n_aggressive = static_cast<int>(std::floor(aggressive_fraction * n_agents));
  std::vector<int> order(world.others.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::shuffle(order.begin(), order.end(), world.rng);
  for (int k = 0; k < n_aggressive; ++k)
    world.others[order[k]].behavior = Behavior::kAggressive;

  for (auto& veh : world.others) extend_path(veh, world.graph, world.rng);
  return world;
}

// ---------------------------------------------------------------------------
// Autopilot
// ---------------------------------------------------------------------------

std::pair<double, double> autopilot(const VehicleState& vehicle, const WorldState& world) {
  const LaneGraph& graph = world.graph;
  if (vehicle.path.empty() || vehicle.path_idx >= static_cast<int>(vehicle.path.size()))
    return {0.0, 0.0};

  // --- steering: pure pursuit on the lane path ---
  double lookahead = std::clamp(1.0 + 0.6 * vehicle.v, 3.0, 9.0);
  Vec2 target = vehicle.pos();
  {
    double remain = lookahead;
    double s = vehicle.s;
    bool found = false;
    for (size_t k = vehicle.path_idx; k < vehicle.path.size() && !found; ++k) {
      const Lane& lane = graph.lane(vehicle.path[k]);
      double avail = lane.length() - s;
      if (avail >= remain) {
        target = lane.point_at(s + remain);
        found = true;
      } else {
        remain -= avail;
        s = 0.0;
      }
    }
    if (!found) target = graph.lane(vehicle.path.back()).pts.back();
  }
  Vec2 rel = (target - vehicle.pos()).rotated(-vehicle.yaw);
  double steer_cmd = 0.0;
  double ld = rel.norm();
  if (ld > 0.5) {
    double alpha = std::atan2(rel.y, rel.x);
    double delta = std::atan2(2.0 * world.params.wheelbase * std::sin(alpha), ld);
    steer_cmd = std::clamp(delta / world.params.max_steer, -1.0, 1.0);
  }

  // --- longitudinal: cruise, leader gap, stop lines ---
  double accel = std::clamp(1.5 * (kCruiseSpeed - vehicle.v), -4.0, 3.0);

  // Nearest leader on the forward path within 45 m.
  auto consider = [&](const VehicleState& other, double& best_gap, double& leader_v) {
    if (&other == &vehicle) return;
    double base = -vehicle.s;  // arclength offset of the current lane start
    for (size_t k = vehicle.path_idx; k < vehicle.path.size(); ++k) {
      const Lane& lane = graph.lane(vehicle.path[k]);
      if (other.current_lane() == lane.id) {
        double d = base + other.s;
        if (k == static_cast<size_t>(vehicle.path_idx) && other.s <= vehicle.s) {
          base += lane.length() - vehicle.s;
          continue;
        }
        double gap = d - (vehicle.length + other.length) * 0.5;
        if (d > 0.1 && gap < best_gap) {
          best_gap = gap;
          leader_v = other.v;
        }
      }
      base += k == static_cast<size_t>(vehicle.path_idx) ? lane.length() - vehicle.s
                                                         : lane.length();
      if (base > 45.0) break;
    }
  };
  double best_gap = std::numeric_limits<double>::max(), leader_v = 0.0;
  consider(world.ego, best_gap, leader_v);
  for (const auto& o : world.others) consider(o, best_gap, leader_v);
  if (best_gap < 45.0) {
    double time_gap =
        vehicle.behavior == Behavior::kAggressive ? kTimeGapNormal * 0.5 : kTimeGapNormal;
    double desired = kStandstillGap + time_gap * vehicle.v;
    double follow = 1.2 * (best_gap - desired) + 1.0 * (leader_v - vehicle.v);
    accel = std::min(accel, follow);
  }

  // Stop lines: normal behavior treats yellow as red unless already inside
  // the comfortable-stop envelope.
  if (vehicle.behavior == Behavior::kNormal) {
    double base = -vehicle.s;
    for (size_t k = vehicle.path_idx; k < vehicle.path.size(); ++k) {
      const Lane& lane = graph.lane(vehicle.path[k]);
      if (lane.light_group >= 0 && lane.stop_s >= 0.0) {
        double d = base + lane.stop_s - vehicle.length * 0.5;
        if (d > 0.0 && d < 60.0) {
          LightColor color = world.light_color(lane.light_group);
          bool inside_envelope =
              d < vehicle.v * vehicle.v / (2.0 * kComfortDecel);
          if (color == LightColor::kRed ||
              (color == LightColor::kYellow && !inside_envelope)) {
            double stop_d = std::max(d - kStopMargin, 0.05);
            double brake = -vehicle.v * vehicle.v / (2.0 * stop_d);
            if (d < kStopMargin + 0.6) brake = -6.0;  // hold at the line
            accel = std::min(accel, std::max(brake, -world.params.max_accel));
          }
          break;  // only the nearest stop line matters
        }
      }
      base += k == static_cast<size_t>(vehicle.path_idx) ? lane.length() - vehicle.s
                                                         : lane.length();
      if (base > 60.0) break;
    }
  }

  double accel_cmd = std::clamp(accel / world.params.max_accel, -1.0, 0.3);
  return {accel_cmd, steer_cmd};
}

// ---------------------------------------------------------------------------
// Stepping
// ---------------------------------------------------------------------------

namespace {

void integrate(VehicleState& veh, double accel_cmd, double steer_cmd,
               const VehicleParams& p, double dt) {
  double a = accel_cmd * p.max_accel;
  double delta = steer_cmd * p.max_steer;
  veh.x += veh.v * std::cos(veh.yaw) * dt;
  veh.y += veh.v * std::sin(veh.yaw) * dt;
  veh.yaw = wrap_angle(veh.yaw + veh.v / p.wheelbase * std::tan(delta) * dt);
  veh.v = std::clamp(veh.v + a * dt, 0.0, p.max_speed);
}

// Reprojects the vehicle onto its lane path after integration.
void reproject(VehicleState& veh, const LaneGraph& graph) {
  while (veh.path_idx < static_cast<int>(veh.path.size())) {
    const Lane& lane = graph.lane(veh.path[veh.path_idx]);
    double s = project_near(lane.pts, lane.cum_s, veh.pos(), veh.s);
    if (s >= lane.length() - 0.3 && veh.path_idx + 1 < static_cast<int>(veh.path.size())) {
      ++veh.path_idx;
      veh.s = 0.0;
      continue;
    }
    veh.s = std::max(s, veh.s - 1.0);
    break;
  }
}

void push_history(VehicleState& veh, size_t max_len) {
  veh.history.push_back(Pose{veh.x, veh.y, veh.yaw});
  while (veh.history.size() > max_len) veh.history.pop_front();
}

}  // namespace

StepEvents step(WorldState& world, const EgoAction& ego_action) {
  const double dt = world.dt;
  const size_t hist_len = static_cast<size_t>(std::ceil(kHistorySeconds / dt)) + 1;

  // Path upkeep in fixed order so rng use is reproducible.
  std::vector<int> respawn;
  for (size_t i = 0; i < world.others.size(); ++i) {
    VehicleState& veh = world.others[i];
    if (!extend_path(veh, world.graph, world.rng)) {
      const Lane& last = world.graph.lane(veh.path.back());
      double remaining = last.length() - veh.s;
      if (veh.path_idx + 1 == static_cast<int>(veh.path.size()) && remaining < 2.0)
        respawn.push_back(static_cast<int>(i));
    }
  }
  for (int idx : respawn) {
    VehicleState& veh = world.others[idx];
    std::vector<int> spawn_lanes;
    for (const auto& l : world.graph.lanes)
      if (l.spawnable) spawn_lanes.push_back(l.id);
    for (int attempt = 0; attempt < 100; ++attempt) {
      std::uniform_int_distribution<int> l_dist(0,
          static_cast<int>(spawn_lanes.size()) - 1);
      const Lane& lane = world.graph.lane(spawn_lanes[l_dist(world.rng)]);
      if (lane.length() < 8.0) continue;
      std::uniform_real_distribution<double> pos_dist(2.0, lane.length() - 2.0);
      double s = pos_dist(world.rng);
      if (lane.stop_s >= 0.0 && s > lane.stop_s - 14.0) continue;
      VehicleState cand = place_on_lane(lane, s, 4.0);
      cand.behavior = veh.behavior;
      if (!spawn_clear(cand, world)) continue;
      cand.history.clear();
      veh = std::move(cand);
      extend_path(veh, world.graph, world.rng);
      break;
    }
  }

  // Commands from the pre-step state, then integrate everyone.
  std::vector<std::pair<double, double>> cmds(world.others.size());
  for (size_t i = 0; i < world.others.size(); ++i)
    cmds[i] = autopilot(world.others[i], world);
  for (size_t i = 0; i < world.others.size(); ++i)
    integrate(world.others[i], cmds[i].first, cmds[i].second, world.params, dt);
  integrate(world.ego, ego_action.accel_cmd, ego_action.steer_cmd, world.params, dt);

  world.light_time += dt;
  ++world.tick;

  for (auto& veh : world.others) reproject(veh, world.graph);
  reproject(world.ego, world.graph);
  double prev_route_s = world.ego_route_s;
  world.ego_route_s = project_near(world.route.pts, world.route.cum_s, world.ego.pos(),
                                   world.ego_route_s);
  world.ego_route_s = std::max(world.ego_route_s, prev_route_s);

  for (auto& veh : world.others) push_history(veh, hist_len);
  push_history(world.ego, hist_len);

  // Events.
  StepEvents ev;
  ev.speed = world.ego.v;
  double delta = ego_action.steer_cmd * world.params.max_steer;
  ev.lateral_accel =
      world.ego.v * world.ego.v * std::tan(delta) / world.params.wheelbase;
  for (const auto& o : world.others)
    if (detect_collision(world.ego, o)) {
      ev.collision = true;
      break;
    }
  double route_dist = distance_to_route(world.ego.pos(), world.route.pts);
  ev.out_of_lane = route_dist > 2.5;
  for (const auto& st : world.route.stop_lines)
    if (prev_route_s < st.route_s && world.ego_route_s >= st.route_s && route_dist < 3.0 &&
        world.light_color(st.light_group) == LightColor::kRed)
      ev.red_light_violation = true;
  if (!ev.collision) {
    double goal_dist = (world.ego.pos() - world.route.pts.back()).norm();
    ev.reached_goal = goal_dist < 4.0 && world.ego_route_s > world.route.length() - 6.0;
  }
  return ev;
}

int curriculum_agents(int episode_index, const std::vector<CurriculumStage>& schedule) {
  if (schedule.empty()) return 0;
  for (size_t i = 1; i < schedule.size(); ++i)
    if (schedule[i].start_episode < schedule[i - 1].start_episode ||
        schedule[i].n_agents < schedule[i - 1].n_agents)
      throw std::invalid_argument("curriculum_agents: schedule must be monotone");
  int n = schedule.front().n_agents;
  for (const auto& st : schedule)
    if (episode_index >= st.start_episode) n = st.n_agents;
  return n;
}

std::vector<CurriculumStage> default_curriculum(int max_agents) {
  return {
      {0, 0},
      {50, std::max(1, max_agents / 6)},
      {100, std::max(1, max_agents / 3)},
      {150, max_agents / 2},
      {200, 2 * max_agents / 3},
      {250, max_agents},
  };
}

}  // namespace bevrl
