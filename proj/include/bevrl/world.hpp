#pragma once

// Deterministic 2D traffic micro-simulation: lane graphs for the two
// built-in scenarios, scripted autopilot traffic, traffic lights, ego
// control and per-tick event detection.

#include <cstdint>
#include <deque>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "bevrl/geometry.hpp"

namespace bevrl {

struct Lane {
  int id = 0;
  std::vector<Vec2> pts;        // centerline, ordered along arclength
  std::vector<double> cum_s;    // cumulative arclength per point
  double width = 3.5;
  std::vector<int> successors;
  int light_group = -1;         // -1: uncontrolled
  double stop_s = -1.0;         // arclength of the stop line, if controlled
  bool spawnable = true;
  bool is_entry = false;        // ego start anchor
  bool is_exit = false;         // ego goal anchor

  double length() const { return cum_s.empty() ? 0.0 : cum_s.back(); }
  void finalize();              // fills cum_s
  Vec2 point_at(double s) const;
  double heading_at(double s) const;
};

struct LightTiming {
  int n_groups = 0;
  double green_s = 6.0;
  double yellow_s = 2.0;

  double cycle() const { return n_groups * (green_s + yellow_s); }
};

enum class LightColor { kGreen, kYellow, kRed };

struct LaneGraph {
  std::string name;
  std::vector<Lane> lanes;
  LightTiming lights;

  const Lane& lane(int id) const;
  std::vector<int> entry_lanes() const;
  std::vector<int> exit_lanes() const;
  void validate() const;
};

enum class ScenarioKind { kRoundabout, kFiveWay };

LaneGraph make_roundabout();
LaneGraph make_five_way();
LaneGraph make_scenario(ScenarioKind kind);

struct RouteStop {
  double route_s = 0.0;
  int light_group = -1;
  int lane_id = -1;
};

struct Route {
  std::vector<int> lane_ids;
  std::vector<Vec2> pts;
  std::vector<double> cum_s;
  std::vector<RouteStop> stop_lines;

  double length() const { return cum_s.empty() ? 0.0 : cum_s.back(); }
  Vec2 point_at(double s) const;
};

// Shortest-arclength path over lane centerlines between two on-lane poses.
Route plan_route(const LaneGraph& graph, int start_lane, double start_s,
                 int goal_lane, double goal_s);

double distance_to_route(const Vec2& pos, const std::vector<Vec2>& route_pts);

enum class Behavior { kNormal, kAggressive };

struct Pose {
  double x = 0, y = 0, yaw = 0;
};

struct VehicleState {
  double x = 0, y = 0, yaw = 0;
  double v = 0;                     // m/s, never negative
  double length = 4.5, width = 2.0;
  Behavior behavior = Behavior::kNormal;
  std::vector<int> path;            // lane id sequence being followed
  int path_idx = 0;
  double s = 0;                     // arclength on path[path_idx]
  std::deque<Pose> history;         // most recent last

  Vec2 pos() const { return {x, y}; }
  Obb footprint() const { return Obb{x, y, yaw, length, width}; }
  int current_lane() const {
    return path_idx < static_cast<int>(path.size()) ? path[path_idx] : -1;
  }
};

bool detect_collision(const VehicleState& a, const VehicleState& b);

struct EgoAction {
  double accel_cmd = 0.0;   // one of {-0.3, 0, 0.3}
  double steer_cmd = 0.0;   // one of {-0.15, 0, 0.15}
};

// 3x3 discrete action table in row-major (accel, steer) order.
inline constexpr int kNumActions = 9;
EgoAction decode_action(int index);
int encode_action(const EgoAction& a);

struct StepEvents {
  bool collision = false;
  bool out_of_lane = false;         // distance to route > 2.5 m
  bool red_light_violation = false;
  bool reached_goal = false;
  double lateral_accel = 0.0;       // m/s^2
  double speed = 0.0;               // m/s
};

struct VehicleParams {
  double wheelbase = 2.8;
  double max_speed = 15.0;          // m/s
  double max_accel = 10.0;          // m/s^2 at |accel_cmd| = 1
  double max_steer = 0.6108652381980153;  // 35 deg at |steer_cmd| = 1
};

struct WorldState {
  int64_t tick = 0;
  double dt = 0.1;
  LaneGraph graph;
  VehicleState ego;
  std::vector<VehicleState> others;
  Route route;                      // ego's planned route
  double ego_route_s = 0.0;         // ego progress along the route
  double light_time = 0.0;
  std::mt19937 rng;
  VehicleParams params;

  LightColor light_color(int group) const;
  // Index of the next stop line ahead of the ego on its route, if any.
  std::optional<RouteStop> next_route_stop() const;
};

inline constexpr double kHistorySeconds = 1.5;
inline constexpr double kHistoryStride = 0.5;
inline constexpr double kFutureSeconds = 2.0;
inline constexpr double kFutureStride = 0.25;

WorldState spawn_scenario(ScenarioKind kind, int n_agents, double aggressive_fraction,
                          uint32_t seed);

// Continuous normalized (accel_cmd, steer_cmd) for a scripted vehicle.
// Pure-pursuit steering plus gap keeping; stops at red stop lines unless
// the behavior is aggressive.
std::pair<double, double> autopilot(const VehicleState& vehicle, const WorldState& world);

StepEvents step(WorldState& world, const EgoAction& ego_action);

struct CurriculumStage {
  int start_episode = 0;
  int n_agents = 0;
};

// Piecewise-constant, non-decreasing agent count over training episodes.
int curriculum_agents(int episode_index, const std::vector<CurriculumStage>& schedule);
std::vector<CurriculumStage> default_curriculum(int max_agents = 30);

}  // namespace bevrl
