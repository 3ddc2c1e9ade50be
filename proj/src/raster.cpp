#include "bevrl/raster.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace bevrl {

namespace {

// Ego-frame rasterizer. World points are mapped into the ego frame
// (forward up) and then to pixel coordinates; a pixel is set iff its
// center lies inside the polygon (no anti-aliasing).
class Painter {
 public:
  Painter(const RasterSpec& spec, const Pose& ego) : spec_(spec), ego_(ego) {}

  // (row, col) as continuous coordinates of a world point.
  std::pair<double, double> to_rc(const Vec2& p) const {
    double dx = p.x - ego_.x, dy = p.y - ego_.y;
    double c = std::cos(ego_.yaw), s = std::sin(ego_.yaw);
    double fwd = dx * c + dy * s;
    double left = -dx * s + dy * c;
    double row = spec_.ego_row() - fwd / spec_.m_per_px_row();
    double col = spec_.ego_col() - left / spec_.m_per_px_col();
    return {row, col};
  }

  // Fills a convex world-space polygon into a row-major plane.
  void fill_convex(const std::vector<Vec2>& poly, uint8_t* plane) const {
    size_t n = poly.size();
    if (n < 3) return;
    std::vector<std::pair<double, double>> rc(n);
    double rmin = 1e300, rmax = -1e300, cmin = 1e300, cmax = -1e300;
    for (size_t i = 0; i < n; ++i) {
      rc[i] = to_rc(poly[i]);
      rmin = std::min(rmin, rc[i].first);
      rmax = std::max(rmax, rc[i].first);
      cmin = std::min(cmin, rc[i].second);
      cmax = std::max(cmax, rc[i].second);
    }
    int r0 = std::max(0, static_cast<int>(std::floor(rmin)));
    int r1 = std::min(spec_.height - 1, static_cast<int>(std::ceil(rmax)));
    int c0 = std::max(0, static_cast<int>(std::floor(cmin)));
    int c1 = std::min(spec_.width - 1, static_cast<int>(std::ceil(cmax)));
    for (int r = r0; r <= r1; ++r)
      for (int c = c0; c <= c1; ++c) {
        double pr = r, pc = c;  // pixel center in continuous rc space
        bool pos = false, neg = false;
        for (size_t i = 0; i < n; ++i) {
          size_t j = (i + 1) % n;
          double cross = (rc[j].first - rc[i].first) * (pc - rc[i].second) -
                         (rc[j].second - rc[i].second) * (pr - rc[i].first);
          if (cross > 0) pos = true;
          if (cross < 0) neg = true;
        }
        if (!(pos && neg)) plane[static_cast<size_t>(r) * spec_.width + c] = 1;
      }
  }

  void fill_obb(const Obb& box, uint8_t* plane) const {
    auto corners = box.corners();
    fill_convex({corners.begin(), corners.end()}, plane);
  }

  // Band of the given full width along a polyline.
  void fill_band(const std::vector<Vec2>& pts, double width, uint8_t* plane) const {
    for (size_t i = 0; i + 1 < pts.size(); ++i) {
      Vec2 d = pts[i + 1] - pts[i];
      if (d.norm() < 1e-9) continue;
      Vec2 u = d.normalized();
      Vec2 nrm{-u.y, u.x};
      Vec2 half = nrm * (width * 0.5);
      // extend slightly along the segment to avoid gaps at joints
      Vec2 a = pts[i] - u * (width * 0.25);
      Vec2 b = pts[i + 1] + u * (width * 0.25);
      fill_convex({a + half, b + half, b - half, a - half}, plane);
    }
  }

  // Offset polyline at +/- offset from the centerline.
  std::vector<Vec2> offset_polyline(const std::vector<Vec2>& pts, double offset) const {
    std::vector<Vec2> out;
    out.reserve(pts.size());
    for (size_t i = 0; i < pts.size(); ++i) {
      Vec2 d = i + 1 < pts.size() ? pts[i + 1] - pts[i] : pts[i] - pts[i - 1];
      Vec2 u = d.normalized();
      Vec2 nrm{-u.y, u.x};
      out.push_back(pts[i] + nrm * offset);
    }
    return out;
  }

 private:
  RasterSpec spec_;
  Pose ego_;
};

constexpr double kLineWidth = 0.4;       // lane line / center band, meters
constexpr double kRouteWidth = 2.0;      // route band
constexpr double kStopBandLength = 1.0;  // light band along the lane

// History poses at kHistoryStride intervals, current included, most
// recent first. Missing history is simply absent (zero padding).
std::vector<Pose> history_samples(const std::deque<Pose>& history, double dt) {
  std::vector<Pose> out;
  if (history.empty()) return out;
  int stride = std::max(1, static_cast<int>(std::lround(kHistoryStride / dt)));
  int n = static_cast<int>(std::lround(kHistorySeconds / kHistoryStride));
  for (int k = 0; k <= n; ++k) {
    int idx = static_cast<int>(history.size()) - 1 - k * stride;
    if (idx < 0) break;
    out.push_back(history[idx]);
  }
  return out;
}

void paint_map(const WorldState& world, const Painter& painter, uint8_t* road,
               uint8_t* lines, uint8_t* centers) {
  for (const auto& lane : world.graph.lanes) {
    if (road) painter.fill_band(lane.pts, lane.width, road);
    if (lines) {
      painter.fill_band(painter.offset_polyline(lane.pts, lane.width * 0.5), kLineWidth,
                        lines);
      painter.fill_band(painter.offset_polyline(lane.pts, -lane.width * 0.5), kLineWidth,
                        lines);
    }
    if (centers) painter.fill_band(lane.pts, kLineWidth, centers);
  }
}

// Stop-line band (lane width x 1 m) of the ego's next controlled approach,
// or none. Returns the active color channel offset (0 green, 1 yellow,
// 2 red) and fills the band into `plane`.
int paint_light_band(const WorldState& world, const Painter& painter,
                     uint8_t* planes[3]) {
  auto stop = world.next_route_stop();
  if (!stop) return -1;
  const Lane& lane = world.graph.lane(stop->lane_id);
  LightColor color = world.light_color(stop->light_group);
  int idx = color == LightColor::kGreen ? 0 : (color == LightColor::kYellow ? 1 : 2);
  Vec2 center = lane.point_at(lane.stop_s);
  double heading = lane.heading_at(lane.stop_s);
  Obb band{center.x, center.y, heading, kStopBandLength, lane.width};
  painter.fill_obb(band, planes[idx]);
  return idx;
}

}  // namespace

BevFrame rasterize_input(const WorldState& world, const RasterSpec& spec) {
  BevFrame frame(spec.height, spec.width);
  Pose ego_pose{world.ego.x, world.ego.y, world.ego.yaw};
  Painter painter(spec, ego_pose);
  auto plane = [&](int ch) {
    return frame.data.data() + static_cast<size_t>(ch) * spec.height * spec.width;
  };

  paint_map(world, painter, plane(kChRoad), plane(kChLaneLines), plane(kChLaneCenters));
  painter.fill_band(world.route.pts, kRouteWidth, plane(kChRoute));

  for (const auto& o : world.others) {
    painter.fill_obb(o.footprint(), plane(kChOthersNow));
    auto hist = history_samples(o.history, world.dt);
    if (hist.empty()) hist.push_back(Pose{o.x, o.y, o.yaw});
    for (const auto& p : hist)
      painter.fill_obb(Obb{p.x, p.y, p.yaw, o.length, o.width}, plane(kChOthersHistory));
  }

  painter.fill_obb(world.ego.footprint(), plane(kChEgoNow));
  auto ego_hist = history_samples(world.ego.history, world.dt);
  if (ego_hist.empty()) ego_hist.push_back(ego_pose);
  for (const auto& p : ego_hist)
    painter.fill_obb(Obb{p.x, p.y, p.yaw, world.ego.length, world.ego.width},
                     plane(kChEgoHistory));

  uint8_t* light_planes[3] = {plane(kChLightGreen), plane(kChLightYellow),
                              plane(kChLightRed)};
  paint_light_band(world, painter, light_planes);
  return frame;
}

TargetBundle rasterize_targets(const WorldState& world, const TargetInput& future,
                               const RasterSpec& spec) {
  int expected = static_cast<int>(std::lround(kFutureSeconds / kFutureStride)) + 1;
  if (static_cast<int>(future.ego_future.size()) < expected)
    throw std::invalid_argument(
        "rasterize_targets: need " + std::to_string(expected) +
        " ego future poses, got " + std::to_string(future.ego_future.size()));
  TargetBundle out;
  out.rgb = render_rgb(world, spec);
  out.plan = Mask(spec.height, spec.width);
  out.pred = Mask(spec.height, spec.width);
  Painter painter(spec, Pose{world.ego.x, world.ego.y, world.ego.yaw});
  for (const auto& p : future.ego_future)
    painter.fill_obb(Obb{p.x, p.y, p.yaw, p.length, p.width}, out.plan.data.data());
  for (const auto& p : future.others_future)
    painter.fill_obb(Obb{p.x, p.y, p.yaw, p.length, p.width}, out.pred.data.data());
  return out;
}

RgbImage render_rgb(const WorldState& world, const RasterSpec& spec) {
  struct Color {
    float r, g, b;
  };
  const Color road{0.5f, 0.5f, 0.5f};
  const Color line{1.0f, 1.0f, 1.0f};
  const Color center{0.7f, 0.7f, 0.7f};
  const Color route{0.0f, 0.8f, 0.0f};
  const Color other{0.15f, 0.3f, 1.0f};
  const Color ego{1.0f, 0.1f, 0.1f};
  const Color lights[3] = {{0.0f, 1.0f, 0.2f}, {1.0f, 0.9f, 0.0f}, {1.0f, 0.0f, 0.0f}};

  Painter painter(spec, Pose{world.ego.x, world.ego.y, world.ego.yaw});
  const size_t px = static_cast<size_t>(spec.height) * spec.width;
  RgbImage img(spec.height, spec.width);
  std::vector<uint8_t> layer(px, 0);
  auto blit = [&](const Color& col) {
    for (size_t i = 0; i < px; ++i)
      if (layer[i]) {
        img.data[i] = col.r;
        img.data[px + i] = col.g;
        img.data[2 * px + i] = col.b;
      }
    std::fill(layer.begin(), layer.end(), 0);
  };

  paint_map(world, painter, layer.data(), nullptr, nullptr);
  blit(road);
  for (const auto& lane : world.graph.lanes) {
    painter.fill_band(painter.offset_polyline(lane.pts, lane.width * 0.5), kLineWidth,
                      layer.data());
    painter.fill_band(painter.offset_polyline(lane.pts, -lane.width * 0.5), kLineWidth,
                      layer.data());
  }
  blit(line);
  paint_map(world, painter, nullptr, nullptr, layer.data());
  blit(center);
  painter.fill_band(world.route.pts, kRouteWidth, layer.data());
  blit(route);
  {
    // One shared plane; the returned index picks the color.
    std::vector<uint8_t> scratch(px, 0);
    uint8_t* real[3] = {scratch.data(), scratch.data(), scratch.data()};
    int idx = paint_light_band(world, painter, real);
    if (idx >= 0) {
      layer = scratch;
      blit(lights[idx]);
    }
  }
  for (const auto& o : world.others) painter.fill_obb(o.footprint(), layer.data());
  blit(other);
  painter.fill_obb(world.ego.footprint(), layer.data());
  blit(ego);
  return img;
}

void write_pgm(const std::string& path, const Mask& mask) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "P5\n" << mask.width << " " << mask.height << "\n255\n";
  for (uint8_t v : mask.data) f.put(static_cast<char>(v ? 255 : 0));
}

void write_ppm(const std::string& path, const RgbImage& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "P6\n" << img.width << " " << img.height << "\n255\n";
  const size_t px = static_cast<size_t>(img.height) * img.width;
  for (size_t i = 0; i < px; ++i)
    for (int ch = 0; ch < 3; ++ch) {
      float v = std::clamp(img.data[ch * px + i], 0.0f, 1.0f);
      f.put(static_cast<char>(std::lround(v * 255.0f)));
    }
}

void write_channel_montage(const std::string& path, const BevFrame& frame) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  const int gap = 2;
  int w = frame.width * kBevChannels + gap * (kBevChannels - 1);
  f << "P5\n" << w << " " << frame.height << "\n255\n";
  for (int r = 0; r < frame.height; ++r)
    for (int ch = 0; ch < kBevChannels; ++ch) {
      for (int c = 0; c < frame.width; ++c)
        f.put(static_cast<char>(frame.at(ch, r, c) ? 255 : 0));
      if (ch + 1 < kBevChannels)
        for (int g = 0; g < gap; ++g) f.put(static_cast<char>(128));
    }
}

}  // namespace bevrl
