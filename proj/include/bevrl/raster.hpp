#pragma once

// Renders WorldState into the 11-channel ego-centric input tensor and the
// three supervised targets (RGB scene, ego plan mask, others' prediction
// mask).

#include <cstdint>
#include <string>
#include <vector>

#include "bevrl/world.hpp"

namespace bevrl {

enum BevChannel : int {
  kChRoad = 0,
  kChLaneLines = 1,
  kChLaneCenters = 2,
  kChRoute = 3,
  kChOthersNow = 4,
  kChOthersHistory = 5,
  kChEgoNow = 6,
  kChEgoHistory = 7,
  kChLightGreen = 8,
  kChLightYellow = 9,
  kChLightRed = 10,
};

inline constexpr int kBevChannels = 11;

struct RasterSpec {
  int height = 64;
  int width = 64;
  double front = 37.5;   // meters ahead of the ego
  double rear = 12.5;    // meters behind
  double side = 25.0;    // meters left and right

  double m_per_px_row() const { return (front + rear) / height; }
  double m_per_px_col() const { return 2.0 * side / width; }
  int ego_row() const { return static_cast<int>(height * front / (front + rear)); }
  int ego_col() const { return width / 2; }
};

struct Mask {
  int height = 0, width = 0;
  std::vector<uint8_t> data;  // row-major, values in {0,1}

  Mask() = default;
  Mask(int h, int w) : height(h), width(w), data(static_cast<size_t>(h) * w, 0) {}
  uint8_t& at(int r, int c) { return data[static_cast<size_t>(r) * width + c]; }
  uint8_t at(int r, int c) const { return data[static_cast<size_t>(r) * width + c]; }
  int64_t count() const {
    int64_t n = 0;
    for (uint8_t v : data) n += v;
    return n;
  }
};

struct BevFrame {
  int height = 0, width = 0;
  std::vector<uint8_t> data;  // [channel][row][col], values in {0,1}

  BevFrame() = default;
  BevFrame(int h, int w)
      : height(h), width(w), data(static_cast<size_t>(kBevChannels) * h * w, 0) {}
  uint8_t& at(int ch, int r, int c) {
    return data[(static_cast<size_t>(ch) * height + r) * width + c];
  }
  uint8_t at(int ch, int r, int c) const {
    return data[(static_cast<size_t>(ch) * height + r) * width + c];
  }
  int64_t channel_count(int ch) const {
    int64_t n = 0;
    for (int64_t i = 0; i < static_cast<int64_t>(height) * width; ++i)
      n += data[static_cast<size_t>(ch) * height * width + i];
    return n;
  }
  std::vector<float> to_floats() const {
    return std::vector<float>(data.begin(), data.end());
  }
};

struct RgbImage {
  int height = 0, width = 0;
  std::vector<float> data;  // [3][row][col] in [0,1]

  RgbImage() = default;
  RgbImage(int h, int w) : height(h), width(w), data(static_cast<size_t>(3) * h * w, 0) {}
  float& at(int ch, int r, int c) {
    return data[(static_cast<size_t>(ch) * height + r) * width + c];
  }
  float at(int ch, int r, int c) const {
    return data[(static_cast<size_t>(ch) * height + r) * width + c];
  }
};

struct TargetBundle {
  RgbImage rgb;
  Mask plan;
  Mask pred;
};

// Footprint pose with extents, used for the 2 s future-mask targets.
struct FootprintPose {
  double x = 0, y = 0, yaw = 0;
  double length = 4.5, width = 2.0;
};

struct TargetInput {
  // Poses sampled every kFutureStride over [0, kFutureSeconds], current
  // pose first. others_future holds all agents' samples flattened.
  std::vector<FootprintPose> ego_future;
  std::vector<FootprintPose> others_future;
};

BevFrame rasterize_input(const WorldState& world, const RasterSpec& spec);
TargetBundle rasterize_targets(const WorldState& world, const TargetInput& future,
                               const RasterSpec& spec);
RgbImage render_rgb(const WorldState& world, const RasterSpec& spec);

// Debug exports.
void write_pgm(const std::string& path, const Mask& mask);
void write_ppm(const std::string& path, const RgbImage& img);
void write_channel_montage(const std::string& path, const BevFrame& frame);

}  // namespace bevrl
