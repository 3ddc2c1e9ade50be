#pragma once

// On-disk dataset of rasterized frames plus self-supervised targets
// ("BEVD" format), autopilot-driven collection, and nested subsampling
// splits for the data-efficiency study.

#include <cstdint>
#include <string>
#include <vector>

#include "bevrl/raster.hpp"
#include "bevrl/world.hpp"

namespace bevrl {

struct Record {
  uint32_t frame_id = 0;
  uint16_t scenario_id = 0;  // 0 = roundabout, 1 = five-way
  float ego_speed = 0.0f;    // m/s
  BevFrame bev;
  Mask plan;
  Mask pred;
  std::vector<uint8_t> rgb;  // [3][H][W], quantized to bytes

  bool operator==(const Record& o) const {
    return frame_id == o.frame_id && scenario_id == o.scenario_id &&
           ego_speed == o.ego_speed && bev.data == o.bev.data &&
           plan.data == o.plan.data && pred.data == o.pred.data && rgb == o.rgb;
  }
};

std::vector<uint8_t> quantize_rgb(const RgbImage& img);

struct DatasetHeader {
  uint16_t version = 1;
  uint16_t height = 0;
  uint16_t width = 0;
  uint16_t channels = kBevChannels;
  uint16_t dt_ms = 100;
  uint32_t count = 0;

  size_t record_bytes() const;
};

// In-memory handle over a fully loaded file; records decode on demand.
class DatasetFile {
 public:
  static DatasetFile open(const std::string& path);
  static void write(const std::string& path, const DatasetHeader& header,
                    const std::vector<Record>& records);

  const DatasetHeader& header() const { return header_; }
  uint32_t count() const { return header_.count; }
  Record read_record(uint32_t index) const;

 private:
  DatasetHeader header_;
  std::vector<uint8_t> payload_;  // record blob, header stripped
};

struct CollectConfig {
  ScenarioKind kind = ScenarioKind::kRoundabout;
  int n_frames = 2000;
  int n_agents = 12;
  double aggressive_fraction = 0.2;
  uint32_t seed = 1;
  RasterSpec spec;
};

std::vector<Record> collect(const CollectConfig& cfg);

// Concatenates record blobs; headers must agree except for count.
void merge_datasets(const std::vector<std::string>& inputs, const std::string& output);

// Deterministic nested index subsets: quarter ⊂ half ⊂ full.
std::vector<uint32_t> make_split(uint32_t count, double fraction, uint32_t seed);

struct DatasetStats {
  uint32_t count = 0;
  double fill_rate[kBevChannels] = {};  // mean fraction of set pixels
  double plan_fill = 0.0;
  double pred_fill = 0.0;
  double mean_speed = 0.0;
};

DatasetStats compute_stats(const DatasetFile& file);

}  // namespace bevrl
