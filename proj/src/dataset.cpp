#include "bevrl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <stdexcept>

#include "bevrl/nn.hpp"  // ckpt byte helpers + read_file/write_file

namespace bevrl {

namespace ckpt = tc::ckpt;
using tc::read_file;
using tc::write_file;

namespace {

constexpr char kMagic[4] = {'B', 'E', 'V', 'D'};

void put_mask_bytes(std::string& out, const std::vector<uint8_t>& bits) {
  for (uint8_t v : bits) out.push_back(static_cast<char>(v ? 255 : 0));
}

void encode_record(std::string& out, const Record& r) {
  ckpt::put_u32(out, r.frame_id);
  ckpt::put_u16(out, r.scenario_id);
  ckpt::put_f32(out, r.ego_speed);
  put_mask_bytes(out, r.bev.data);
  out.append(reinterpret_cast<const char*>(r.rgb.data()), r.rgb.size());
  put_mask_bytes(out, r.plan.data);
  put_mask_bytes(out, r.pred.data);
}

DatasetHeader read_header(ckpt::Reader& r) {
  std::string magic = r.bytes(4);
  if (magic != std::string(kMagic, 4)) r.fail("bad magic, expected BEVD");
  DatasetHeader h;
  h.version = r.u16();
  if (h.version != 1) r.fail("unsupported version " + std::to_string(h.version));
  h.height = r.u16();
  h.width = r.u16();
  h.channels = r.u16();
  if (h.channels != kBevChannels) r.fail("unexpected channel count");
  h.dt_ms = r.u16();
  h.count = r.u32();
  return h;
}

std::string header_bytes(const DatasetHeader& h) {
  std::string out(kMagic, 4);
  ckpt::put_u16(out, h.version);
  ckpt::put_u16(out, h.height);
  ckpt::put_u16(out, h.width);
  ckpt::put_u16(out, h.channels);
  ckpt::put_u16(out, h.dt_ms);
  ckpt::put_u32(out, h.count);
  return out;
}

FootprintPose lerp_pose(const Pose& a, const Pose& b, double t, double length,
                        double width) {
  FootprintPose p;
  p.x = a.x + t * (b.x - a.x);
  p.y = a.y + t * (b.y - a.y);
  p.yaw = wrap_angle(a.yaw + t * wrap_angle(b.yaw - a.yaw));
  p.length = length;
  p.width = width;
  return p;
}

}  // namespace

size_t DatasetHeader::record_bytes() const {
  size_t px = static_cast<size_t>(height) * width;
  return 4 + 2 + 4 + (static_cast<size_t>(channels) + 3 + 1 + 1) * px;
}

std::vector<uint8_t> quantize_rgb(const RgbImage& img) {
  std::vector<uint8_t> out(img.data.size());
  for (size_t i = 0; i < img.data.size(); ++i) {
    float v = std::min(1.0f, std::max(0.0f, img.data[i]));
    out[i] = static_cast<uint8_t>(std::lround(v * 255.0f));
  }
  return out;
}

DatasetFile DatasetFile::open(const std::string& path) {
  std::string buf = read_file(path);
  ckpt::Reader r(buf, path);
  DatasetFile f;
  f.header_ = read_header(r);
  size_t expect = f.header_.record_bytes() * f.header_.count;
  if (buf.size() - r.pos() != expect) r.fail("payload size mismatch");
  f.payload_.assign(buf.begin() + r.pos(), buf.end());
  return f;
}

void DatasetFile::write(const std::string& path, const DatasetHeader& header,
                        const std::vector<Record>& records) {
  DatasetHeader h = header;
  h.count = static_cast<uint32_t>(records.size());
  std::string out = header_bytes(h);
  out.reserve(out.size() + h.record_bytes() * records.size());
  size_t px = static_cast<size_t>(h.height) * h.width;
  for (const auto& r : records) {
    if (r.bev.data.size() != px * kBevChannels || r.rgb.size() != px * 3 ||
        r.plan.data.size() != px || r.pred.data.size() != px)
      throw std::invalid_argument("record shape does not match header");
    encode_record(out, r);
  }
  write_file(path, out);
}

Record DatasetFile::read_record(uint32_t index) const {
  if (index >= header_.count)
    throw std::out_of_range("record index " + std::to_string(index) +
                            " out of range, count " + std::to_string(header_.count));
  size_t rb = header_.record_bytes();
  const uint8_t* p = payload_.data() + rb * index;
  Record r;
  r.frame_id = p[0] | (p[1] << 8) | (static_cast<uint32_t>(p[2]) << 16) |
               (static_cast<uint32_t>(p[3]) << 24);
  r.scenario_id = static_cast<uint16_t>(p[4] | (p[5] << 8));
  uint32_t bits = p[6] | (p[7] << 8) | (static_cast<uint32_t>(p[8]) << 16) |
                  (static_cast<uint32_t>(p[9]) << 24);
  std::memcpy(&r.ego_speed, &bits, 4);
  p += 10;
  size_t px = static_cast<size_t>(header_.height) * header_.width;
  r.bev = BevFrame(header_.height, header_.width);
  for (size_t i = 0; i < px * kBevChannels; ++i) r.bev.data[i] = p[i] ? 1 : 0;
  p += px * kBevChannels;
  r.rgb.assign(p, p + px * 3);
  p += px * 3;
  r.plan = Mask(header_.height, header_.width);
  for (size_t i = 0; i < px; ++i) r.plan.data[i] = p[i] ? 1 : 0;
  p += px;
  r.pred = Mask(header_.height, header_.width);
  for (size_t i = 0; i < px; ++i) r.pred.data[i] = p[i] ? 1 : 0;
  return r;
}

std::vector<Record> collect(const CollectConfig& cfg) {
  if (cfg.n_frames <= 0) throw std::invalid_argument("n_frames must be positive");
  const int lookahead_ticks = static_cast<int>(std::lround(kFutureSeconds / 0.1));
  const int warmup_ticks = static_cast<int>(std::lround(kHistorySeconds / 0.1));
  const int n_samples = static_cast<int>(std::lround(kFutureSeconds / kFutureStride)) + 1;

  std::vector<Record> out;
  out.reserve(cfg.n_frames);
  uint32_t seed = cfg.seed;
  uint32_t frame_id = 0;

  WorldState world = spawn_scenario(cfg.kind, cfg.n_agents, cfg.aggressive_fraction, seed);
  std::deque<WorldState> buffer;  // oldest first; depth lookahead_ticks + 1
  int warm = 0;

  auto respawn = [&] {
    ++seed;
    world = spawn_scenario(cfg.kind, cfg.n_agents, cfg.aggressive_fraction, seed);
    buffer.clear();
    warm = 0;
  };

  while (static_cast<int>(out.size()) < cfg.n_frames) {
    auto [accel, steer] = autopilot(world.ego, world);
    StepEvents ev = step(world, EgoAction{accel, steer});
    if (ev.collision || ev.reached_goal) {
      respawn();
      continue;
    }
    if (warm < warmup_ticks) {
      ++warm;
      continue;
    }
    buffer.push_back(world);
    if (static_cast<int>(buffer.size()) <= lookahead_ticks) continue;

    const WorldState& now = buffer.front();
    TargetInput future;
    for (int k = 0; k < n_samples; ++k) {
      double ticks = k * (kFutureStride / now.dt);
      int lo = static_cast<int>(std::floor(ticks));
      int hi = std::min(lo + 1, lookahead_ticks);
      double t = ticks - lo;
      const WorldState& a = buffer[lo];
      const WorldState& b = buffer[hi];
      future.ego_future.push_back(
          lerp_pose(Pose{a.ego.x, a.ego.y, a.ego.yaw}, Pose{b.ego.x, b.ego.y, b.ego.yaw},
                    t, now.ego.length, now.ego.width));
      for (size_t i = 0; i < a.others.size(); ++i)
        future.others_future.push_back(lerp_pose(
            Pose{a.others[i].x, a.others[i].y, a.others[i].yaw},
            Pose{b.others[i].x, b.others[i].y, b.others[i].yaw}, t,
            now.others[i].length, now.others[i].width));
    }

    Record r;
    r.frame_id = frame_id++;
    r.scenario_id = cfg.kind == ScenarioKind::kRoundabout ? 0 : 1;
    r.ego_speed = static_cast<float>(now.ego.v);
    r.bev = rasterize_input(now, cfg.spec);
    TargetBundle t = rasterize_targets(now, future, cfg.spec);
    r.plan = std::move(t.plan);
    r.pred = std::move(t.pred);
    r.rgb = quantize_rgb(t.rgb);
    out.push_back(std::move(r));
    buffer.pop_front();
  }
  return out;
}

void merge_datasets(const std::vector<std::string>& inputs, const std::string& output) {
  if (inputs.empty()) throw std::invalid_argument("no input files");
  std::string merged;
  DatasetHeader first;
  uint32_t total = 0;
  for (size_t i = 0; i < inputs.size(); ++i) {
    std::string buf = read_file(inputs[i]);
    ckpt::Reader r(buf, inputs[i]);
    DatasetHeader h = read_header(r);
    if (i == 0) {
      first = h;
    } else if (h.height != first.height || h.width != first.width ||
               h.dt_ms != first.dt_ms) {
      throw std::runtime_error(inputs[i] + ": header mismatch during merge");
    }
    merged.append(buf, r.pos(), std::string::npos);
    total += h.count;
  }
  first.count = total;
  write_file(output, header_bytes(first) + merged);
}

std::vector<uint32_t> make_split(uint32_t count, double fraction, uint32_t seed) {
  std::vector<uint32_t> idx(count);
  std::iota(idx.begin(), idx.end(), 0u);
  if (fraction == 1.0) return idx;
  if (fraction != 0.5 && fraction != 0.25)
    throw std::invalid_argument("fraction must be 1, 1/2 or 1/4");
  // Prefixes of one fixed shuffle make the half/quarter splits nested.
  std::mt19937 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(static_cast<size_t>(std::floor(count * fraction)));
  std::sort(idx.begin(), idx.end());
  return idx;
}

DatasetStats compute_stats(const DatasetFile& file) {
  DatasetStats s;
  s.count = file.count();
  if (s.count == 0) return s;
  double px = static_cast<double>(file.header().height) * file.header().width;
  for (uint32_t i = 0; i < s.count; ++i) {
    Record r = file.read_record(i);
    for (int ch = 0; ch < kBevChannels; ++ch)
      s.fill_rate[ch] += r.bev.channel_count(ch) / px;
    s.plan_fill += r.plan.count() / px;
    s.pred_fill += r.pred.count() / px;
    s.mean_speed += r.ego_speed;
  }
  for (int ch = 0; ch < kBevChannels; ++ch) s.fill_rate[ch] /= s.count;
  s.plan_fill /= s.count;
  s.pred_fill /= s.count;
  s.mean_speed /= s.count;
  return s;
}

}  // namespace bevrl
