#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <random>

#include "bevrl/dataset.hpp"
#include "bevrl/nn.hpp"

using namespace bevrl;
using bevrl::tc::read_file;
using bevrl::tc::write_file;

namespace {

Record random_record(std::mt19937& rng, int h, int w) {
  std::uniform_int_distribution<int> bit(0, 1);
  std::uniform_int_distribution<int> byte(0, 255);
  Record r;
  r.frame_id = rng();
  r.scenario_id = static_cast<uint16_t>(rng() & 1);
  r.ego_speed = std::uniform_real_distribution<float>(0.0f, 15.0f)(rng);
  r.bev = BevFrame(h, w);
  for (auto& v : r.bev.data) v = static_cast<uint8_t>(bit(rng));
  r.plan = Mask(h, w);
  for (auto& v : r.plan.data) v = static_cast<uint8_t>(bit(rng));
  r.pred = Mask(h, w);
  for (auto& v : r.pred.data) v = static_cast<uint8_t>(bit(rng));
  r.rgb.resize(static_cast<size_t>(3) * h * w);
  for (auto& v : r.rgb) v = static_cast<uint8_t>(byte(rng));
  return r;
}

std::string tmp_path(const char* name) {
  return std::string("/tmp/bevrl_test_") + name;
}

}  // namespace

TEST_CASE("round trip is bit exact over random records") {
  std::mt19937 rng(7);
  DatasetHeader h;
  h.height = 16;
  h.width = 16;
  std::vector<Record> recs;
  for (int i = 0; i < 12; ++i) recs.push_back(random_record(rng, 16, 16));
  auto path = tmp_path("roundtrip.bevd");
  DatasetFile::write(path, h, recs);
  auto file = DatasetFile::open(path);
  REQUIRE(file.count() == 12);
  for (uint32_t i = 0; i < file.count(); ++i) CHECK(file.read_record(i) == recs[i]);
  std::remove(path.c_str());
}

TEST_CASE("out of range and corrupted files are errors") {
  std::mt19937 rng(3);
  DatasetHeader h;
  h.height = 8;
  h.width = 8;
  std::vector<Record> recs{random_record(rng, 8, 8)};
  auto path = tmp_path("corrupt.bevd");
  DatasetFile::write(path, h, recs);
  auto file = DatasetFile::open(path);
  CHECK_THROWS_AS(file.read_record(1), std::out_of_range);

  std::string buf = read_file(path);
  buf[0] = 'X';
  write_file(path, buf);
  CHECK_THROWS_WITH_AS(DatasetFile::open(path),
                       doctest::Contains("offset"), std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("collect is deterministic given a seed") {
  CollectConfig cfg;
  cfg.n_frames = 10;
  cfg.n_agents = 6;
  cfg.seed = 42;
  cfg.spec.height = 32;
  cfg.spec.width = 32;
  auto a = collect(cfg);
  auto b = collect(cfg);
  REQUIRE(a.size() == 10);
  CHECK(a == b);

  DatasetHeader h;
  h.height = 32;
  h.width = 32;
  auto p1 = tmp_path("collect_a.bevd");
  auto p2 = tmp_path("collect_b.bevd");
  DatasetFile::write(p1, h, a);
  DatasetFile::write(p2, h, b);
  CHECK(read_file(p1) == read_file(p2));
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("collect with no agents leaves pred targets empty") {
  CollectConfig cfg;
  cfg.n_frames = 8;
  cfg.n_agents = 0;
  cfg.seed = 5;
  cfg.spec.height = 32;
  cfg.spec.width = 32;
  auto recs = collect(cfg);
  for (const auto& r : recs) {
    CHECK(r.pred.count() == 0);
    CHECK(r.plan.count() > 0);  // ego always exists
    CHECK(r.bev.channel_count(kChOthersNow) == 0);
  }
}

TEST_CASE("splits are nested, sized and deterministic") {
  auto full = make_split(200, 1.0, 9);
  REQUIRE(full.size() == 200);
  for (uint32_t i = 0; i < 200; ++i) CHECK(full[i] == i);

  auto half = make_split(200, 0.5, 9);
  auto quarter = make_split(200, 0.25, 9);
  CHECK(half.size() == 100);
  CHECK(quarter.size() == 50);
  for (uint32_t v : quarter)
    CHECK(std::find(half.begin(), half.end(), v) != half.end());
  CHECK(make_split(200, 0.5, 9) == half);
  CHECK_THROWS_AS(make_split(200, 0.3, 9), std::invalid_argument);
}

TEST_CASE("merge concatenates records and fixes the count") {
  std::mt19937 rng(11);
  DatasetHeader h;
  h.height = 8;
  h.width = 8;
  std::vector<Record> a{random_record(rng, 8, 8), random_record(rng, 8, 8)};
  std::vector<Record> b{random_record(rng, 8, 8)};
  auto p1 = tmp_path("merge_a.bevd"), p2 = tmp_path("merge_b.bevd"),
       pm = tmp_path("merge_out.bevd");
  DatasetFile::write(p1, h, a);
  DatasetFile::write(p2, h, b);
  merge_datasets({p1, p2}, pm);
  auto merged = DatasetFile::open(pm);
  REQUIRE(merged.count() == 3);
  CHECK(merged.read_record(0) == a[0]);
  CHECK(merged.read_record(1) == a[1]);
  CHECK(merged.read_record(2) == b[0]);
  for (auto* p : {&p1, &p2, &pm}) std::remove(p->c_str());
}

TEST_CASE("stats reflect channel fill") {
  CollectConfig cfg;
  cfg.n_frames = 5;
  cfg.n_agents = 8;
  cfg.seed = 2;
  cfg.spec.height = 32;
  cfg.spec.width = 32;
  auto recs = collect(cfg);
  DatasetHeader h;
  h.height = 32;
  h.width = 32;
  auto path = tmp_path("stats.bevd");
  DatasetFile::write(path, h, recs);
  auto stats = compute_stats(DatasetFile::open(path));
  CHECK(stats.count == 5);
  CHECK(stats.fill_rate[kChRoad] > 0.1);
  CHECK(stats.fill_rate[kChEgoNow] > 0.0);
  CHECK(stats.plan_fill > 0.0);
  CHECK(stats.mean_speed >= 0.0);
  std::remove(path.c_str());
}
