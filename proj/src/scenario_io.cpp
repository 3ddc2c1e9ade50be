#include "bevrl/scenario_io.hpp"

#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace bevrl {

namespace tc {
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);
}  // namespace tc

std::string scenario_to_text(const LaneGraph& graph) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "# traffic scenario definition\n";
  out << "version 1\n";
  out << "name " << graph.name << "\n";
  out << "lights " << graph.lights.n_groups << " " << graph.lights.green_s << " "
      << graph.lights.yellow_s << "\n";
  out << "lanes " << graph.lanes.size() << "\n";
  for (const auto& l : graph.lanes) {
    out << "lane " << l.id << "\n";
    out << "width " << l.width << "\n";
    out << "light_group " << l.light_group << "\n";
    out << "stop_s " << l.stop_s << "\n";
    out << "flags " << (l.spawnable ? 1 : 0) << " " << (l.is_entry ? 1 : 0) << " "
        << (l.is_exit ? 1 : 0) << "\n";
    out << "succ " << l.successors.size();
    for (int s : l.successors) out << " " << s;
    out << "\n";
    out << "pts " << l.pts.size() << "\n";
    for (const auto& p : l.pts) out << p.x << " " << p.y << "\n";
    out << "end\n";
  }
  return out.str();
}

LaneGraph scenario_from_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  auto fail = [&](const std::string& what) {
    throw std::runtime_error(origin + ": " + what);
  };
  auto expect_key = [&](const std::string& key) {
    std::string tok;
    while (in >> tok) {
      if (tok == "#") {
        std::string line;
        std::getline(in, line);
        continue;
      }
      if (tok != key) fail("expected '" + key + "', got '" + tok + "'");
      return;
    }
    fail("unexpected end of file, expected '" + key + "'");
  };

  LaneGraph g;
  int version = 0;
  expect_key("version");
  in >> version;
  if (version != 1) fail("unsupported scenario version " + std::to_string(version));
  expect_key("name");
  in >> g.name;
  expect_key("lights");
  in >> g.lights.n_groups >> g.lights.green_s >> g.lights.yellow_s;
  size_t n_lanes = 0;
  expect_key("lanes");
  in >> n_lanes;
  for (size_t i = 0; i < n_lanes; ++i) {
    Lane l;
    expect_key("lane");
    in >> l.id;
    expect_key("width");
    in >> l.width;
    expect_key("light_group");
    in >> l.light_group;
    expect_key("stop_s");
    in >> l.stop_s;
    int spawnable = 0, entry = 0, exit = 0;
    expect_key("flags");
    in >> spawnable >> entry >> exit;
    l.spawnable = spawnable != 0;
    l.is_entry = entry != 0;
    l.is_exit = exit != 0;
    size_t n_succ = 0;
    expect_key("succ");
    in >> n_succ;
    l.successors.resize(n_succ);
    for (auto& s : l.successors) in >> s;
    size_t n_pts = 0;
    expect_key("pts");
    in >> n_pts;
    l.pts.resize(n_pts);
    for (auto& p : l.pts) in >> p.x >> p.y;
    expect_key("end");
    if (!in) fail("truncated lane block " + std::to_string(i));
    l.finalize();
    g.lanes.push_back(std::move(l));
  }
  g.validate();
  return g;
}

void save_scenario(const std::string& path, const LaneGraph& graph) {
  tc::write_file(path, scenario_to_text(graph));
}

LaneGraph load_scenario(const std::string& path) {
  return scenario_from_text(tc::read_file(path), path);
}

}  // namespace bevrl
