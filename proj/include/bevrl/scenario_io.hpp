#pragma once

// Versioned structured-text scenario definition files: lane polylines,
// widths, connectivity, light timing and spawn anchors.

#include <string>

#include "bevrl/world.hpp"

namespace bevrl {

std::string scenario_to_text(const LaneGraph& graph);
LaneGraph scenario_from_text(const std::string& text, const std::string& origin);

void save_scenario(const std::string& path, const LaneGraph& graph);
LaneGraph load_scenario(const std::string& path);

}  // namespace bevrl
