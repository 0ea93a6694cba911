#pragma once

#include <string>

#include "buckrl/scenario.hpp"

namespace buckrl {

/// Static result figure: bus voltage and output current against time, with
/// load-step markers and per-segment metric annotations.
std::string render_scenario_svg(const ScenarioResult& result, double v_ref);

void write_scenario_svg(const std::string& path, const ScenarioResult& result,
                        double v_ref);

}  // namespace buckrl
