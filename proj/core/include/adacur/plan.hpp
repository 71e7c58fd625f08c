#pragma once

#include <filesystem>
#include <string>

#include "adacur/eval.hpp"

namespace adacur {

/// Parses a JSON plan document into an ExperimentPlan. Unknown keys are
/// rejected; syntax errors report line and column. See the README for the
/// schema.
ExperimentPlan parse_plan_text(const std::string& text);
ExperimentPlan parse_plan_file(const std::filesystem::path& path);

}  // namespace adacur
