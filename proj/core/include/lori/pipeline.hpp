#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lori/config.hpp"

namespace lori {

struct PipelineResult {
    std::filesystem::path out_dir;
    std::vector<std::filesystem::path> reports;  // CSV files written
    std::vector<std::filesystem::path> artifacts; // adapters / models written
};

/// Executes the configured stages (calibrate -> train -> merge / eval /
/// ortho / continual as requested), writing adapters, CSV reports, and a
/// manifest that pins the config hash, seeds, and format versions. Stage
/// failures are rethrown with the stage name and config hash attached.
PipelineResult run_pipeline(const ExperimentConfig& cfg);

} // namespace lori
