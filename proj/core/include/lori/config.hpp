#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lori/mask_calibration.hpp"
#include "lori/merge.hpp"
#include "lori/tasks.hpp"
#include "lori/training.hpp"

namespace lori {

enum class PipelineKind { calibrate, train, eval, sweep, merge, ortho, continual };

PipelineKind pipeline_from_string(std::string_view name);
std::string_view to_string(PipelineKind p);

struct ModelConfig {
    int layers = 2;
    std::size_t width = 32;
    std::size_t seq_len = 8;
    std::uint64_t seed = 7;
};

struct AdapterConfig {
    std::size_t rank = 8;
    double alpha = 16.0;        // defaults to 2 * rank when absent
    std::string kind = "lori";  // "lori" or "lora"
};

struct OrthoConfig {
    std::size_t rank = 16;
    std::vector<std::size_t> d_in_list = {256, 1024, 4096};
    std::size_t trials = 64;
    double delta = 0.05;
};

struct ContinualConfig {
    std::string phase1_task;
    bool rezero_carried_entries = false;
};

/// One experiment, fully specified. Parsing is strict: any key that is not
/// part of the schema fails with the offending key name.
struct ExperimentConfig {
    PipelineKind pipeline = PipelineKind::train;
    std::uint64_t seed = 42;
    std::filesystem::path out_dir = "runs/out";

    ModelConfig model;
    AdapterConfig adapter;
    std::vector<TaskSpec> tasks;
    SparsityConfig sparsity;
    TrainConfig train;
    MergeSpec merge;
    bool merge_weights_given = false;
    std::vector<double> sweep_sparsities = {0.0, 0.5, 0.9, 0.95};
    OrthoConfig ortho;
    ContinualConfig continual;
    std::optional<std::filesystem::path> adapters_dir;  // eval/merge from saved files
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical serialized form (sorted keys); identical configs serialize to
/// identical bytes.
std::string canonical_config(const ExperimentConfig& cfg);

/// FNV-1a 64 over the canonical form, hex-encoded.
std::string config_hash(const ExperimentConfig& cfg);

} // namespace lori
