#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lori/adapter.hpp"
#include "lori/mask_calibration.hpp"
#include "lori/tasks.hpp"
#include "lori/toy_model.hpp"
#include "lori/training.hpp"

namespace lori {

enum class ContinualKind { lori, lora };

struct ContinualOptions {
    ContinualKind kind = ContinualKind::lori;
    std::size_t rank = 8;
    double alpha = 16.0;
    std::uint64_t adapter_seed = 0;
    /// When true, phase-2 entries that are masked-in for the task but carry
    /// phase-1 values are zeroed before adaptation; default keeps them
    /// (continuation semantics).
    bool rezero_carried_entries = false;
    /// Phase-2 step budget; defaults to the phase-1 budget. Zero means the
    /// branches are untouched snapshots (a no-forgetting control).
    std::optional<std::int64_t> phase2_steps;
};

struct ContinualTaskResult {
    std::string task_id;
    double phase1_metric_before = 0.0;  // phase-1-task loss after phase 1
    double phase1_metric_after = 0.0;   // same loss after this phase-2 run
    double phase2_final_loss = 0.0;
    double overlap_with_phase1 = 0.0;   // mask overlap (LoRI only)
};

struct ContinualRun {
    std::string phase1_task;
    double phase1_final_loss = 0.0;
    std::vector<ContinualTaskResult> tasks;
    bool completed = false;
    // Final adapter states, for inspection and for the shared-A and
    // update-locality checks (LoRI runs fill the first pair, LoRA runs the
    // second).
    AdapterSet phase1_adapters;
    std::vector<AdapterSet> task_adapters;
    LoraAdapterSet phase1_lora;
    std::vector<LoraAdapterSet> task_lora;
};

/// Two-phase sequential training: phase 1 trains an adapter on the first
/// dataset under its pre-calibrated mask; phase 2 branches per task from the
/// phase-1 snapshot and continues training under that task's mask (masks are
/// reused, never recalibrated, and non-overlap is not enforced). All LoRI
/// branches share one frozen A. Records the phase-1-task metric before and
/// after every phase-2 run.
ContinualRun two_phase(const ToyModel& model, const TrainConfig& cfg,
                       const TaskDataset& phase1_data, const MaskSet* phase1_masks,
                       std::span<const TaskDataset> phase2_data,
                       std::span<const MaskSet> phase2_masks, const ContinualOptions& opts);

struct ForgettingRow {
    std::string phase2_task;
    double phase1_loss_before = 0.0;
    double phase1_loss_after = 0.0;
    double delta = 0.0;  // after - before: positive means forgetting
    double phase2_final_loss = 0.0;
};

/// One row per phase-2 task. Throws StateError for an incomplete run.
std::vector<ForgettingRow> forgetting_report(const ContinualRun& run);

/// Aggregate overlap across all slots of two mask sets.
double mask_set_overlap(const MaskSet& a, const MaskSet& b);

} // namespace lori
