#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lori/adapter.hpp"
#include "lori/bitmask.hpp"
#include "lori/tasks.hpp"
#include "lori/toy_model.hpp"
#include "lori/training.hpp"

namespace lori {

/// Pooling scope for magnitude selection, from one global pool down to one
/// pool per matrix.
enum class Granularity { model, module, projection, layer, matrix };

Granularity granularity_from_string(std::string_view name);
std::string_view to_string(Granularity g);

struct SparsityConfig {
    double s = 0.0;  // sparsity ratio in [0, 1)
    Granularity granularity = Granularity::model;
    std::int64_t calibration_steps = 1;

    void validate() const;
    bool operator==(const SparsityConfig&) const = default;
};

/// Per-slot masks plus the per-scope thresholds they were cut at.
struct MaskSet {
    std::map<SlotKey, BitMask> masks;
    std::map<std::string, double> thresholds;  // scope name -> tau
    SparsityConfig config;
    std::string task_id;

    bool operator==(const MaskSet&) const = default;
};

struct SlotProfile {
    SlotKey slot;
    std::size_t retained = 0;
    std::size_t total = 0;

    double fraction() const { return static_cast<double>(retained) / static_cast<double>(total); }
};

struct CalibrationReport {
    std::vector<SlotProfile> per_slot;
    std::size_t global_retained = 0;
    std::size_t global_total = 0;
    std::map<std::string, double> thresholds;
};

/// Number of entries retained in a scope of n entries: ceil((1 - s) * n),
/// computed as n - floor(s * n) so intended-integer products do not round
/// the wrong way. Always >= 1 for s < 1.
std::size_t retention_budget(double s, std::size_t n);

/// Partitions the slot set by scope. Groups cover every slot exactly once;
/// group order and per-group slot order are deterministic (layer ascending,
/// projection in declaration order).
std::vector<std::pair<std::string, std::vector<SlotKey>>> scope_partition(
    const std::vector<SlotKey>& slots, Granularity granularity);

struct ScopeSelection {
    std::map<SlotKey, BitMask> masks;
    double tau = 0.0;
};

/// Exact-budget magnitude selection over one scope's pooled B entries.
/// Retains exactly ceil((1 - s) * N) positions, ranked by (|value|
/// descending, global index ascending); tau is the |value| at the cut.
ScopeSelection make_mask(const std::vector<std::pair<SlotKey, const Matrix*>>& scope, double s);

/// Selection only (no training): pools the set's current B matrices per
/// scope and emits masks. Used by calibrate() after its training pass.
MaskSet select_masks(const AdapterSet& set, const SparsityConfig& cfg);

/// Full calibration: trains B densely (all-ones masks) for
/// cfg.calibration_steps, selects masks from |B|, resets every B to zero,
/// and attaches the masks to the adapters. Adapters must be fresh or
/// explicitly reset. The calibration optimizer state is discarded with B.
MaskSet calibrate(const ToyModel& model, AdapterSet& set, const TaskDataset& calibration_data,
                  const SparsityConfig& sparsity_cfg, const TrainConfig& train_cfg);

/// Attaches stored masks to a set (shapes must match) and marks it calibrated.
void apply_mask_set(AdapterSet& set, const MaskSet& mask_set);

/// Back to the fresh state: B = 0, masks all-ones, not calibrated.
void reset_adapter_set(AdapterSet& set);

/// Per-slot retention bookkeeping; fractions reconcile with the global count.
CalibrationReport sparsity_profile(const MaskSet& mask_set);

} // namespace lori
