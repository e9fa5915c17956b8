#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lori/matrix.hpp"
#include "lori/toy_model.hpp"

namespace lori {

enum class TaskKind {
    linear_regression,
    cluster_classification,
    sequence_copy,
};

enum class LossKind { mse, cross_entropy };

TaskKind task_kind_from_string(std::string_view name);
std::string_view to_string(TaskKind kind);

struct TaskSpec {
    TaskKind kind = TaskKind::linear_regression;
    std::size_t size = 0;
    double noise = 0.0;
    std::uint64_t seed = 0;
    std::string task_id;
    /// Samples come from the (seed, task_id, split) stream while the task's
    /// underlying map (regression target map, cluster means) depends only on
    /// (seed, task_id), so split 1 is a held-out set for the same task.
    std::uint64_t split = 0;
};

/// Same task, fresh samples: the held-out evaluation split.
inline TaskSpec eval_split(TaskSpec spec, std::size_t size = 0) {
    spec.split = 1;
    if (size > 0) spec.size = size;
    return spec;
}

struct TaskDataset {
    std::vector<Matrix> inputs;   // each seq_len x width
    std::vector<Matrix> targets;  // each 1 x width (mse tasks)
    std::vector<int> labels;      // classification
    LossKind loss_kind = LossKind::mse;
    std::size_t n_classes = 0;
    std::string task_id;

    std::size_t size() const { return inputs.size(); }
};

inline constexpr std::size_t kClusterClasses = 4;
/// Marker value written into channel 0 at the position a copy sample points at.
inline constexpr double kCopyFlag = 3.0;

/// Deterministic synthetic datasets sized to the model.
///
/// linear_regression: targets are mean-pooled inputs through a fixed map
///   (the model head plus a random rank-2 bump), plus optional noise —
///   exactly linear in the pooled features, so a least-squares fit on them
///   is a closed-form reference.
/// cluster_classification: four Gaussian clusters in pooled-feature space.
/// sequence_copy: channel 0 flags one position; the target is that
///   position's row, which attention must retrieve.
TaskDataset gen_task(const TaskSpec& spec, const ToyModel& model);

/// The exact map used for linear_regression targets (pooled -> target).
Matrix regression_target_map(const TaskSpec& spec, const ToyModel& model);

} // namespace lori
