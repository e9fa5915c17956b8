#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lori/adapter.hpp"
#include "lori/tasks.hpp"
#include "lori/toy_model.hpp"

namespace lori {

enum class OptimizerKind { sgd, adamw };

struct TrainConfig {
    double lr = 1e-2;
    std::int64_t steps = 1;
    std::size_t batch_size = 16;
    OptimizerKind optimizer = OptimizerKind::adamw;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
};

/// In-place SGD step restricted to masked-in coordinates (mask == nullptr
/// means unrestricted). Masked-out coordinates are never written, so their
/// bits cannot change.
void sgd_update(Matrix& param, const Matrix& grad, const BitMask* mask, double lr);

struct AdamState {
    Matrix m;
    Matrix v;
};

/// Decoupled-weight-decay Adam step, masked like sgd_update. Moments exist
/// only at masked-in coordinates (zero elsewhere) and decay touches only
/// masked-in entries.
void adamw_update(Matrix& param, const Matrix& grad, const BitMask* mask, AdamState& state,
                  std::int64_t t, const TrainConfig& cfg);

struct EvalResult {
    double loss = 0.0;
    std::optional<double> accuracy;  // classification only
};

/// Pure functions of their inputs; no state is mutated.
EvalResult evaluate(const ToyModel& model, const AdapterSet& adapters, const TaskDataset& data);
EvalResult evaluate(const ToyModel& model, const LoraAdapterSet& adapters, const TaskDataset& data);
EvalResult evaluate_base(const ToyModel& model, const TaskDataset& data);
EvalResult evaluate_weights(const ToyModel& model, const std::map<SlotKey, Matrix>& weights,
                            const TaskDataset& data);

struct TrainResult {
    std::vector<double> losses;  // one entry per step, loss before the update
};

/// Owns optimizer state for one training run. A trainer must have exclusive
/// access to the adapter set it updates.
class Trainer {
public:
    Trainer(const ToyModel& model, TrainConfig cfg);

    /// One update step on the given sample indices. Returns the batch loss
    /// at the pre-update parameters. B gradients are masked before the
    /// optimizer sees them; A is never touched.
    double step(AdapterSet& set, const TaskDataset& data, std::span<const std::size_t> batch);
    /// LoRA baseline step: A and B both receive unmasked updates. With
    /// freeze_a, A gradients are discarded (reduction check against LoRI
    /// with s = 0).
    double step(LoraAdapterSet& set, const TaskDataset& data,
                std::span<const std::size_t> batch, bool freeze_a = false);

    /// Full run: seeded shuffled epochs, cfg.steps update steps.
    TrainResult run(AdapterSet& set, const TaskDataset& data);
    TrainResult run(LoraAdapterSet& set, const TaskDataset& data, bool freeze_a = false);

    std::int64_t steps_taken() const { return step_count_; }

private:
    struct ParamUpdate {
        Matrix* param;
        const Matrix* grad;
        const BitMask* mask;  // nullptr = unrestricted
        std::string state_key;
        bool decay;  // weight decay applies (B only)
    };

    void apply(const std::vector<ParamUpdate>& updates);
    template <typename StepFn>
    TrainResult run_loop(std::size_t dataset_size, StepFn&& step_fn);

    const ToyModel* model_;
    TrainConfig cfg_;
    std::int64_t step_count_ = 0;
    std::map<std::string, AdamState> adam_;
};

/// Convenience wrappers: fresh trainer, full run.
TrainResult train_adapter(const ToyModel& model, AdapterSet& set, const TaskDataset& data,
                          const TrainConfig& cfg);
TrainResult train_lora_baseline(const ToyModel& model, LoraAdapterSet& set,
                                const TaskDataset& data, const TrainConfig& cfg);

} // namespace lori
