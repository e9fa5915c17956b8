#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "lori/adapter.hpp"
#include "lori/graph.hpp"
#include "lori/matrix.hpp"
#include "lori/slots.hpp"

namespace lori {

/// Frozen base network: per layer a single-head attention block and a
/// two-layer feedforward block, both with residual connections, followed by
/// mean pooling over positions and a linear head. No layer norm, no
/// positional encodings. Samples are seq_len x width matrices.
///
/// Slot shapes: attn.{q,k,v,o} are width x width, ffn.up is width x 2*width,
/// ffn.down is 2*width x width. The head (width x width) is not an adapter
/// slot.
struct ToyModel {
    int layers = 0;
    std::size_t width = 0;
    std::size_t ffn_width = 0;
    std::size_t seq_len = 0;
    std::uint64_t seed = 0;
    std::map<SlotKey, Matrix> w0;
    Matrix head;

    const Matrix& weight(const SlotKey& key) const;
    AdapterShape slot_shape(const SlotKey& key, std::size_t rank) const;
    std::vector<SlotKey> slot_keys() const;
};

ToyModel build_toy_model(int layers, std::size_t width, std::size_t seq_len, std::uint64_t seed);

/// Emits the output node of one slot's linear transform for a given input.
/// Implementations decide what the effective weight is (base only, base +
/// adapter, merged, ...), which is how training, evaluation, and merged
/// model evaluation all share this forward pass.
using SlotTransform = std::function<NodeId(GradGraph&, NodeId x, const SlotKey& key)>;

/// Builds the full forward pass for one sample (seq_len x width input node)
/// and returns the 1 x width output node.
NodeId toy_forward(GradGraph& g, const ToyModel& model, NodeId x, const SlotTransform& slot);

/// Caches per-slot constants so repeated samples in one graph share nodes.
class SlotConstants {
public:
    /// Base weights only: slot output is x * W0.
    SlotConstants(GradGraph& g, const ToyModel& model);
    /// Explicit per-slot weights (e.g. a merged model).
    SlotConstants(GradGraph& g, const ToyModel& model, const std::map<SlotKey, Matrix>& weights);

    SlotTransform transform() const;

private:
    std::map<SlotKey, NodeId> nodes_;
};

/// Fresh per-slot adapter set for this model. Each slot's A comes from the
/// (seed, task_id, slot) stream.
AdapterSet init_adapter_set(const ToyModel& model, std::size_t rank, double alpha,
                            const std::string& task_id, std::uint64_t seed);
LoraAdapterSet init_lora_set(const ToyModel& model, std::size_t rank, double alpha,
                             const std::string& task_id, std::uint64_t seed);

/// Adapter set whose slots all reuse one task-independent A stream, for
/// sequential training phases that must share projections.
AdapterSet init_shared_a_adapter_set(const ToyModel& model, std::size_t rank, double alpha,
                                     const std::string& task_id, std::uint64_t seed);

} // namespace lori
