#include "lori/toy_model.hpp"

#include <cmath>

namespace lori {

const Matrix& ToyModel::weight(const SlotKey& key) const {
    auto it = w0.find(key);
    if (it == w0.end()) {
        throw ArgumentError("unknown slot " + key.str());
    }
    return it->second;
}

AdapterShape ToyModel::slot_shape(const SlotKey& key, std::size_t rank) const {
    const Matrix& w = weight(key);
    return AdapterShape{w.rows(), w.cols(), rank};
}

std::vector<SlotKey> ToyModel::slot_keys() const {
    std::vector<SlotKey> keys;
    keys.reserve(w0.size());
    for (const auto& [key, _] : w0) keys.push_back(key);
    return keys;
}

// Residual-branch weights are drawn Kaiming-uniform and damped so each
// block starts as a mild perturbation of the identity path; the adapters do
// the heavy lifting on top of it.
constexpr double kBaseWeightScale = 0.35;

ToyModel build_toy_model(int layers, std::size_t width, std::size_t seq_len, std::uint64_t seed) {
    if (layers < 1) throw ArgumentError("build_toy_model: layers must be >= 1");
    if (width < 4) throw ArgumentError("build_toy_model: width must be >= 4");
    if (seq_len < 1) throw ArgumentError("build_toy_model: seq_len must be >= 1");

    ToyModel m;
    m.layers = layers;
    m.width = width;
    m.ffn_width = 2 * width;
    m.seq_len = seq_len;
    m.seed = seed;

    for (int l = 0; l < layers; ++l) {
        for (Projection p : kAllProjections) {
            const SlotKey key{l, p};
            std::size_t d_in = width, d_out = width;
            if (p == Projection::ffn_up) d_out = m.ffn_width;
            if (p == Projection::ffn_down) d_in = m.ffn_width;
            RngStream rng(seed, "__base__", static_cast<std::uint64_t>(l),
                          std::string(to_string(p)));
            m.w0.emplace(key, scale(kaiming_uniform(d_in, d_out, rng), kBaseWeightScale));
        }
    }
    RngStream head_rng(seed, "__base__", static_cast<std::uint64_t>(layers), "head");
    m.head = kaiming_uniform(width, width, head_rng);
    return m;
}

NodeId toy_forward(GradGraph& g, const ToyModel& model, NodeId x, const SlotTransform& slot) {
    const double attn_scale = 1.0 / std::sqrt(static_cast<double>(model.width));
    for (int l = 0; l < model.layers; ++l) {
        const NodeId q = slot(g, x, {l, Projection::attn_q});
        const NodeId k = slot(g, x, {l, Projection::attn_k});
        const NodeId v = slot(g, x, {l, Projection::attn_v});
        const NodeId scores = g.softmax_rows(g.scale(g.matmul(q, g.transpose(k)), attn_scale));
        const NodeId attn = slot(g, g.matmul(scores, v), {l, Projection::attn_o});
        x = g.add(x, attn);
        const NodeId hidden = g.relu(slot(g, x, {l, Projection::ffn_up}));
        x = g.add(x, slot(g, hidden, {l, Projection::ffn_down}));
    }
    return g.matmul(g.mean_rows(x), g.constant(model.head));
}

SlotConstants::SlotConstants(GradGraph& g, const ToyModel& model) {
    for (const auto& [key, w] : model.w0) nodes_.emplace(key, g.constant(w));
}

SlotConstants::SlotConstants(GradGraph& g, const ToyModel& model,
                             const std::map<SlotKey, Matrix>& weights) {
    for (const auto& [key, base] : model.w0) {
        auto it = weights.find(key);
        nodes_.emplace(key, g.constant(it != weights.end() ? it->second : base));
    }
}

SlotTransform SlotConstants::transform() const {
    return [this](GradGraph& g, NodeId x, const SlotKey& key) {
        auto it = nodes_.find(key);
        if (it == nodes_.end()) throw ArgumentError("unknown slot " + key.str());
        return g.matmul(x, it->second);
    };
}

AdapterSet init_adapter_set(const ToyModel& model, std::size_t rank, double alpha,
                            const std::string& task_id, std::uint64_t seed) {
    AdapterSet set;
    set.task_id = task_id;
    set.alpha = alpha;
    set.rank = rank;
    for (const auto& [key, w] : model.w0) {
        set.slots.emplace(key, init_lori(model.slot_shape(key, rank), alpha, task_id, seed, key));
    }
    return set;
}

LoraAdapterSet init_lora_set(const ToyModel& model, std::size_t rank, double alpha,
                             const std::string& task_id, std::uint64_t seed) {
    LoraAdapterSet set;
    set.task_id = task_id;
    set.alpha = alpha;
    set.rank = rank;
    for (const auto& [key, w] : model.w0) {
        set.slots.emplace(key, init_lora(model.slot_shape(key, rank), alpha, task_id, seed, key));
    }
    return set;
}

AdapterSet init_shared_a_adapter_set(const ToyModel& model, std::size_t rank, double alpha,
                                     const std::string& task_id, std::uint64_t seed) {
    AdapterSet set = init_adapter_set(model, rank, alpha, "__shared__", seed);
    set.task_id = task_id;
    for (auto& [key, ad] : set.slots) ad.task_id = task_id;
    return set;
}

} // namespace lori
