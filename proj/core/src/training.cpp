#include "lori/training.hpp"

#include <cmath>

namespace lori {

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw ArgumentError("train config: lr must be > 0");
    if (steps < 1) throw ArgumentError("train config: steps must be >= 1");
    if (batch_size < 1) throw ArgumentError("train config: batch_size must be >= 1");
}

void sgd_update(Matrix& param, const Matrix& grad, const BitMask* mask, double lr) {
    if (!param.same_shape(grad)) {
        throw DimensionError("sgd_update: param " + param.shape_str() + " vs grad " +
                             grad.shape_str());
    }
    for (std::size_t k = 0; k < param.size(); ++k) {
        if (mask && !mask->get_flat(k)) continue;
        param[k] -= lr * grad[k];
    }
}

void adamw_update(Matrix& param, const Matrix& grad, const BitMask* mask, AdamState& state,
                  std::int64_t t, const TrainConfig& cfg) {
    if (!param.same_shape(grad)) {
        throw DimensionError("adamw_update: param " + param.shape_str() + " vs grad " +
                             grad.shape_str());
    }
    if (state.m.size() != param.size()) {
        state.m = Matrix(param.rows(), param.cols());
        state.v = Matrix(param.rows(), param.cols());
    }
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (std::size_t k = 0; k < param.size(); ++k) {
        if (mask && !mask->get_flat(k)) continue;
        const double g = grad[k];
        state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * g;
        state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * g * g;
        const double m_hat = state.m[k] / bc1;
        const double v_hat = state.v[k] / bc2;
        param[k] -= cfg.lr * (m_hat / (std::sqrt(v_hat) + cfg.eps) + cfg.weight_decay * param[k]);
    }
}

namespace {

struct SampleLoss {
    NodeId loss;
    NodeId output;
};

SampleLoss sample_loss(GradGraph& g, const ToyModel& model, const TaskDataset& data,
                       std::size_t index, const SlotTransform& slot) {
    const NodeId x = g.constant(data.inputs[index]);
    const NodeId out = toy_forward(g, model, x, slot);
    NodeId loss;
    if (data.loss_kind == LossKind::mse) {
        loss = g.mse(out, g.constant(data.targets[index]));
    } else {
        loss = g.cross_entropy(out, {data.labels[index]}, data.n_classes);
    }
    return {loss, out};
}

NodeId batch_loss(GradGraph& g, const ToyModel& model, const TaskDataset& data,
                  std::span<const std::size_t> batch, const SlotTransform& slot,
                  std::vector<NodeId>* outputs = nullptr) {
    if (batch.empty()) throw ArgumentError("batch must be nonempty");
    NodeId total = -1;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const SampleLoss s = sample_loss(g, model, data, batch[i], slot);
        if (outputs) outputs->push_back(s.output);
        total = (i == 0) ? s.loss : g.add(total, s.loss);
    }
    return g.scale(total, 1.0 / static_cast<double>(batch.size()));
}

int argmax_class(const Matrix& logits, std::size_t n_classes) {
    int best = 0;
    for (std::size_t j = 1; j < n_classes; ++j) {
        if (logits(0, j) > logits(0, best)) best = static_cast<int>(j);
    }
    return best;
}

EvalResult evaluate_with_transform(GradGraph& g, const ToyModel& model, const TaskDataset& data,
                                   const SlotTransform& slot) {
    if (data.size() == 0) throw ArgumentError("evaluate: empty dataset");
    std::vector<std::size_t> all(data.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t i : all) {
        const SampleLoss s = sample_loss(g, model, data, i, slot);
        loss_sum += g.scalar(s.loss);
        if (data.loss_kind == LossKind::cross_entropy) {
            if (argmax_class(g.value(s.output), data.n_classes) == data.labels[i]) ++correct;
        }
    }
    EvalResult r;
    r.loss = loss_sum / static_cast<double>(data.size());
    if (data.loss_kind == LossKind::cross_entropy) {
        r.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
    }
    return r;
}

std::map<SlotKey, Matrix> effective_weights(const ToyModel& model, const AdapterSet& set) {
    std::map<SlotKey, Matrix> w;
    for (const auto& [key, ad] : set.slots) w.emplace(key, merge_into_base(model.weight(key), ad));
    return w;
}

std::map<SlotKey, Matrix> effective_weights(const ToyModel& model, const LoraAdapterSet& set) {
    std::map<SlotKey, Matrix> w;
    for (const auto& [key, ad] : set.slots) w.emplace(key, add(model.weight(key), delta(ad)));
    return w;
}

} // namespace

EvalResult evaluate(const ToyModel& model, const AdapterSet& adapters, const TaskDataset& data) {
    return evaluate_weights(model, effective_weights(model, adapters), data);
}

EvalResult evaluate(const ToyModel& model, const LoraAdapterSet& adapters,
                    const TaskDataset& data) {
    return evaluate_weights(model, effective_weights(model, adapters), data);
}

EvalResult evaluate_base(const ToyModel& model, const TaskDataset& data) {
    GradGraph g;
    SlotConstants consts(g, model);
    return evaluate_with_transform(g, model, data, consts.transform());
}

EvalResult evaluate_weights(const ToyModel& model, const std::map<SlotKey, Matrix>& weights,
                            const TaskDataset& data) {
    GradGraph g;
    SlotConstants consts(g, model, weights);
    return evaluate_with_transform(g, model, data, consts.transform());
}

Trainer::Trainer(const ToyModel& model, TrainConfig cfg) : model_(&model), cfg_(cfg) {
    cfg_.validate();
}

void Trainer::apply(const std::vector<ParamUpdate>& updates) {
    for (const auto& u : updates) {
        if (cfg_.optimizer == OptimizerKind::sgd) {
            sgd_update(*u.param, *u.grad, u.mask, cfg_.lr);
        } else {
            TrainConfig c = cfg_;
            if (!u.decay) c.weight_decay = 0.0;
            adamw_update(*u.param, *u.grad, u.mask, adam_[u.state_key], step_count_, c);
        }
    }
}

double Trainer::step(AdapterSet& set, const TaskDataset& data,
                     std::span<const std::size_t> batch) {
    GradGraph g;
    std::map<SlotKey, NodeId> w_const, a_const, b_leaf;
    for (const auto& [key, ad] : set.slots) {
        w_const.emplace(key, g.constant(model_->weight(key)));
        a_const.emplace(key, g.constant(ad.a));
        b_leaf.emplace(key, g.leaf(ad.b));
    }
    const double s = set.alpha / static_cast<double>(set.rank);
    SlotTransform slot = [&](GradGraph& gg, NodeId x, const SlotKey& key) {
        const NodeId base = gg.matmul(x, w_const.at(key));
        const NodeId lowrank = gg.matmul(gg.matmul(x, a_const.at(key)), b_leaf.at(key));
        return gg.add(base, gg.scale(lowrank, s));
    };

    const NodeId loss = batch_loss(g, *model_, data, batch, slot);
    const double loss_value = g.scalar(loss);
    ++step_count_;
    if (!std::isfinite(loss_value)) {
        throw TrainingError("non-finite loss at step " + std::to_string(step_count_),
                            step_count_);
    }

    auto grads = g.backward(loss);
    std::vector<ParamUpdate> updates;
    std::vector<Matrix> grad_store;
    grad_store.reserve(set.slots.size());
    for (auto& [key, ad] : set.slots) {
        grad_store.push_back(grads.at(b_leaf.at(key)));
        updates.push_back({&ad.b, &grad_store.back(), &ad.mask, "b/" + key.str(), true});
    }
    apply(updates);
    return loss_value;
}

double Trainer::step(LoraAdapterSet& set, const TaskDataset& data,
                     std::span<const std::size_t> batch, bool freeze_a) {
    GradGraph g;
    std::map<SlotKey, NodeId> w_const, a_leaf, b_leaf;
    for (const auto& [key, ad] : set.slots) {
        w_const.emplace(key, g.constant(model_->weight(key)));
        a_leaf.emplace(key, g.leaf(ad.a));
        b_leaf.emplace(key, g.leaf(ad.b));
    }
    const double s = set.alpha / static_cast<double>(set.rank);
    SlotTransform slot = [&](GradGraph& gg, NodeId x, const SlotKey& key) {
        const NodeId base = gg.matmul(x, w_const.at(key));
        const NodeId lowrank = gg.matmul(gg.matmul(x, a_leaf.at(key)), b_leaf.at(key));
        return gg.add(base, gg.scale(lowrank, s));
    };

    const NodeId loss = batch_loss(g, *model_, data, batch, slot);
    const double loss_value = g.scalar(loss);
    ++step_count_;
    if (!std::isfinite(loss_value)) {
        throw TrainingError("non-finite loss at step " + std::to_string(step_count_),
                            step_count_);
    }

    auto grads = g.backward(loss);
    std::vector<ParamUpdate> updates;
    std::vector<Matrix> grad_store;
    grad_store.reserve(2 * set.slots.size());
    for (auto& [key, ad] : set.slots) {
        grad_store.push_back(grads.at(b_leaf.at(key)));
        updates.push_back({&ad.b, &grad_store.back(), nullptr, "b/" + key.str(), true});
        if (!freeze_a) {
            grad_store.push_back(grads.at(a_leaf.at(key)));
            updates.push_back({&ad.a, &grad_store.back(), nullptr, "a/" + key.str(), false});
        }
    }
    apply(updates);
    return loss_value;
}

template <typename StepFn>
TrainResult Trainer::run_loop(std::size_t dataset_size, StepFn&& step_fn) {
    if (dataset_size == 0) throw ArgumentError("train: empty dataset");
    TrainResult result;
    result.losses.reserve(static_cast<std::size_t>(cfg_.steps));
    RngStream order_stream(cfg_.seed, "batch_order", 0, "");
    std::int64_t remaining = cfg_.steps;
    for (std::uint64_t epoch = 0; remaining > 0; ++epoch) {
        RngStream epoch_stream = order_stream.fork(epoch);
        const std::vector<std::size_t> perm = epoch_stream.permutation(dataset_size);
        for (std::size_t at = 0; at < dataset_size && remaining > 0; at += cfg_.batch_size) {
            const std::size_t len = std::min(cfg_.batch_size, dataset_size - at);
            result.losses.push_back(step_fn(std::span<const std::size_t>(perm.data() + at, len)));
            --remaining;
        }
    }
    return result;
}

TrainResult Trainer::run(AdapterSet& set, const TaskDataset& data) {
    return run_loop(data.size(), [&](std::span<const std::size_t> batch) {
        return step(set, data, batch);
    });
}

TrainResult Trainer::run(LoraAdapterSet& set, const TaskDataset& data, bool freeze_a) {
    return run_loop(data.size(), [&](std::span<const std::size_t> batch) {
        return step(set, data, batch, freeze_a);
    });
}

TrainResult train_adapter(const ToyModel& model, AdapterSet& set, const TaskDataset& data,
                          const TrainConfig& cfg) {
    Trainer t(model, cfg);
    return t.run(set, data);
}

TrainResult train_lora_baseline(const ToyModel& model, LoraAdapterSet& set,
                                const TaskDataset& data, const TrainConfig& cfg) {
    Trainer t(model, cfg);
    return t.run(set, data);
}

} // namespace lori
