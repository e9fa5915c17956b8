#include "lori/mask_calibration.hpp"

#include <algorithm>
#include <cmath>

namespace lori {

Granularity granularity_from_string(std::string_view name) {
    if (name == "model") return Granularity::model;
    if (name == "module") return Granularity::module;
    if (name == "projection") return Granularity::projection;
    if (name == "layer") return Granularity::layer;
    if (name == "matrix") return Granularity::matrix;
    throw ArgumentError("unknown granularity: " + std::string(name));
}

std::string_view to_string(Granularity g) {
    switch (g) {
    case Granularity::model: return "model";
    case Granularity::module: return "module";
    case Granularity::projection: return "projection";
    case Granularity::layer: return "layer";
    case Granularity::matrix: return "matrix";
    }
    throw ArgumentError("unknown granularity enum value");
}

void SparsityConfig::validate() const {
    if (!(s >= 0.0 && s < 1.0)) {
        throw ArgumentError("sparsity config: s must be in [0, 1), got " + std::to_string(s));
    }
    if (calibration_steps < 1) {
        throw ArgumentError("sparsity config: calibration_steps must be >= 1");
    }
}

std::size_t retention_budget(double s, std::size_t n) {
    if (!(s >= 0.0 && s < 1.0)) {
        throw ArgumentError("retention_budget: s must be in [0, 1)");
    }
    if (n == 0) throw ArgumentError("retention_budget: empty scope");
    const auto dropped = static_cast<std::size_t>(
        std::floor(s * static_cast<double>(n) + 1e-9));
    const std::size_t k = n - std::min(dropped, n - 1);
    return k;
}

std::vector<std::pair<std::string, std::vector<SlotKey>>> scope_partition(
    const std::vector<SlotKey>& slots, Granularity granularity) {
    if (slots.empty()) throw ArgumentError("scope_partition: no slots");
    std::vector<SlotKey> ordered = slots;
    std::sort(ordered.begin(), ordered.end());

    std::vector<std::pair<std::string, std::vector<SlotKey>>> groups;
    auto group_of = [&](const std::string& name) -> std::vector<SlotKey>& {
        for (auto& [n, g] : groups) {
            if (n == name) return g;
        }
        groups.emplace_back(name, std::vector<SlotKey>{});
        return groups.back().second;
    };

    for (const SlotKey& key : ordered) {
        switch (granularity) {
        case Granularity::model:
            group_of("model").push_back(key);
            break;
        case Granularity::module:
            group_of(is_attention(key.proj) ? "module:attn" : "module:ffn").push_back(key);
            break;
        case Granularity::projection:
            group_of("projection:" + std::string(to_string(key.proj))).push_back(key);
            break;
        case Granularity::layer:
            group_of("layer:" + std::to_string(key.layer)).push_back(key);
            break;
        case Granularity::matrix:
            group_of("matrix:" + key.str()).push_back(key);
            break;
        }
    }
    return groups;
}

ScopeSelection make_mask(const std::vector<std::pair<SlotKey, const Matrix*>>& scope, double s) {
    if (scope.empty()) throw ArgumentError("make_mask: empty scope");

    std::size_t total = 0;
    for (const auto& [key, b] : scope) total += b->size();
    if (total == 0) throw ArgumentError("make_mask: scope has no entries");

    // Global index: scope order is the caller's slot order; entries within a
    // slot are row-major. The sort key (|value| desc, index asc) makes the
    // selection a deterministic prefix, so budgets nest as s grows.
    std::vector<std::pair<double, std::size_t>> ranked;
    ranked.reserve(total);
    std::size_t base = 0;
    for (const auto& [key, b] : scope) {
        for (std::size_t k = 0; k < b->size(); ++k) {
            ranked.emplace_back(std::abs((*b)[k]), base + k);
        }
        base += b->size();
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) {
        if (x.first != y.first) return x.first > y.first;
        return x.second < y.second;
    });

    const std::size_t budget = retention_budget(s, total);

    ScopeSelection sel;
    sel.tau = ranked[budget - 1].first;
    for (const auto& [key, b] : scope) {
        sel.masks.emplace(key, BitMask(b->rows(), b->cols()));
    }
    // Map retained global indices back to (slot, position).
    std::vector<std::size_t> slot_base(scope.size());
    base = 0;
    for (std::size_t i = 0; i < scope.size(); ++i) {
        slot_base[i] = base;
        base += scope[i].second->size();
    }
    for (std::size_t rank = 0; rank < budget; ++rank) {
        const std::size_t g = ranked[rank].second;
        const std::size_t slot_idx =
            static_cast<std::size_t>(std::upper_bound(slot_base.begin(), slot_base.end(), g) -
                                     slot_base.begin()) - 1;
        sel.masks.at(scope[slot_idx].first).set_flat(g - slot_base[slot_idx], true);
    }
    return sel;
}

MaskSet select_masks(const AdapterSet& set, const SparsityConfig& cfg) {
    cfg.validate();
    std::vector<SlotKey> keys;
    for (const auto& [key, _] : set.slots) keys.push_back(key);

    MaskSet ms;
    ms.config = cfg;
    ms.task_id = set.task_id;
    for (const auto& [scope_name, scope_keys] : scope_partition(keys, cfg.granularity)) {
        std::vector<std::pair<SlotKey, const Matrix*>> scope;
        scope.reserve(scope_keys.size());
        for (const SlotKey& key : scope_keys) {
            scope.emplace_back(key, &set.slots.at(key).b);
        }
        ScopeSelection sel = make_mask(scope, cfg.s);
        ms.thresholds.emplace(scope_name, sel.tau);
        for (auto& [key, mask] : sel.masks) ms.masks.emplace(key, std::move(mask));
    }
    return ms;
}

MaskSet calibrate(const ToyModel& model, AdapterSet& set, const TaskDataset& calibration_data,
                  const SparsityConfig& sparsity_cfg, const TrainConfig& train_cfg) {
    sparsity_cfg.validate();
    if (calibration_data.size() == 0) {
        throw ArgumentError("calibrate: empty calibration dataset");
    }
    for (const auto& [key, ad] : set.slots) {
        if (max_abs(ad.b) != 0.0 || !ad.mask.all_set()) {
            throw StateError("calibrate: adapter slot " + key.str() +
                             " is not fresh; reset it first");
        }
    }

    TrainConfig cal_cfg = train_cfg;
    cal_cfg.steps = sparsity_cfg.calibration_steps;
    Trainer trainer(model, cal_cfg);
    trainer.run(set, calibration_data);

    MaskSet ms = select_masks(set, sparsity_cfg);
    for (auto& [key, ad] : set.slots) {
        ad.b = Matrix(ad.shape.r, ad.shape.d_out);
    }
    apply_mask_set(set, ms);
    return ms;
}

void apply_mask_set(AdapterSet& set, const MaskSet& mask_set) {
    for (auto& [key, ad] : set.slots) {
        auto it = mask_set.masks.find(key);
        if (it == mask_set.masks.end()) {
            throw StateError("apply_mask_set: no mask for slot " + key.str());
        }
        if (it->second.rows() != ad.shape.r || it->second.cols() != ad.shape.d_out) {
            throw DimensionError("apply_mask_set: mask " + std::to_string(it->second.rows()) +
                                 "x" + std::to_string(it->second.cols()) + " vs B " +
                                 std::to_string(ad.shape.r) + "x" +
                                 std::to_string(ad.shape.d_out));
        }
        ad.mask = it->second;
        ad.calibrated = true;
        // Masked-out positions must hold exact zeros from here on.
        for (std::size_t k = 0; k < ad.b.size(); ++k) {
            if (!ad.mask.get_flat(k)) ad.b[k] = 0.0;
        }
    }
}

void reset_adapter_set(AdapterSet& set) {
    for (auto& [key, ad] : set.slots) {
        ad.b = Matrix(ad.shape.r, ad.shape.d_out);
        ad.mask = BitMask::ones(ad.shape.r, ad.shape.d_out);
        ad.calibrated = false;
    }
}

CalibrationReport sparsity_profile(const MaskSet& mask_set) {
    if (mask_set.masks.empty()) throw ArgumentError("sparsity_profile: empty mask set");
    CalibrationReport report;
    report.thresholds = mask_set.thresholds;
    for (const auto& [key, mask] : mask_set.masks) {
        SlotProfile p;
        p.slot = key;
        p.retained = mask.count();
        p.total = mask.size();
        report.global_retained += p.retained;
        report.global_total += p.total;
        report.per_slot.push_back(p);
    }
    return report;
}

} // namespace lori
