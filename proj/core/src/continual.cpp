#include "lori/continual.hpp"

namespace lori {

namespace {

void require_masks(const MaskSet* masks, const std::string& task) {
    if (masks == nullptr) {
        throw StateError("two_phase: no calibrated mask set for task '" + task + "'");
    }
}

} // namespace

ContinualRun two_phase(const ToyModel& model, const TrainConfig& cfg,
                       const TaskDataset& phase1_data, const MaskSet* phase1_masks,
                       std::span<const TaskDataset> phase2_data,
                       std::span<const MaskSet> phase2_masks, const ContinualOptions& opts) {
    if (opts.kind == ContinualKind::lori && phase2_data.size() != phase2_masks.size()) {
        throw StateError("two_phase: " + std::to_string(phase2_masks.size()) +
                         " mask sets for " + std::to_string(phase2_data.size()) + " tasks");
    }

    TrainConfig phase2_cfg = cfg;
    const std::int64_t phase2_steps = opts.phase2_steps.value_or(cfg.steps);
    if (phase2_steps > 0) phase2_cfg.steps = phase2_steps;

    ContinualRun run;
    run.phase1_task = phase1_data.task_id;

    if (opts.kind == ContinualKind::lori) {
        require_masks(phase1_masks, phase1_data.task_id);

        AdapterSet phase1 = init_shared_a_adapter_set(model, opts.rank, opts.alpha,
                                                      phase1_data.task_id, opts.adapter_seed);
        apply_mask_set(phase1, *phase1_masks);
        {
            Trainer trainer(model, cfg);
            TrainResult r = trainer.run(phase1, phase1_data);
            run.phase1_final_loss = r.losses.back();
        }
        const double before = evaluate(model, phase1, phase1_data).loss;

        for (std::size_t t = 0; t < phase2_data.size(); ++t) {
            // Branch from the phase-1 snapshot; same frozen A by construction.
            // The task mask gates phase-2 updates only: values carried from
            // phase 1 outside it stay in place and keep contributing.
            AdapterSet branch = phase1;
            branch.task_id = phase2_data[t].task_id;
            for (auto& [key, ad] : branch.slots) {
                ad.mask = phase2_masks[t].masks.at(key);
                ad.calibrated = true;
                if (opts.rezero_carried_entries) {
                    for (std::size_t k = 0; k < ad.b.size(); ++k) {
                        if (ad.mask.get_flat(k)) ad.b[k] = 0.0;
                    }
                }
            }
            ContinualTaskResult res;
            res.task_id = phase2_data[t].task_id;
            res.phase1_metric_before = before;
            if (phase2_steps > 0) {
                Trainer trainer(model, phase2_cfg);
                TrainResult r = trainer.run(branch, phase2_data[t]);
                res.phase2_final_loss = r.losses.back();
            } else {
                res.phase2_final_loss = evaluate(model, branch, phase2_data[t]).loss;
            }
            // The final adapter's support is everything it carries: the task
            // mask plus the phase-1 mask it continued from.
            for (auto& [key, ad] : branch.slots) {
                BitMask support = ad.mask;
                const BitMask& m1 = phase1_masks->masks.at(key);
                for (std::size_t k = 0; k < support.size(); ++k) {
                    if (m1.get_flat(k)) support.set_flat(k, true);
                }
                ad.mask = support;
            }
            res.phase1_metric_after = evaluate(model, branch, phase1_data).loss;
            res.overlap_with_phase1 = mask_set_overlap(*phase1_masks, phase2_masks[t]);
            run.tasks.push_back(std::move(res));
            run.task_adapters.push_back(std::move(branch));
        }
        run.phase1_adapters = std::move(phase1);
    } else {
        LoraAdapterSet phase1 = init_lora_set(model, opts.rank, opts.alpha,
                                              phase1_data.task_id, opts.adapter_seed);
        {
            Trainer trainer(model, cfg);
            TrainResult r = trainer.run(phase1, phase1_data);
            run.phase1_final_loss = r.losses.back();
        }
        const double before = evaluate(model, phase1, phase1_data).loss;

        for (std::size_t t = 0; t < phase2_data.size(); ++t) {
            LoraAdapterSet branch = phase1;
            branch.task_id = phase2_data[t].task_id;
            ContinualTaskResult res;
            res.task_id = phase2_data[t].task_id;
            res.phase1_metric_before = before;
            if (phase2_steps > 0) {
                Trainer trainer(model, phase2_cfg);
                TrainResult r = trainer.run(branch, phase2_data[t]);
                res.phase2_final_loss = r.losses.back();
            } else {
                res.phase2_final_loss = evaluate(model, branch, phase2_data[t]).loss;
            }
            res.phase1_metric_after = evaluate(model, branch, phase1_data).loss;
            run.tasks.push_back(std::move(res));
            run.task_lora.push_back(std::move(branch));
        }
        run.phase1_lora = std::move(phase1);
    }

    run.completed = true;
    return run;
}

std::vector<ForgettingRow> forgetting_report(const ContinualRun& run) {
    if (!run.completed) {
        throw StateError("forgetting_report: run is not complete");
    }
    std::vector<ForgettingRow> rows;
    rows.reserve(run.tasks.size());
    for (const auto& t : run.tasks) {
        ForgettingRow row;
        row.phase2_task = t.task_id;
        row.phase1_loss_before = t.phase1_metric_before;
        row.phase1_loss_after = t.phase1_metric_after;
        row.delta = t.phase1_metric_after - t.phase1_metric_before;
        row.phase2_final_loss = t.phase2_final_loss;
        rows.push_back(row);
    }
    return rows;
}

double mask_set_overlap(const MaskSet& a, const MaskSet& b) {
    if (a.masks.size() != b.masks.size()) {
        throw DimensionError("mask_set_overlap: " + std::to_string(a.masks.size()) + " vs " +
                             std::to_string(b.masks.size()) + " slots");
    }
    std::size_t both = 0, total = 0;
    for (const auto& [key, ma] : a.masks) {
        auto it = b.masks.find(key);
        if (it == b.masks.end()) {
            throw DimensionError("mask_set_overlap: slot " + key.str() + " missing from rhs");
        }
        both += mask_and(ma, it->second).count();
        total += ma.size();
    }
    return static_cast<double>(both) / static_cast<double>(total);
}

} // namespace lori
