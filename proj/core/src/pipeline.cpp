#include "lori/pipeline.hpp"

#include <cinttypes>
#include <cstdio>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "lori/continual.hpp"
#include "lori/csv.hpp"
#include "lori/ortho.hpp"
#include "lori/serialize.hpp"

namespace lori {

std::string csv_format(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
    : columns_(header.size()) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    out_.open(path, std::ios::trunc);
    if (!out_) throw Error("cannot write " + path.string());
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (i) out_ << ',';
        out_ << header[i];
    }
    out_ << '\n';
}

void CsvWriter::row(std::initializer_list<CsvValue> values) {
    if (values.size() != columns_) {
        throw ArgumentError("csv row has " + std::to_string(values.size()) + " values, header has " +
                            std::to_string(columns_));
    }
    bool first = true;
    for (const CsvValue& v : values) {
        if (!first) out_ << ',';
        first = false;
        std::visit(
            [&](const auto& x) {
                using T = std::decay_t<decltype(x)>;
                if constexpr (std::is_same_v<T, double>) {
                    out_ << csv_format(x);
                } else {
                    out_ << x;
                }
            },
            v);
    }
    out_ << '\n';
}

namespace {

using nlohmann::json;

struct Stage {
    const ExperimentConfig& cfg;
    PipelineResult& result;

    std::filesystem::path report(const std::string& name) const {
        auto p = cfg.out_dir / "reports" / name;
        result.reports.push_back(p);
        return p;
    }
};

std::filesystem::path adapter_path(const ExperimentConfig& cfg, const std::string& task_id,
                                   const SlotKey& key) {
    return cfg.out_dir / "adapters" / task_id / (key.str() + ".lori");
}

void save_adapter_set(const ExperimentConfig& cfg, const AdapterSet& set,
                      PipelineResult& result) {
    for (const auto& [key, ad] : set.slots) {
        AdapterFileInfo info;
        info.kind = "lori";
        info.slot = key;
        info.seed = cfg.seed;
        info.sparsity = cfg.sparsity.s;
        info.granularity = std::string(to_string(cfg.sparsity.granularity));
        info.calibration_steps = cfg.sparsity.calibration_steps;
        const auto path = adapter_path(cfg, set.task_id, key);
        save_adapter(ad, path, info);
        result.artifacts.push_back(path);
    }
}

void save_lora_set(const ExperimentConfig& cfg, const LoraAdapterSet& set,
                   PipelineResult& result) {
    for (const auto& [key, ad] : set.slots) {
        LoriAdapter view;
        view.shape = ad.shape;
        view.a = ad.a;
        view.b = ad.b;
        view.mask = BitMask::ones(ad.shape.r, ad.shape.d_out);
        view.alpha = ad.alpha;
        view.task_id = ad.task_id;
        view.stream = ad.stream;
        AdapterFileInfo info;
        info.kind = "lora";
        info.slot = key;
        info.seed = cfg.seed;
        const auto path = adapter_path(cfg, set.task_id, key);
        save_adapter(view, path, info);
        result.artifacts.push_back(path);
    }
}

void write_manifest(const ExperimentConfig& cfg) {
    json m;
    m["config"] = json::parse(canonical_config(cfg));
    m["config_hash"] = config_hash(cfg);
    m["tool"] = "lori/0.1.0";
    m["adapter_format_version"] = kAdapterFormatVersion;
    m["model_format_version"] = kModelFormatVersion;
    std::filesystem::create_directories(cfg.out_dir);
    std::ofstream out(cfg.out_dir / "manifest.json", std::ios::trunc);
    if (!out) throw Error("cannot write manifest");
    out << m.dump(2) << '\n';
}

void require_tasks(const ExperimentConfig& cfg) {
    if (cfg.tasks.empty()) {
        throw ConfigError("this pipeline needs at least one task");
    }
}

/// Calibrate (LoRI) and train one task; returns the trained set.
AdapterSet run_lori_task(const ExperimentConfig& cfg, const ToyModel& model,
                         const TaskDataset& data, double sparsity, TrainResult* curve) {
    AdapterSet set = init_adapter_set(model, cfg.adapter.rank, cfg.adapter.alpha, data.task_id,
                                      cfg.seed);
    SparsityConfig scfg = cfg.sparsity;
    scfg.s = sparsity;
    calibrate(model, set, data, scfg, cfg.train);
    TrainResult r = train_adapter(model, set, data, cfg.train);
    if (curve) *curve = std::move(r);
    return set;
}

LoraAdapterSet run_lora_task(const ExperimentConfig& cfg, const ToyModel& model,
                             const TaskDataset& data, TrainResult* curve) {
    LoraAdapterSet set = init_lora_set(model, cfg.adapter.rank, cfg.adapter.alpha, data.task_id,
                                       cfg.seed);
    TrainResult r = train_lora_baseline(model, set, data, cfg.train);
    if (curve) *curve = std::move(r);
    return set;
}

void eval_row(CsvWriter& csv, const std::string& task, const std::string& variant,
              const EvalResult& r) {
    csv.row({task, variant, r.loss, r.accuracy ? csv_format(*r.accuracy) : std::string("")});
}

void stage_calibrate(Stage st, const ToyModel& model) {
    require_tasks(st.cfg);
    CsvWriter profile(st.report("calibration.csv"),
                      {"task", "slot", "retained", "total", "fraction"});
    CsvWriter taus(st.report("thresholds.csv"), {"task", "scope", "tau"});
    for (const TaskSpec& spec : st.cfg.tasks) {
        const TaskDataset data = gen_task(spec, model);
        AdapterSet set = init_adapter_set(model, st.cfg.adapter.rank, st.cfg.adapter.alpha,
                                          data.task_id, st.cfg.seed);
        const MaskSet masks = calibrate(model, set, data, st.cfg.sparsity, st.cfg.train);
        const CalibrationReport rep = sparsity_profile(masks);
        for (const SlotProfile& p : rep.per_slot) {
            profile.row({data.task_id, p.slot.str(), p.retained, p.total, p.fraction()});
        }
        for (const auto& [scope, tau] : rep.thresholds) {
            taus.row({data.task_id, scope, tau});
        }
        save_adapter_set(st.cfg, set, st.result);
    }
}

void stage_train(Stage st, const ToyModel& model) {
    require_tasks(st.cfg);
    CsvWriter losses(st.report("train_losses.csv"), {"task", "step", "loss"});
    CsvWriter eval_csv(st.report("eval.csv"), {"task", "variant", "loss", "accuracy"});
    for (const TaskSpec& spec : st.cfg.tasks) {
        const TaskDataset data = gen_task(spec, model);
        TrainResult curve;
        if (st.cfg.adapter.kind == "lora") {
            LoraAdapterSet set = run_lora_task(st.cfg, model, data, &curve);
            save_lora_set(st.cfg, set, st.result);
            eval_row(eval_csv, data.task_id, "lora", evaluate(model, set, data));
        } else {
            AdapterSet set = run_lori_task(st.cfg, model, data, st.cfg.sparsity.s, &curve);
            save_adapter_set(st.cfg, set, st.result);
            eval_row(eval_csv, data.task_id,
                     st.cfg.sparsity.s > 0.0 ? "lori_s" : "lori_d",
                     evaluate(model, set, data));
        }
        for (std::size_t i = 0; i < curve.losses.size(); ++i) {
            losses.row({data.task_id, i + 1, curve.losses[i]});
        }
    }
}

AdapterSet load_adapter_set(const std::filesystem::path& dir, const ToyModel& model) {
    AdapterSet set;
    bool first = true;
    for (const SlotKey& key : model.slot_keys()) {
        const auto path = dir / (key.str() + ".lori");
        if (!std::filesystem::exists(path)) {
            throw FileFormatError("missing adapter file " + path.string());
        }
        LoadedAdapter loaded = load_adapter(path);
        if (first) {
            set.task_id = loaded.adapter.task_id;
            set.alpha = loaded.adapter.alpha;
            set.rank = loaded.adapter.shape.r;
            first = false;
        }
        set.slots.emplace(key, std::move(loaded.adapter));
    }
    return set;
}

void stage_eval(Stage st, const ToyModel& model) {
    require_tasks(st.cfg);
    if (!st.cfg.adapters_dir) {
        throw ConfigError("eval pipeline needs adapters_dir");
    }
    CsvWriter eval_csv(st.report("eval.csv"), {"task", "variant", "loss", "accuracy"});
    for (const TaskSpec& spec : st.cfg.tasks) {
        const TaskDataset data = gen_task(spec, model);
        const AdapterSet set = load_adapter_set(*st.cfg.adapters_dir / spec.task_id, model);
        eval_row(eval_csv, data.task_id, "adapter", evaluate(model, set, data));
        eval_row(eval_csv, data.task_id, "base", evaluate_base(model, data));
    }
}

void stage_sweep(Stage st, const ToyModel& model) {
    require_tasks(st.cfg);
    CsvWriter sweep(st.report("sweep.csv"), {"s", "task", "loss", "accuracy"});
    for (double s : st.cfg.sweep_sparsities) {
        for (const TaskSpec& spec : st.cfg.tasks) {
            const TaskDataset data = gen_task(spec, model);
            AdapterSet set = run_lori_task(st.cfg, model, data, s, nullptr);
            const EvalResult r = evaluate(model, set, data);
            sweep.row({s, data.task_id, r.loss,
                       r.accuracy ? csv_format(*r.accuracy) : std::string("")});
        }
    }
}

void stage_merge(Stage st, const ToyModel& model) {
    require_tasks(st.cfg);
    std::vector<TaskDataset> datasets;
    std::vector<AdapterFactors> factors;
    for (const TaskSpec& spec : st.cfg.tasks) {
        datasets.push_back(gen_task(spec, model));
        if (st.cfg.adapters_dir) {
            factors.push_back(scaled_factors(
                load_adapter_set(*st.cfg.adapters_dir / spec.task_id, model)));
        } else if (st.cfg.adapter.kind == "lora") {
            factors.push_back(
                scaled_factors(run_lora_task(st.cfg, model, datasets.back(), nullptr)));
        } else {
            factors.push_back(scaled_factors(
                run_lori_task(st.cfg, model, datasets.back(), st.cfg.sparsity.s, nullptr)));
        }
    }

    MergeSpec spec = st.cfg.merge;
    spec.validate(factors.size());
    const MergedModel merged = merge(model, factors, spec);
    const auto model_path = st.cfg.out_dir / "merged" / "model.lorm";
    save_merged_model(merged, model_path);
    st.result.artifacts.push_back(model_path);

    const InterferenceReport rep =
        interference(model, merged, factors, datasets, spec.weights);
    CsvWriter icsv(st.report("interference.csv"),
                   {"method", "task", "merged_loss", "single_loss", "excess_loss"});
    for (std::size_t t = 0; t < rep.task_ids.size(); ++t) {
        icsv.row({std::string(to_string(spec.method)), rep.task_ids[t], rep.merged_loss[t],
                  rep.single_loss[t], rep.excess_loss[t]});
    }
    CsvWriter pcsv(st.report("inner_products.csv"), {"task_s", "task_t", "value", "defined"});
    for (std::size_t s = 0; s < rep.inner.task_ids.size(); ++s) {
        for (std::size_t t = 0; t < rep.inner.task_ids.size(); ++t) {
            pcsv.row({rep.inner.task_ids[s], rep.inner.task_ids[t], rep.inner.values(s, t),
                      std::string(rep.inner.defined[s][t] ? "yes" : "no")});
        }
    }
}

void stage_ortho(Stage st) {
    CsvWriter csv(st.report("ortho.csv"), {"d_in", "mean", "std", "bound", "satisfaction"});
    const auto curve = decay_sweep(st.cfg.ortho.rank, st.cfg.ortho.d_in_list,
                                   st.cfg.ortho.trials, st.cfg.seed);
    for (const DecayPoint& p : curve) {
        const GramReport gram = gram_trials(st.cfg.ortho.rank, p.d_in, st.cfg.ortho.delta,
                                            st.cfg.ortho.trials, st.cfg.seed);
        csv.row({p.d_in, p.mean, p.stddev, gram.bound, gram.satisfaction});
    }
}

void stage_continual(Stage st, const ToyModel& model) {
    require_tasks(st.cfg);
    if (st.cfg.continual.phase1_task.empty()) {
        throw ConfigError("continual pipeline needs continual.phase1_task");
    }

    const TaskDataset* phase1 = nullptr;
    std::vector<TaskDataset> datasets;
    for (const TaskSpec& spec : st.cfg.tasks) datasets.push_back(gen_task(spec, model));
    std::vector<const TaskDataset*> phase2;
    for (const TaskDataset& d : datasets) {
        if (d.task_id == st.cfg.continual.phase1_task) {
            phase1 = &d;
        } else {
            phase2.push_back(&d);
        }
    }
    if (!phase1) {
        throw ConfigError("continual.phase1_task '" + st.cfg.continual.phase1_task +
                          "' is not one of the configured tasks");
    }
    if (phase2.empty()) {
        throw ConfigError("continual pipeline needs at least one phase-2 task");
    }

    ContinualOptions opts;
    opts.kind = st.cfg.adapter.kind == "lora" ? ContinualKind::lora : ContinualKind::lori;
    opts.rank = st.cfg.adapter.rank;
    opts.alpha = st.cfg.adapter.alpha;
    opts.adapter_seed = st.cfg.seed;
    opts.rezero_carried_entries = st.cfg.continual.rezero_carried_entries;

    // Masks are calibrated once per task on shared-A adapters, then reused.
    std::map<std::string, MaskSet> masks;
    if (opts.kind == ContinualKind::lori) {
        for (const TaskDataset& d : datasets) {
            AdapterSet set = init_shared_a_adapter_set(model, opts.rank, opts.alpha, d.task_id,
                                                       st.cfg.seed);
            masks.emplace(d.task_id, calibrate(model, set, d, st.cfg.sparsity, st.cfg.train));
        }
    }

    std::vector<TaskDataset> phase2_data;
    std::vector<MaskSet> phase2_masks;
    for (const TaskDataset* d : phase2) {
        phase2_data.push_back(*d);
        if (opts.kind == ContinualKind::lori) phase2_masks.push_back(masks.at(d->task_id));
    }

    const ContinualRun run =
        two_phase(model, st.cfg.train, *phase1,
                  opts.kind == ContinualKind::lori ? &masks.at(phase1->task_id) : nullptr,
                  phase2_data, phase2_masks, opts);

    CsvWriter csv(st.report("forgetting.csv"),
                  {"phase2_task", "phase1_loss_before", "phase1_loss_after", "delta",
                   "phase2_final_loss", "mask_overlap"});
    const auto rows = forgetting_report(run);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        csv.row({rows[i].phase2_task, rows[i].phase1_loss_before, rows[i].phase1_loss_after,
                 rows[i].delta, rows[i].phase2_final_loss, run.tasks[i].overlap_with_phase1});
    }
}

} // namespace

PipelineResult run_pipeline(const ExperimentConfig& cfg) {
    PipelineResult result;
    result.out_dir = cfg.out_dir;
    const std::string stage_name(to_string(cfg.pipeline));
    try {
        std::filesystem::create_directories(cfg.out_dir);
        write_manifest(cfg);
        const ToyModel model = build_toy_model(cfg.model.layers, cfg.model.width,
                                               cfg.model.seq_len, cfg.model.seed);
        Stage st{cfg, result};
        switch (cfg.pipeline) {
        case PipelineKind::calibrate: stage_calibrate(st, model); break;
        case PipelineKind::train: stage_train(st, model); break;
        case PipelineKind::eval: stage_eval(st, model); break;
        case PipelineKind::sweep: stage_sweep(st, model); break;
        case PipelineKind::merge: stage_merge(st, model); break;
        case PipelineKind::ortho: stage_ortho(st); break;
        case PipelineKind::continual: stage_continual(st, model); break;
        }
    } catch (const ConfigError& e) {
        throw ConfigError("stage '" + stage_name + "' failed (config " + config_hash(cfg) +
                          "): " + e.what());
    } catch (const TrainingError& e) {
        throw TrainingError("stage '" + stage_name + "' failed (config " + config_hash(cfg) +
                            "): " + e.what(),
                            e.step());
    } catch (const FileFormatError& e) {
        throw FileFormatError("stage '" + stage_name + "' failed (config " + config_hash(cfg) +
                              "): " + e.what());
    } catch (const Error& e) {
        throw Error("stage '" + stage_name + "' failed (config " + config_hash(cfg) +
                    "): " + e.what());
    }
    return result;
}

} // namespace lori
