#include "lori/config.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace lori {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> allowed,
                         const std::string& where) {
    for (const auto& [key, _] : obj.items()) {
        bool ok = false;
        for (const char* a : allowed) {
            if (key == a) {
                ok = true;
                break;
            }
        }
        if (!ok) {
            throw ConfigError("unknown key '" + key + "' in " + where);
        }
    }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("bad value for '" + std::string(key) + "': " + e.what());
    }
}

template <typename T>
T require(const json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key)) {
        throw ConfigError("missing required key '" + std::string(key) + "' in " + where);
    }
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("bad value for '" + std::string(key) + "': " + e.what());
    }
}

} // namespace

PipelineKind pipeline_from_string(std::string_view name) {
    if (name == "calibrate") return PipelineKind::calibrate;
    if (name == "train") return PipelineKind::train;
    if (name == "eval") return PipelineKind::eval;
    if (name == "sweep") return PipelineKind::sweep;
    if (name == "merge") return PipelineKind::merge;
    if (name == "ortho") return PipelineKind::ortho;
    if (name == "continual") return PipelineKind::continual;
    throw ConfigError("unknown pipeline: " + std::string(name));
}

std::string_view to_string(PipelineKind p) {
    switch (p) {
    case PipelineKind::calibrate: return "calibrate";
    case PipelineKind::train: return "train";
    case PipelineKind::eval: return "eval";
    case PipelineKind::sweep: return "sweep";
    case PipelineKind::merge: return "merge";
    case PipelineKind::ortho: return "ortho";
    case PipelineKind::continual: return "continual";
    }
    throw ConfigError("unknown pipeline enum value");
}

ExperimentConfig parse_config_text(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!root.is_object()) throw ConfigError("config root must be an object");

    reject_unknown_keys(root,
                        {"pipeline", "seed", "out_dir", "model", "adapter", "tasks", "sparsity",
                         "train", "merge", "sweep", "ortho", "continual", "adapters_dir"},
                        "config root");

    ExperimentConfig cfg;
    if (root.contains("pipeline")) {
        cfg.pipeline = pipeline_from_string(require<std::string>(root, "pipeline", "config root"));
    }
    cfg.seed = get_or<std::uint64_t>(root, "seed", cfg.seed);
    cfg.out_dir = get_or<std::string>(root, "out_dir", cfg.out_dir.string());
    if (root.contains("adapters_dir")) {
        cfg.adapters_dir = std::filesystem::path(require<std::string>(root, "adapters_dir",
                                                                      "config root"));
    }

    if (root.contains("model")) {
        const json& m = root.at("model");
        reject_unknown_keys(m, {"layers", "width", "seq_len", "seed"}, "model");
        cfg.model.layers = get_or<int>(m, "layers", cfg.model.layers);
        cfg.model.width = get_or<std::size_t>(m, "width", cfg.model.width);
        cfg.model.seq_len = get_or<std::size_t>(m, "seq_len", cfg.model.seq_len);
        cfg.model.seed = get_or<std::uint64_t>(m, "seed", cfg.model.seed);
    }

    if (root.contains("adapter")) {
        const json& a = root.at("adapter");
        reject_unknown_keys(a, {"rank", "alpha", "kind"}, "adapter");
        cfg.adapter.rank = get_or<std::size_t>(a, "rank", cfg.adapter.rank);
        cfg.adapter.alpha = get_or<double>(a, "alpha", default_alpha(cfg.adapter.rank));
        cfg.adapter.kind = get_or<std::string>(a, "kind", cfg.adapter.kind);
        if (cfg.adapter.kind != "lori" && cfg.adapter.kind != "lora") {
            throw ConfigError("adapter.kind must be 'lori' or 'lora', got '" + cfg.adapter.kind +
                              "'");
        }
    } else {
        cfg.adapter.alpha = default_alpha(cfg.adapter.rank);
    }

    if (root.contains("tasks")) {
        if (!root.at("tasks").is_array()) throw ConfigError("tasks must be an array");
        for (const json& t : root.at("tasks")) {
            reject_unknown_keys(t, {"kind", "size", "noise", "seed", "task_id"}, "task");
            TaskSpec spec;
            spec.kind = task_kind_from_string(require<std::string>(t, "kind", "task"));
            spec.size = require<std::size_t>(t, "size", "task");
            spec.noise = get_or<double>(t, "noise", 0.0);
            spec.seed = get_or<std::uint64_t>(t, "seed", cfg.seed);
            spec.task_id = require<std::string>(t, "task_id", "task");
            cfg.tasks.push_back(std::move(spec));
        }
    }

    if (root.contains("sparsity")) {
        const json& s = root.at("sparsity");
        reject_unknown_keys(s, {"s", "granularity", "calibration_steps"}, "sparsity");
        cfg.sparsity.s = get_or<double>(s, "s", cfg.sparsity.s);
        cfg.sparsity.granularity =
            granularity_from_string(get_or<std::string>(s, "granularity", "model"));
        cfg.sparsity.calibration_steps =
            get_or<std::int64_t>(s, "calibration_steps", cfg.sparsity.calibration_steps);
        cfg.sparsity.validate();
    }

    if (root.contains("train")) {
        const json& t = root.at("train");
        reject_unknown_keys(t, {"lr", "steps", "batch_size", "seed", "optimizer"}, "train");
        cfg.train.lr = get_or<double>(t, "lr", cfg.train.lr);
        cfg.train.steps = get_or<std::int64_t>(t, "steps", cfg.train.steps);
        cfg.train.batch_size = get_or<std::size_t>(t, "batch_size", cfg.train.batch_size);
        cfg.train.seed = get_or<std::uint64_t>(t, "seed", cfg.seed);
        if (t.contains("optimizer")) {
            const json& o = t.at("optimizer");
            reject_unknown_keys(o, {"type", "beta1", "beta2", "eps", "weight_decay"},
                                "train.optimizer");
            const std::string type = require<std::string>(o, "type", "train.optimizer");
            if (type == "sgd") {
                cfg.train.optimizer = OptimizerKind::sgd;
            } else if (type == "adamw") {
                cfg.train.optimizer = OptimizerKind::adamw;
            } else {
                throw ConfigError("optimizer.type must be 'sgd' or 'adamw', got '" + type + "'");
            }
            cfg.train.beta1 = get_or<double>(o, "beta1", cfg.train.beta1);
            cfg.train.beta2 = get_or<double>(o, "beta2", cfg.train.beta2);
            cfg.train.eps = get_or<double>(o, "eps", cfg.train.eps);
            cfg.train.weight_decay = get_or<double>(o, "weight_decay", cfg.train.weight_decay);
        }
        cfg.train.validate();
    } else {
        cfg.train.seed = cfg.seed;
    }

    if (root.contains("merge")) {
        const json& m = root.at("merge");
        reject_unknown_keys(m, {"method", "weights", "density", "seed"}, "merge");
        cfg.merge.method = merge_method_from_string(get_or<std::string>(m, "method", "concat"));
        if (m.contains("weights")) {
            cfg.merge.weights = require<std::vector<double>>(m, "weights", "merge");
            cfg.merge_weights_given = true;
        }
        cfg.merge.density = get_or<double>(m, "density", cfg.merge.density);
        cfg.merge.seed = get_or<std::uint64_t>(m, "seed", cfg.seed);
    } else {
        cfg.merge.seed = cfg.seed;
    }

    if (root.contains("sweep")) {
        const json& s = root.at("sweep");
        reject_unknown_keys(s, {"sparsities"}, "sweep");
        cfg.sweep_sparsities = require<std::vector<double>>(s, "sparsities", "sweep");
        if (cfg.sweep_sparsities.empty()) throw ConfigError("sweep.sparsities must be nonempty");
    }

    if (root.contains("ortho")) {
        const json& o = root.at("ortho");
        reject_unknown_keys(o, {"rank", "d_in_list", "trials", "delta"}, "ortho");
        cfg.ortho.rank = get_or<std::size_t>(o, "rank", cfg.ortho.rank);
        if (o.contains("d_in_list")) {
            cfg.ortho.d_in_list = require<std::vector<std::size_t>>(o, "d_in_list", "ortho");
        }
        cfg.ortho.trials = get_or<std::size_t>(o, "trials", cfg.ortho.trials);
        cfg.ortho.delta = get_or<double>(o, "delta", cfg.ortho.delta);
    }

    if (root.contains("continual")) {
        const json& c = root.at("continual");
        reject_unknown_keys(c, {"phase1_task", "rezero_carried_entries"}, "continual");
        cfg.continual.phase1_task = require<std::string>(c, "phase1_task", "continual");
        cfg.continual.rezero_carried_entries =
            get_or<bool>(c, "rezero_carried_entries", false);
    }

    // Uniform default merge weights per the reference configurations:
    // 0.4 dense, 0.3 sparse.
    if (!cfg.merge_weights_given && !cfg.tasks.empty()) {
        const double w = cfg.sparsity.s > 0.0 ? 0.3 : 0.4;
        cfg.merge.weights.assign(cfg.tasks.size(), w);
    }

    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

std::string canonical_config(const ExperimentConfig& cfg) {
    json root;
    root["pipeline"] = std::string(to_string(cfg.pipeline));
    root["seed"] = cfg.seed;
    root["out_dir"] = cfg.out_dir.string();
    if (cfg.adapters_dir) root["adapters_dir"] = cfg.adapters_dir->string();
    root["model"] = {{"layers", cfg.model.layers},
                     {"width", cfg.model.width},
                     {"seq_len", cfg.model.seq_len},
                     {"seed", cfg.model.seed}};
    root["adapter"] = {{"rank", cfg.adapter.rank},
                       {"alpha", cfg.adapter.alpha},
                       {"kind", cfg.adapter.kind}};
    json tasks = json::array();
    for (const TaskSpec& t : cfg.tasks) {
        tasks.push_back({{"kind", std::string(to_string(t.kind))},
                         {"size", t.size},
                         {"noise", t.noise},
                         {"seed", t.seed},
                         {"task_id", t.task_id}});
    }
    root["tasks"] = tasks;
    root["sparsity"] = {{"s", cfg.sparsity.s},
                        {"granularity", std::string(to_string(cfg.sparsity.granularity))},
                        {"calibration_steps", cfg.sparsity.calibration_steps}};
    root["train"] = {
        {"lr", cfg.train.lr},
        {"steps", cfg.train.steps},
        {"batch_size", cfg.train.batch_size},
        {"seed", cfg.train.seed},
        {"optimizer",
         {{"type", cfg.train.optimizer == OptimizerKind::sgd ? "sgd" : "adamw"},
          {"beta1", cfg.train.beta1},
          {"beta2", cfg.train.beta2},
          {"eps", cfg.train.eps},
          {"weight_decay", cfg.train.weight_decay}}}};
    root["merge"] = {{"method", std::string(to_string(cfg.merge.method))},
                     {"weights", cfg.merge.weights},
                     {"density", cfg.merge.density},
                     {"seed", cfg.merge.seed}};
    root["sweep"] = {{"sparsities", cfg.sweep_sparsities}};
    root["ortho"] = {{"rank", cfg.ortho.rank},
                     {"d_in_list", cfg.ortho.d_in_list},
                     {"trials", cfg.ortho.trials},
                     {"delta", cfg.ortho.delta}};
    root["continual"] = {{"phase1_task", cfg.continual.phase1_task},
                         {"rezero_carried_entries", cfg.continual.rezero_carried_entries}};
    return root.dump(2);
}

std::string config_hash(const ExperimentConfig& cfg) {
    const std::string text = canonical_config(cfg);
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    std::ostringstream out;
    out << std::hex << h;
    return out.str();
}

} // namespace lori
