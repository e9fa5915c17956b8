#include "lori/tasks.hpp"

#include <cmath>

namespace lori {

TaskKind task_kind_from_string(std::string_view name) {
    if (name == "linear_regression") return TaskKind::linear_regression;
    if (name == "cluster_classification") return TaskKind::cluster_classification;
    if (name == "sequence_copy") return TaskKind::sequence_copy;
    throw ArgumentError("unknown task kind: " + std::string(name));
}

std::string_view to_string(TaskKind kind) {
    switch (kind) {
    case TaskKind::linear_regression: return "linear_regression";
    case TaskKind::cluster_classification: return "cluster_classification";
    case TaskKind::sequence_copy: return "sequence_copy";
    }
    throw ArgumentError("unknown task kind enum value");
}

Matrix regression_target_map(const TaskSpec& spec, const ToyModel& model) {
    const std::size_t d = model.width;
    RngStream rng(spec.seed, spec.task_id, 0, "regression_map");
    // Rank-2 bump on top of the head map keeps the task close to what the
    // frozen base already computes, with a low-rank residual to learn.
    const double bump = 0.6 / std::sqrt(static_cast<double>(d));
    Matrix u = gaussian(d, 2, rng);
    Matrix v = gaussian(2, d, rng);
    return add(model.head, scale(matmul(u, v), bump));
}

namespace {

void validate(const TaskSpec& spec) {
    if (spec.size < 1) throw ArgumentError("gen_task: size must be >= 1");
    if (spec.noise < 0.0) throw ArgumentError("gen_task: noise must be >= 0");
    if (spec.task_id.empty()) throw ArgumentError("gen_task: task_id must be nonempty");
}

Matrix pooled_rows(const Matrix& x) {
    Matrix p(1, x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) p(0, j) += x(i, j);
    for (std::size_t j = 0; j < x.cols(); ++j) p(0, j) /= static_cast<double>(x.rows());
    return p;
}

} // namespace

TaskDataset gen_task(const TaskSpec& spec, const ToyModel& model) {
    validate(spec);
    const std::size_t d = model.width;
    const std::size_t seq = model.seq_len;

    TaskDataset ds;
    ds.task_id = spec.task_id;
    ds.inputs.reserve(spec.size);

    switch (spec.kind) {
    case TaskKind::linear_regression: {
        ds.loss_kind = LossKind::mse;
        const Matrix w_star = regression_target_map(spec, model);
        RngStream rng(spec.seed, spec.task_id, 100 + spec.split, "regression_data");
        for (std::size_t i = 0; i < spec.size; ++i) {
            Matrix x = gaussian(seq, d, rng);
            Matrix y = matmul(pooled_rows(x), w_star);
            if (spec.noise > 0.0) {
                for (std::size_t j = 0; j < y.size(); ++j) y[j] += spec.noise * rng.normal();
            }
            ds.inputs.push_back(std::move(x));
            ds.targets.push_back(std::move(y));
        }
        break;
    }
    case TaskKind::cluster_classification: {
        ds.loss_kind = LossKind::cross_entropy;
        ds.n_classes = kClusterClasses;
        RngStream mean_rng(spec.seed, spec.task_id, 2, "cluster_means");
        std::vector<Matrix> means;
        for (std::size_t c = 0; c < kClusterClasses; ++c) {
            Matrix mu = gaussian(1, d, mean_rng);
            const double norm = frob_norm(mu);
            means.push_back(scale(mu, 2.0 / norm));
        }
        RngStream rng(spec.seed, spec.task_id, 100 + spec.split, "cluster_data");
        for (std::size_t i = 0; i < spec.size; ++i) {
            const int label = static_cast<int>(i % kClusterClasses);
            Matrix x(seq, d);
            for (std::size_t p = 0; p < seq; ++p)
                for (std::size_t j = 0; j < d; ++j)
                    x(p, j) = means[static_cast<std::size_t>(label)](0, j) + spec.noise * rng.normal();
            ds.inputs.push_back(std::move(x));
            ds.labels.push_back(label);
        }
        break;
    }
    case TaskKind::sequence_copy: {
        if (seq < 2) throw ArgumentError("gen_task: sequence_copy needs seq_len >= 2");
        ds.loss_kind = LossKind::mse;
        RngStream rng(spec.seed, spec.task_id, 100 + spec.split, "copy_data");
        for (std::size_t i = 0; i < spec.size; ++i) {
            Matrix x = gaussian(seq, d, rng);
            const auto pos = static_cast<std::size_t>(rng.below(seq));
            for (std::size_t p = 0; p < seq; ++p) x(p, 0) = 0.0;
            x(pos, 0) = kCopyFlag;
            Matrix y(1, d);
            for (std::size_t j = 0; j < d; ++j) {
                y(0, j) = x(pos, j);
                if (spec.noise > 0.0) y(0, j) += spec.noise * rng.normal();
            }
            ds.inputs.push_back(std::move(x));
            ds.targets.push_back(std::move(y));
        }
        break;
    }
    }
    return ds;
}

} // namespace lori
