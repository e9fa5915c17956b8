#include "lori/merge.hpp"

#include <algorithm>
#include <cmath>

#include "lori/mask_calibration.hpp"
#include "lori/training.hpp"

namespace lori {

MergeMethod merge_method_from_string(std::string_view name) {
    if (name == "concat") return MergeMethod::concat;
    if (name == "linear") return MergeMethod::linear;
    if (name == "magnitude") return MergeMethod::magnitude;
    if (name == "ties") return MergeMethod::ties;
    if (name == "dare") return MergeMethod::dare;
    throw ArgumentError("unknown merge method: " + std::string(name));
}

std::string_view to_string(MergeMethod m) {
    switch (m) {
    case MergeMethod::concat: return "concat";
    case MergeMethod::linear: return "linear";
    case MergeMethod::magnitude: return "magnitude";
    case MergeMethod::ties: return "ties";
    case MergeMethod::dare: return "dare";
    }
    throw ArgumentError("unknown merge method enum value");
}

void MergeSpec::validate(std::size_t n_adapters) const {
    if (weights.size() != n_adapters) {
        throw MergeError("merge spec: " + std::to_string(weights.size()) + " weights for " +
                         std::to_string(n_adapters) + " adapters");
    }
    for (double w : weights) {
        if (!std::isfinite(w)) throw MergeError("merge spec: non-finite weight");
    }
    if (!(density > 0.0 && density <= 1.0)) {
        throw MergeError("merge spec: density must be in (0, 1], got " + std::to_string(density));
    }
}

namespace {

void check_conformal(const ToyModel& base, std::span<const AdapterFactors> adapters,
                     std::span<const double> weights) {
    if (adapters.empty()) throw MergeError("merge: no adapters");
    if (weights.size() != adapters.size()) {
        throw MergeError("merge: " + std::to_string(weights.size()) + " weights for " +
                         std::to_string(adapters.size()) + " adapters");
    }
    for (const auto& f : adapters) {
        for (const auto& [key, w0] : base.w0) {
            auto ia = f.a.find(key);
            auto ib = f.b.find(key);
            if (ia == f.a.end() || ib == f.b.end()) {
                throw MergeError("merge: adapter '" + f.task_id + "' missing slot " + key.str());
            }
            if (ia->second.rows() != w0.rows() || ib->second.cols() != w0.cols() ||
                ia->second.cols() != ib->second.rows()) {
                throw MergeError("merge: adapter '" + f.task_id + "' slot " + key.str() +
                                 " factors " + ia->second.shape_str() + " * " +
                                 ib->second.shape_str() + " do not produce " + w0.shape_str());
            }
        }
    }
    // All adapters must share per-slot factor shapes.
    const AdapterFactors& first = adapters.front();
    for (const auto& f : adapters.subspan(1)) {
        for (const auto& [key, a0] : first.a) {
            if (!f.a.at(key).same_shape(a0)) {
                throw MergeError("merge: rank mismatch at slot " + key.str() + " between '" +
                                 first.task_id + "' and '" + f.task_id + "'");
            }
        }
    }
}

MergedModel make_result(const ToyModel& base, std::span<const AdapterFactors> adapters,
                        MergeSpec spec, std::map<SlotKey, Matrix> weights) {
    MergedModel m;
    m.weights = std::move(weights);
    m.spec = std::move(spec);
    for (const auto& f : adapters) m.adapter_ids.push_back(f.task_id);
    (void)base;
    return m;
}

/// W0 + sum_t alpha_t * (A_t b_t), deltas optionally transformed per adapter.
template <typename FactorFn>
std::map<SlotKey, Matrix> weighted_delta_sum(const ToyModel& base,
                                             std::span<const AdapterFactors> adapters,
                                             std::span<const double> weights,
                                             FactorFn&& factor_of) {
    std::map<SlotKey, Matrix> out;
    for (const auto& [key, w0] : base.w0) {
        Matrix acc = w0;
        for (std::size_t t = 0; t < adapters.size(); ++t) {
            auto [a, b] = factor_of(adapters[t], t, key);
            acc = add(acc, scale(matmul(a, b), weights[t]));
        }
        out.emplace(key, std::move(acc));
    }
    return out;
}

} // namespace

MergedModel merge_concat(const ToyModel& base, std::span<const AdapterFactors> adapters,
                         std::span<const double> weights) {
    check_conformal(base, adapters, weights);
    auto out = weighted_delta_sum(base, adapters, weights,
                                  [](const AdapterFactors& f, std::size_t, const SlotKey& key) {
                                      return std::pair<const Matrix&, const Matrix&>(
                                          f.a.at(key), f.b.at(key));
                                  });
    MergeSpec spec{MergeMethod::concat, {weights.begin(), weights.end()}, 1.0, 0};
    return make_result(base, adapters, std::move(spec), std::move(out));
}

MergedModel merge_concat_product(const ToyModel& base, std::span<const AdapterFactors> adapters,
                                 std::span<const double> weights) {
    check_conformal(base, adapters, weights);
    std::map<SlotKey, Matrix> out;
    for (const auto& [key, w0] : base.w0) {
        const std::size_t d_in = w0.rows();
        const std::size_t d_out = w0.cols();
        std::size_t total_rank = 0;
        for (const auto& f : adapters) total_rank += f.a.at(key).cols();

        Matrix a_cat(d_in, total_rank);
        Matrix b_cat(total_rank, d_out);
        std::size_t col0 = 0;
        for (std::size_t t = 0; t < adapters.size(); ++t) {
            const Matrix& a = adapters[t].a.at(key);
            const Matrix& b = adapters[t].b.at(key);
            for (std::size_t i = 0; i < d_in; ++i)
                for (std::size_t j = 0; j < a.cols(); ++j)
                    a_cat(i, col0 + j) = weights[t] * a(i, j);
            for (std::size_t i = 0; i < b.rows(); ++i)
                for (std::size_t j = 0; j < d_out; ++j) b_cat(col0 + i, j) = b(i, j);
            col0 += a.cols();
        }
        out.emplace(key, add(w0, matmul(a_cat, b_cat)));
    }
    MergeSpec spec{MergeMethod::concat, {weights.begin(), weights.end()}, 1.0, 0};
    return make_result(base, adapters, std::move(spec), std::move(out));
}

MergedModel merge_linear(const ToyModel& base, std::span<const AdapterFactors> adapters,
                         std::span<const double> weights) {
    check_conformal(base, adapters, weights);
    std::map<SlotKey, Matrix> out;
    for (const auto& [key, w0] : base.w0) {
        Matrix a_sum = scale(adapters[0].a.at(key), weights[0]);
        Matrix b_sum = scale(adapters[0].b.at(key), weights[0]);
        for (std::size_t t = 1; t < adapters.size(); ++t) {
            a_sum = add(a_sum, scale(adapters[t].a.at(key), weights[t]));
            b_sum = add(b_sum, scale(adapters[t].b.at(key), weights[t]));
        }
        out.emplace(key, add(w0, matmul(a_sum, b_sum)));
    }
    MergeSpec spec{MergeMethod::linear, {weights.begin(), weights.end()}, 1.0, 0};
    return make_result(base, adapters, std::move(spec), std::move(out));
}

Matrix prune_by_magnitude(const Matrix& m, double density) {
    if (!(density > 0.0 && density <= 1.0)) {
        throw MergeError("prune_by_magnitude: density must be in (0, 1]");
    }
    if (density == 1.0) return m;
    const std::size_t keep = retention_budget(1.0 - density, m.size());
    std::vector<std::pair<double, std::size_t>> ranked(m.size());
    for (std::size_t k = 0; k < m.size(); ++k) ranked[k] = {std::abs(m[k]), k};
    std::sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) {
        if (x.first != y.first) return x.first > y.first;
        return x.second < y.second;
    });
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < keep; ++i) out[ranked[i].second] = m[ranked[i].second];
    return out;
}

Matrix dare_prune(const Matrix& m, double density, RngStream& stream) {
    if (!(density > 0.0 && density <= 1.0)) {
        throw MergeError("dare_prune: density must be in (0, 1]");
    }
    Matrix out(m.rows(), m.cols());
    for (std::size_t k = 0; k < m.size(); ++k) {
        const bool keep = stream.uniform01() < density;
        out[k] = keep ? m[k] / density : 0.0;
    }
    return out;
}

MergedModel merge_magnitude(const ToyModel& base, std::span<const AdapterFactors> adapters,
                            std::span<const double> weights, double density) {
    check_conformal(base, adapters, weights);
    auto out = weighted_delta_sum(
        base, adapters, weights,
        [&](const AdapterFactors& f, std::size_t, const SlotKey& key) {
            return std::pair<Matrix, Matrix>(prune_by_magnitude(f.a.at(key), density),
                                             prune_by_magnitude(f.b.at(key), density));
        });
    MergeSpec spec{MergeMethod::magnitude, {weights.begin(), weights.end()}, density, 0};
    return make_result(base, adapters, std::move(spec), std::move(out));
}

MergedModel merge_ties(const ToyModel& base, std::span<const AdapterFactors> adapters,
                       std::span<const double> weights, double density) {
    check_conformal(base, adapters, weights);
    std::map<SlotKey, Matrix> out;
    for (const auto& [key, w0] : base.w0) {
        std::vector<Matrix> deltas;
        deltas.reserve(adapters.size());
        for (std::size_t t = 0; t < adapters.size(); ++t) {
            deltas.push_back(scale(matmul(prune_by_magnitude(adapters[t].a.at(key), density),
                                          prune_by_magnitude(adapters[t].b.at(key), density)),
                                   weights[t]));
        }
        Matrix merged(w0.rows(), w0.cols());
        for (std::size_t k = 0; k < merged.size(); ++k) {
            double sum = 0.0;
            for (const Matrix& d : deltas) sum += d[k];
            const double elected = (sum >= 0.0) ? 1.0 : -1.0;  // ties go positive
            double total = 0.0;
            std::size_t n = 0;
            for (const Matrix& d : deltas) {
                if (d[k] != 0.0 && ((d[k] > 0.0) ? 1.0 : -1.0) == elected) {
                    total += d[k];
                    ++n;
                }
            }
            merged[k] = (n > 0) ? total / static_cast<double>(n) : 0.0;
        }
        out.emplace(key, add(w0, merged));
    }
    MergeSpec spec{MergeMethod::ties, {weights.begin(), weights.end()}, density, 0};
    return make_result(base, adapters, std::move(spec), std::move(out));
}

MergedModel merge_dare(const ToyModel& base, std::span<const AdapterFactors> adapters,
                       std::span<const double> weights, double density, std::uint64_t seed) {
    check_conformal(base, adapters, weights);
    auto out = weighted_delta_sum(
        base, adapters, weights,
        [&](const AdapterFactors& f, std::size_t, const SlotKey& key) {
            RngStream sa(seed, f.task_id, static_cast<std::uint64_t>(key.layer),
                         std::string(to_string(key.proj)) + "/dare.a");
            RngStream sb(seed, f.task_id, static_cast<std::uint64_t>(key.layer),
                         std::string(to_string(key.proj)) + "/dare.b");
            return std::pair<Matrix, Matrix>(dare_prune(f.a.at(key), density, sa),
                                             dare_prune(f.b.at(key), density, sb));
        });
    MergeSpec spec{MergeMethod::dare, {weights.begin(), weights.end()}, density, seed};
    return make_result(base, adapters, std::move(spec), std::move(out));
}

MergedModel merge(const ToyModel& base, std::span<const AdapterFactors> adapters,
                  const MergeSpec& spec) {
    spec.validate(adapters.size());
    switch (spec.method) {
    case MergeMethod::concat: return merge_concat(base, adapters, spec.weights);
    case MergeMethod::linear: return merge_linear(base, adapters, spec.weights);
    case MergeMethod::magnitude:
        return merge_magnitude(base, adapters, spec.weights, spec.density);
    case MergeMethod::ties: return merge_ties(base, adapters, spec.weights, spec.density);
    case MergeMethod::dare:
        return merge_dare(base, adapters, spec.weights, spec.density, spec.seed);
    }
    throw MergeError("unknown merge method enum value");
}

PairwiseInner pairwise_delta_inner(std::span<const AdapterFactors> adapters) {
    const std::size_t n = adapters.size();
    std::vector<std::map<SlotKey, Matrix>> deltas;
    deltas.reserve(n);
    for (const auto& f : adapters) deltas.push_back(materialized_deltas(f));

    std::vector<double> norms(n, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
        double sq = 0.0;
        for (const auto& [key, d] : deltas[t]) sq += frob_inner(d, d);
        norms[t] = std::sqrt(sq);
    }

    PairwiseInner out;
    out.values = Matrix(n, n);
    out.defined.assign(n, std::vector<bool>(n, false));
    for (const auto& f : adapters) out.task_ids.push_back(f.task_id);
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t t = 0; t < n; ++t) {
            if (norms[s] == 0.0 || norms[t] == 0.0) continue;  // undefined, stays flagged
            double ip = 0.0;
            for (const auto& [key, d] : deltas[s]) ip += frob_inner(d, deltas[t].at(key));
            out.values(s, t) = ip / (norms[s] * norms[t]);
            out.defined[s][t] = true;
        }
    }
    return out;
}

InterferenceReport interference(const ToyModel& base, const MergedModel& merged,
                                std::span<const AdapterFactors> adapters,
                                std::span<const TaskDataset> datasets,
                                std::span<const double> weights) {
    if (weights.size() != adapters.size()) {
        throw ArgumentError("interference: " + std::to_string(weights.size()) + " weights for " +
                            std::to_string(adapters.size()) + " adapters");
    }
    InterferenceReport report;
    report.inner = pairwise_delta_inner(adapters);
    for (std::size_t t = 0; t < adapters.size(); ++t) {
        const AdapterFactors& f = adapters[t];
        const TaskDataset* data = nullptr;
        for (const auto& d : datasets) {
            if (d.task_id == f.task_id) {
                data = &d;
                break;
            }
        }
        if (!data) {
            throw ArgumentError("interference: no dataset for task '" + f.task_id + "'");
        }
        std::map<SlotKey, Matrix> single;
        for (const auto& [key, w0] : base.w0) {
            single.emplace(key, add(w0, scale(matmul(f.a.at(key), f.b.at(key)), weights[t])));
        }
        const double merged_loss = evaluate_weights(base, merged.weights, *data).loss;
        const double single_loss = evaluate_weights(base, single, *data).loss;
        report.task_ids.push_back(f.task_id);
        report.merged_loss.push_back(merged_loss);
        report.single_loss.push_back(single_loss);
        report.excess_loss.push_back(merged_loss - single_loss);
    }
    return report;
}

} // namespace lori
