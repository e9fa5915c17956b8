#include "lori/ortho.hpp"

#include <cmath>

#include "lori/rng.hpp"

namespace lori {

double hoeffding_bound(std::size_t r, std::size_t d_in, double delta) {
    if (r < 1 || d_in < 1) {
        throw ArgumentError("hoeffding_bound: r and d_in must be >= 1");
    }
    if (!(delta > 0.0 && delta < 1.0)) {
        throw ArgumentError("hoeffding_bound: delta must be in (0, 1), got " +
                            std::to_string(delta));
    }
    const double rr = static_cast<double>(r);
    return rr * std::sqrt(18.0 * std::log(2.0 * rr * rr / delta) / static_cast<double>(d_in));
}

namespace {

/// Random r x r B factor scaled to unit Frobenius norm.
Matrix unit_b(std::size_t r, RngStream& stream) {
    Matrix b = gaussian(r, r, stream);
    const double n = frob_norm(b);
    return scale(b, 1.0 / n);
}

} // namespace

double normalized_delta_inner(const Matrix& a_s, const Matrix& a_t, const Matrix& b_s,
                              const Matrix& b_t) {
    const Matrix delta_s = matmul(a_s, b_s);
    const Matrix delta_t = matmul(a_t, b_t);
    const double ns = frob_norm(delta_s);
    const double nt = frob_norm(delta_t);
    return std::abs(frob_inner(delta_s, delta_t)) / (ns * nt);
}

GramReport gram_trials(std::size_t r, std::size_t d_in, double delta, std::size_t trials,
                       std::uint64_t seed) {
    if (trials < 1) throw ArgumentError("gram_trials: trials must be >= 1");
    GramReport report;
    report.r = r;
    report.d_in = d_in;
    report.delta = delta;
    report.trials = trials;
    report.bound = hoeffding_bound(r, d_in, delta);
    report.gram_norms.reserve(trials);

    std::size_t ok = 0;
    double inner_sum = 0.0;
    for (std::size_t i = 0; i < trials; ++i) {
        RngStream trial(seed, "gram", i, "trial");
        RngStream sa = trial.fork(0);
        RngStream sb = trial.fork(1);
        RngStream sc = trial.fork(2);
        const Matrix a_s = kaiming_uniform(d_in, r, sa);
        const Matrix a_t = kaiming_uniform(d_in, r, sb);
        const double norm = frob_norm(matmul(transpose(a_s), a_t));
        report.gram_norms.push_back(norm);
        if (norm <= report.bound) ++ok;
        const Matrix b_s = unit_b(r, sc);
        const Matrix b_t = unit_b(r, sc);
        inner_sum += normalized_delta_inner(a_s, a_t, b_s, b_t);
    }
    report.satisfaction = static_cast<double>(ok) / static_cast<double>(trials);
    report.mean_normalized_inner = inner_sum / static_cast<double>(trials);
    return report;
}

std::vector<DecayPoint> decay_sweep(std::size_t r, std::span<const std::size_t> d_in_list,
                                    std::size_t trials, std::uint64_t seed) {
    if (d_in_list.empty()) throw ArgumentError("decay_sweep: empty d_in list");
    if (trials < 1) throw ArgumentError("decay_sweep: trials must be >= 1");
    for (std::size_t i = 0; i + 1 < d_in_list.size(); ++i) {
        if (d_in_list[i] >= d_in_list[i + 1]) {
            throw ArgumentError("decay_sweep: d_in list must be strictly ascending");
        }
    }
    for (std::size_t d : d_in_list) {
        if (d <= r) {
            throw ArgumentError("decay_sweep: d_in=" + std::to_string(d) +
                                " must exceed r=" + std::to_string(r));
        }
    }

    std::vector<DecayPoint> curve;
    curve.reserve(d_in_list.size());
    for (std::size_t d_in : d_in_list) {
        double sum = 0.0, sum_sq = 0.0;
        for (std::size_t i = 0; i < trials; ++i) {
            RngStream trial(seed, "decay", (static_cast<std::uint64_t>(d_in) << 20) + i, "trial");
            RngStream sa = trial.fork(0);
            RngStream sb = trial.fork(1);
            RngStream sc = trial.fork(2);
            const Matrix a_s = kaiming_uniform(d_in, r, sa);
            const Matrix a_t = kaiming_uniform(d_in, r, sb);
            const Matrix b_s = unit_b(r, sc);
            const Matrix b_t = unit_b(r, sc);
            const double v = normalized_delta_inner(a_s, a_t, b_s, b_t);
            sum += v;
            sum_sq += v * v;
        }
        DecayPoint p;
        p.d_in = d_in;
        p.mean = sum / static_cast<double>(trials);
        const double var = sum_sq / static_cast<double>(trials) - p.mean * p.mean;
        p.stddev = std::sqrt(std::max(0.0, var));
        curve.push_back(p);
    }
    return curve;
}

PairwiseInner trained_pair_inner(std::span<const AdapterFactors> adapters) {
    if (adapters.size() < 2) {
        throw ArgumentError("trained_pair_inner: need at least 2 adapters");
    }
    return pairwise_delta_inner(adapters);
}

} // namespace lori
