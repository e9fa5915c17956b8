#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lori/adapter.hpp"
#include "lori/matrix.hpp"
#include "lori/merge.hpp"

namespace lori {

/// High-probability bound on ||A_s^T A_t||_F for independent Kaiming-uniform
/// factors: r * sqrt(18 * ln(2 r^2 / delta) / d_in), valid with probability
/// at least 1 - delta.
double hoeffding_bound(std::size_t r, std::size_t d_in, double delta);

struct GramReport {
    std::size_t r = 0;
    std::size_t d_in = 0;
    double delta = 0.0;
    std::size_t trials = 0;
    std::vector<double> gram_norms;    // ||A_s^T A_t||_F per trial
    double bound = 0.0;
    double satisfaction = 0.0;         // fraction of trials within the bound
    double mean_normalized_inner = 0.0;
};

/// Samples independent Kaiming-uniform pairs (A_s, A_t), records the Gram
/// norm per trial against the bound, plus the normalized delta inner product
/// for unit-norm random B factors.
GramReport gram_trials(std::size_t r, std::size_t d_in, double delta, std::size_t trials,
                       std::uint64_t seed);

/// |<A_s b_s, A_t b_t>_F| / (||A_s b_s||_F ||A_t b_t||_F); the quantity the
/// decay sweep averages. Invariant under positive rescaling of either b.
double normalized_delta_inner(const Matrix& a_s, const Matrix& a_t, const Matrix& b_s,
                              const Matrix& b_t);

struct DecayPoint {
    std::size_t d_in = 0;
    double mean = 0.0;
    double stddev = 0.0;
};

/// Mean over trials of |<delta_s, delta_t>_F| / (||delta_s||_F ||delta_t||_F)
/// for each d_in, with random unit-Frobenius-norm B factors. The mean decays
/// like 1/sqrt(d_in).
std::vector<DecayPoint> decay_sweep(std::size_t r, std::span<const std::size_t> d_in_list,
                                    std::size_t trials, std::uint64_t seed);

/// Pairwise normalized inner products of trained adapters' materialized
/// deltas (aggregated over slots); zero-delta adapters give flagged,
/// undefined entries.
PairwiseInner trained_pair_inner(std::span<const AdapterFactors> adapters);

} // namespace lori
