#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lori/adapter.hpp"
#include "lori/matrix.hpp"
#include "lori/rng.hpp"
#include "lori/tasks.hpp"
#include "lori/toy_model.hpp"

namespace lori {

enum class MergeMethod { concat, linear, magnitude, ties, dare };

MergeMethod merge_method_from_string(std::string_view name);
std::string_view to_string(MergeMethod m);

struct MergeSpec {
    MergeMethod method = MergeMethod::concat;
    std::vector<double> weights;  // alpha_t per adapter
    double density = 1.0;         // pruning methods only, in (0, 1]
    std::uint64_t seed = 0;       // dare only

    void validate(std::size_t n_adapters) const;
};

struct MergedModel {
    std::map<SlotKey, Matrix> weights;  // W_merge per slot
    MergeSpec spec;
    std::vector<std::string> adapter_ids;
};

/// W_merge = W0 + sum_t alpha_t * delta_t per slot, the weighted-average
/// merge. Algebraically identical to the product of concatenated factors
/// (see merge_concat_product).
MergedModel merge_concat(const ToyModel& base, std::span<const AdapterFactors> adapters,
                         std::span<const double> weights);

/// Same merge computed the other way: A' = [alpha_1 A_1 ... alpha_T A_T],
/// B' = [b_1; ...; b_T], W_merge = W0 + A'B'. Kept as an independent route
/// so the two can be checked against each other.
MergedModel merge_concat_product(const ToyModel& base, std::span<const AdapterFactors> adapters,
                                 std::span<const double> weights);

/// W_merge = W0 + (sum_t alpha_t A_t)(sum_t alpha_t b_t): factors are summed
/// before multiplying, which introduces alpha_s alpha_t A_s b_t cross-terms
/// (and alpha^2 on the diagonal).
MergedModel merge_linear(const ToyModel& base, std::span<const AdapterFactors> adapters,
                         std::span<const double> weights);

/// Exact-budget magnitude pruning of each factor to `density`, then the
/// weighted delta sum. Keeps the top ceil(density * N) entries of A and of b
/// by |value| (ranked desc, index asc), zeroes the rest.
MergedModel merge_magnitude(const ToyModel& base, std::span<const AdapterFactors> adapters,
                            std::span<const double> weights, double density);

/// Magnitude-pruned factors, then per coordinate of the stacked weighted
/// deltas: elect the sign of the value sum (ties positive) and average the
/// values whose sign matches; 0 when none match.
MergedModel merge_ties(const ToyModel& base, std::span<const AdapterFactors> adapters,
                       std::span<const double> weights, double density);

/// Random pruning with rescale: each factor entry survives independently
/// with probability `density` and is divided by it, keeping each pruned
/// factor unbiased. Streams are keyed by (seed, task_id, slot), so results
/// do not depend on adapter order.
MergedModel merge_dare(const ToyModel& base, std::span<const AdapterFactors> adapters,
                       std::span<const double> weights, double density, std::uint64_t seed);

MergedModel merge(const ToyModel& base, std::span<const AdapterFactors> adapters,
                  const MergeSpec& spec);

/// Top-ceil(density*N) magnitude retention of a single matrix.
Matrix prune_by_magnitude(const Matrix& m, double density);
/// Bernoulli(density) retention with 1/density rescale.
Matrix dare_prune(const Matrix& m, double density, RngStream& stream);

struct PairwiseInner {
    std::vector<std::string> task_ids;
    Matrix values;                            // normalized inner products
    std::vector<std::vector<bool>> defined;   // false where a delta is zero
};

/// Symmetric matrix of normalized Frobenius inner products of materialized
/// deltas, aggregated over slots. Zero-delta adapters yield undefined
/// entries (flagged, not NaN).
PairwiseInner pairwise_delta_inner(std::span<const AdapterFactors> adapters);

struct InterferenceReport {
    std::vector<std::string> task_ids;
    std::vector<double> merged_loss;   // L_t(W_merge)
    std::vector<double> single_loss;   // L_t(W0 + alpha_t delta_t)
    std::vector<double> excess_loss;   // the difference, per task
    PairwiseInner inner;
};

/// Per-task excess loss of the merged model over the single-task reference,
/// plus the pairwise delta inner products as an interference diagnostic.
InterferenceReport interference(const ToyModel& base, const MergedModel& merged,
                                std::span<const AdapterFactors> adapters,
                                std::span<const TaskDataset> datasets,
                                std::span<const double> weights);

} // namespace lori
