#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "lori/bitmask.hpp"
#include "lori/matrix.hpp"
#include "lori/rng.hpp"
#include "lori/slots.hpp"

namespace lori {

struct AdapterShape {
    std::size_t d_in = 0;
    std::size_t d_out = 0;
    std::size_t r = 0;

    void validate() const;
};

/// Low-rank adapter with a frozen random down-projection A and a trainable,
/// (optionally) sparsely masked up-projection B. The materialized update is
/// delta = (alpha / r) * A * (B o M).
///
/// Invariants: A never changes after init; B entries at cleared mask
/// positions are exactly zero; a fresh adapter has B == 0 (so delta == 0)
/// and an all-ones mask.
struct LoriAdapter {
    AdapterShape shape;
    Matrix a;      // d_in x r, frozen
    Matrix b;      // r x d_out
    BitMask mask;  // r x d_out
    double alpha = 0.0;
    std::string task_id;
    StreamKey stream;
    bool calibrated = false;  // set once a calibrated mask is attached
};

/// Plain LoRA: both factors trainable, A Kaiming-uniform, B zero.
struct LoraAdapter {
    AdapterShape shape;
    Matrix a;  // d_in x r, trainable
    Matrix b;  // r x d_out, trainable
    double alpha = 0.0;
    std::string task_id;
    StreamKey stream;
};

/// Default scale follows the reference configurations: alpha = 2r.
inline double default_alpha(std::size_t r) { return 2.0 * static_cast<double>(r); }

/// A is drawn from the (seed, task_id, slot) stream, so distinct tasks and
/// distinct slots get independent projections while identical inputs
/// reproduce bit-identical adapters.
LoriAdapter init_lori(const AdapterShape& shape, double alpha, const std::string& task_id,
                      std::uint64_t seed, const SlotKey& slot = {});

LoraAdapter init_lora(const AdapterShape& shape, double alpha, const std::string& task_id,
                      std::uint64_t seed, const SlotKey& slot = {});

/// (alpha / r) * A * (B o M), shape d_in x d_out.
Matrix delta(const LoriAdapter& adapter);
Matrix delta(const LoraAdapter& adapter);

/// x * W0 + x * delta(adapter).
Matrix forward(const Matrix& x, const Matrix& w0, const LoriAdapter& adapter);

/// W0 + delta(adapter); returns a new matrix, W0 is untouched.
Matrix merge_into_base(const Matrix& w0, const LoriAdapter& adapter);

/// One task's adapters, one per model slot. All slots share task_id and
/// hyperparameters; each slot has its own A stream.
struct AdapterSet {
    std::string task_id;
    double alpha = 0.0;
    std::size_t rank = 0;
    std::map<SlotKey, LoriAdapter> slots;
};

struct LoraAdapterSet {
    std::string task_id;
    double alpha = 0.0;
    std::size_t rank = 0;
    std::map<SlotKey, LoraAdapter> slots;
};

/// Materialized per-slot factors of one task's adapters, the neutral view
/// merging and diagnostics operate on. The LoRA scale alpha/r is folded into
/// the b side, so delta(slot) == a[slot] * b[slot] exactly.
struct AdapterFactors {
    std::string task_id;
    std::map<SlotKey, Matrix> a;  // d_in x r
    std::map<SlotKey, Matrix> b;  // r x d_out, mask applied, scale folded in
};

AdapterFactors scaled_factors(const AdapterSet& set);
AdapterFactors scaled_factors(const LoraAdapterSet& set);

std::map<SlotKey, Matrix> materialized_deltas(const AdapterFactors& factors);

enum class ParamCount {
    lora,         // A and B entries
    lori_dense,   // B entries only
    lori_sparse,  // set mask bits only
};

/// Trainable-parameter accounting over a set of adapter shapes (with masks
/// where kind == lori_sparse). Throws StateError if lori_sparse is requested
/// for uncalibrated adapters.
std::size_t count_trainable(const AdapterSet& set, ParamCount kind);

} // namespace lori
