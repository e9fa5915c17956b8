#include "lori/adapter.hpp"

namespace lori {

void AdapterShape::validate() const {
    if (d_in < 1 || d_out < 1) {
        throw ArgumentError("adapter shape: dimensions must be >= 1, got d_in=" +
                            std::to_string(d_in) + ", d_out=" + std::to_string(d_out));
    }
    if (r < 1 || r > std::min(d_in, d_out)) {
        throw ArgumentError("adapter shape: rank " + std::to_string(r) +
                            " outside [1, min(" + std::to_string(d_in) + ", " +
                            std::to_string(d_out) + ")]");
    }
}

LoriAdapter init_lori(const AdapterShape& shape, double alpha, const std::string& task_id,
                      std::uint64_t seed, const SlotKey& slot) {
    shape.validate();
    LoriAdapter ad;
    ad.shape = shape;
    ad.alpha = alpha;
    ad.task_id = task_id;
    ad.stream = StreamKey{seed, task_id, static_cast<std::uint64_t>(slot.layer),
                          std::string(to_string(slot.proj))};
    RngStream rng(ad.stream);
    ad.a = kaiming_uniform(shape.d_in, shape.r, rng);
    ad.b = Matrix(shape.r, shape.d_out);
    ad.mask = BitMask::ones(shape.r, shape.d_out);
    return ad;
}

LoraAdapter init_lora(const AdapterShape& shape, double alpha, const std::string& task_id,
                      std::uint64_t seed, const SlotKey& slot) {
    shape.validate();
    LoraAdapter ad;
    ad.shape = shape;
    ad.alpha = alpha;
    ad.task_id = task_id;
    ad.stream = StreamKey{seed, task_id, static_cast<std::uint64_t>(slot.layer),
                          std::string(to_string(slot.proj))};
    RngStream rng(ad.stream);
    ad.a = kaiming_uniform(shape.d_in, shape.r, rng);
    ad.b = Matrix(shape.r, shape.d_out);
    return ad;
}

namespace {

Matrix masked_b(const LoriAdapter& ad) {
    Matrix bm = ad.b;
    for (std::size_t k = 0; k < bm.size(); ++k) {
        if (!ad.mask.get_flat(k)) bm[k] = 0.0;
    }
    return bm;
}

} // namespace

Matrix delta(const LoriAdapter& adapter) {
    const double s = adapter.alpha / static_cast<double>(adapter.shape.r);
    return scale(matmul(adapter.a, masked_b(adapter)), s);
}

Matrix delta(const LoraAdapter& adapter) {
    const double s = adapter.alpha / static_cast<double>(adapter.shape.r);
    return scale(matmul(adapter.a, adapter.b), s);
}

Matrix forward(const Matrix& x, const Matrix& w0, const LoriAdapter& adapter) {
    if (x.cols() != adapter.shape.d_in) {
        throw DimensionError("forward: input " + x.shape_str() + " vs d_in=" +
                             std::to_string(adapter.shape.d_in));
    }
    if (w0.rows() != adapter.shape.d_in || w0.cols() != adapter.shape.d_out) {
        throw DimensionError("forward: base " + w0.shape_str() + " vs adapter " +
                             std::to_string(adapter.shape.d_in) + "x" +
                             std::to_string(adapter.shape.d_out));
    }
    return add(matmul(x, w0), matmul(x, delta(adapter)));
}

Matrix merge_into_base(const Matrix& w0, const LoriAdapter& adapter) {
    if (w0.rows() != adapter.shape.d_in || w0.cols() != adapter.shape.d_out) {
        throw DimensionError("merge_into_base: base " + w0.shape_str() + " vs adapter " +
                             std::to_string(adapter.shape.d_in) + "x" +
                             std::to_string(adapter.shape.d_out));
    }
    return add(w0, delta(adapter));
}

AdapterFactors scaled_factors(const AdapterSet& set) {
    AdapterFactors f;
    f.task_id = set.task_id;
    for (const auto& [key, ad] : set.slots) {
        const double s = ad.alpha / static_cast<double>(ad.shape.r);
        f.a.emplace(key, ad.a);
        f.b.emplace(key, scale(masked_b(ad), s));
    }
    return f;
}

AdapterFactors scaled_factors(const LoraAdapterSet& set) {
    AdapterFactors f;
    f.task_id = set.task_id;
    for (const auto& [key, ad] : set.slots) {
        const double s = ad.alpha / static_cast<double>(ad.shape.r);
        f.a.emplace(key, ad.a);
        f.b.emplace(key, scale(ad.b, s));
    }
    return f;
}

std::map<SlotKey, Matrix> materialized_deltas(const AdapterFactors& factors) {
    std::map<SlotKey, Matrix> deltas;
    for (const auto& [key, a] : factors.a) {
        deltas.emplace(key, matmul(a, factors.b.at(key)));
    }
    return deltas;
}

std::size_t count_trainable(const AdapterSet& set, ParamCount kind) {
    std::size_t n = 0;
    for (const auto& [key, ad] : set.slots) {
        switch (kind) {
        case ParamCount::lora:
            n += ad.shape.d_in * ad.shape.r + ad.shape.r * ad.shape.d_out;
            break;
        case ParamCount::lori_dense:
            n += ad.shape.r * ad.shape.d_out;
            break;
        case ParamCount::lori_sparse:
            if (!ad.calibrated) {
                throw StateError("count_trainable: slot " + key.str() +
                                 " has no calibrated mask");
            }
            n += ad.mask.count();
            break;
        }
    }
    return n;
}

} // namespace lori
