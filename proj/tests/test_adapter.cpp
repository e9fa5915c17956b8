#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lori/adapter.hpp"
#include "lori/mask_calibration.hpp"
#include "lori/toy_model.hpp"
#include "lori/training.hpp"

using namespace lori;

namespace {

LoriAdapter hand_adapter() {
    // d_in=2, r=1, d_out=2, alpha=r so the scale is 1.
    LoriAdapter ad = init_lori({2, 2, 1}, 1.0, "hand", 0);
    ad.a = Matrix::of({{1.0}, {0.0}});
    ad.b = Matrix::of({{0.0, 2.0}});
    return ad;
}

} // namespace

TEST_CASE("init_lori produces different A for different task ids") {
    const LoriAdapter a1 = init_lori({16, 8, 4}, 8.0, "task1", 7);
    const LoriAdapter a2 = init_lori({16, 8, 4}, 8.0, "task2", 7);
    CHECK_FALSE(a1.a == a2.a);
    // Same identity twice is bit-identical.
    const LoriAdapter a3 = init_lori({16, 8, 4}, 8.0, "task1", 7);
    CHECK(a1.a == a3.a);
}

TEST_CASE("fresh adapter has zero delta and all-ones mask") {
    const LoriAdapter ad = init_lori({8, 6, 2}, 4.0, "t", 3);
    CHECK(delta(ad) == Matrix(8, 6));
    CHECK(ad.mask.all_set());
    CHECK(max_abs(ad.b) == 0.0);
}

TEST_CASE("init_lori A entries bounded by sqrt(3/d_in)") {
    const LoriAdapter ad = init_lori({32, 16, 8}, 16.0, "bound", 11);
    CHECK(max_abs(ad.a) <= std::sqrt(3.0 / 32.0));
}

TEST_CASE("init_lori validates shape") {
    CHECK_THROWS_AS(init_lori({0, 4, 1}, 1.0, "t", 0), ArgumentError);
    CHECK_THROWS_AS(init_lori({4, 4, 5}, 1.0, "t", 0), ArgumentError);
    CHECK_THROWS_AS(init_lori({4, 4, 0}, 1.0, "t", 0), ArgumentError);
}

TEST_CASE("delta hand case") {
    const LoriAdapter ad = hand_adapter();
    CHECK(delta(ad) == Matrix::of({{0.0, 2.0}, {0.0, 0.0}}));
}

TEST_CASE("delta with all-zero mask is the zero matrix") {
    LoriAdapter ad = hand_adapter();
    ad.b = Matrix::of({{5.0, -3.0}});
    ad.mask = BitMask(1, 2);
    CHECK(delta(ad) == Matrix(2, 2));
}

TEST_CASE("zeroing a mask column zeroes the same delta column") {
    LoriAdapter ad = init_lori({6, 5, 3}, 6.0, "col", 2);
    RngStream rng(5, "fill_b", 0, "");
    ad.b = gaussian(3, 5, rng);
    for (std::size_t i = 0; i < 3; ++i) ad.mask.set(i, 2, false);
    const Matrix d = delta(ad);
    for (std::size_t i = 0; i < d.rows(); ++i) CHECK(d(i, 2) == 0.0);
    // Other columns unaffected relative to the unmasked delta.
    LoriAdapter full = ad;
    full.mask = BitMask::ones(3, 5);
    const Matrix df = delta(full);
    for (std::size_t i = 0; i < d.rows(); ++i)
        for (std::size_t j = 0; j < d.cols(); ++j)
            if (j != 2) CHECK(d(i, j) == df(i, j));
}

TEST_CASE("forward reduces to x*W0 when B is zero") {
    const LoriAdapter ad = init_lori({4, 3, 2}, 4.0, "fw", 1);
    RngStream rng(9, "fw_data", 0, "");
    const Matrix x = gaussian(5, 4, rng);
    const Matrix w0 = gaussian(4, 3, rng);
    CHECK(forward(x, w0, ad) == matmul(x, w0));
}

TEST_CASE("forward hand case") {
    const LoriAdapter ad = hand_adapter();
    const Matrix x = Matrix::of({{1.0, 0.0}});
    CHECK(forward(x, Matrix::identity(2), ad) == Matrix::of({{1.0, 2.0}}));
}

TEST_CASE("forward equals matmul with merged base") {
    LoriAdapter ad = init_lori({6, 6, 3}, 6.0, "merge_eq", 4);
    RngStream rng(21, "merge_eq_data", 0, "");
    ad.b = gaussian(3, 6, rng);
    const Matrix x = gaussian(4, 6, rng);
    const Matrix w0 = gaussian(6, 6, rng);
    const Matrix lhs = forward(x, w0, ad);
    const Matrix rhs = matmul(x, merge_into_base(w0, ad));
    CHECK(frob_norm(sub(lhs, rhs)) <= 1e-12 * std::max(1.0, frob_norm(lhs)));
}

TEST_CASE("forward shape validation") {
    const LoriAdapter ad = init_lori({4, 3, 2}, 4.0, "shapes", 0);
    CHECK_THROWS_AS(forward(Matrix(2, 5), Matrix(4, 3), ad), DimensionError);
    CHECK_THROWS_AS(forward(Matrix(2, 4), Matrix(3, 3), ad), DimensionError);
}

TEST_CASE("merge_into_base leaves W0 unchanged and handles zero adapter") {
    const LoriAdapter ad = init_lori({3, 3, 1}, 2.0, "mb", 5);
    const Matrix w0 = Matrix::of({{1, 2, 3}, {4, 5, 6}, {7, 8, 9}});
    const Matrix w0_copy = w0;
    CHECK(merge_into_base(w0, ad) == w0);
    CHECK(w0 == w0_copy);
}

TEST_CASE("merge_into_base hand case") {
    const LoriAdapter ad = hand_adapter();
    const Matrix w0 = Matrix::of({{1.0, 1.0}, {1.0, 1.0}});
    CHECK(merge_into_base(w0, ad) == Matrix::of({{1.0, 3.0}, {1.0, 1.0}}));
}

TEST_CASE("delta is linear in B under a fixed mask") {
    const AdapterShape shape{10, 8, 4};
    LoriAdapter ad = init_lori(shape, 8.0, "lin", 6);
    RngStream rng(31, "lin_data", 0, "");
    for (std::size_t k = 0; k < ad.mask.size(); ++k) ad.mask.set_flat(k, rng.uniform01() < 0.5);
    const Matrix b1 = gaussian(4, 8, rng);
    const Matrix b2 = gaussian(4, 8, rng);
    LoriAdapter x = ad, y = ad, z = ad;
    x.b = b1;
    y.b = b2;
    z.b = add(b1, b2);
    const Matrix sum = add(delta(x), delta(y));
    CHECK(frob_norm(sub(delta(z), sum)) <= 1e-12 * std::max(1.0, frob_norm(sum)));
}

TEST_CASE("frozen A survives training byte for byte") {
    const ToyModel model = build_toy_model(1, 8, 4, 3);
    AdapterSet set = init_adapter_set(model, 2, 4.0, "frozen", 17);
    std::map<SlotKey, Matrix> a_before;
    for (const auto& [key, ad] : set.slots) a_before.emplace(key, ad.a);

    const TaskSpec spec{TaskKind::linear_regression, 32, 0.0, 5, "frozen"};
    const TaskDataset data = gen_task(spec, model);
    TrainConfig cfg;
    cfg.lr = 0.05;
    cfg.steps = 25;
    cfg.batch_size = 8;
    cfg.seed = 9;
    train_adapter(model, set, data, cfg);

    for (const auto& [key, ad] : set.slots) {
        CHECK(ad.a == a_before.at(key));
    }
}

TEST_CASE("count_trainable examples") {
    const ToyModel model = build_toy_model(1, 8, 4, 3);
    SUBCASE("single square 64x64 slot at r=8") {
        AdapterSet set;
        set.task_id = "counts";
        set.alpha = 16.0;
        set.rank = 8;
        set.slots.emplace(SlotKey{0, Projection::attn_q},
                          init_lori({64, 64, 8}, 16.0, "counts", 0));
        CHECK(count_trainable(set, ParamCount::lora) == 1024);
        CHECK(count_trainable(set, ParamCount::lori_dense) == 512);
        CHECK(count_trainable(set, ParamCount::lori_dense) ==
              count_trainable(set, ParamCount::lora) / 2);

        CHECK_THROWS_AS(count_trainable(set, ParamCount::lori_sparse), StateError);

        // s = 0.9 on the 512-entry B: ceil(0.1 * 512) = 52 bits.
        auto& ad = set.slots.begin()->second;
        RngStream rng(2, "count_fill", 0, "");
        ad.b = gaussian(8, 64, rng);
        MaskSet ms = select_masks(set, {0.9, Granularity::model, 1});
        apply_mask_set(set, ms);
        CHECK(count_trainable(set, ParamCount::lori_sparse) == 52);

        const double ratio = static_cast<double>(count_trainable(set, ParamCount::lori_sparse)) /
                             static_cast<double>(count_trainable(set, ParamCount::lora));
        // Reference ratio 4.4M / 84M is about 5.2%.
        CHECK(std::abs(ratio - 4.4 / 84.0) < 0.01);
    }
    SUBCASE("square-slot sets keep dense B at half the LoRA count") {
        AdapterSet set = init_adapter_set(model, 2, 4.0, "halves", 1);
        // Restrict to the square attention slots.
        AdapterSet square;
        square.task_id = set.task_id;
        square.alpha = set.alpha;
        square.rank = set.rank;
        for (const auto& [key, ad] : set.slots) {
            if (is_attention(key.proj)) square.slots.emplace(key, ad);
        }
        CHECK(count_trainable(square, ParamCount::lori_dense) * 2 ==
              count_trainable(square, ParamCount::lora));
    }
}

TEST_CASE("mask-zero invariant after masked training") {
    const ToyModel model = build_toy_model(1, 8, 4, 31);
    AdapterSet set = init_adapter_set(model, 2, 4.0, "maskzero", 23);
    const TaskSpec spec{TaskKind::linear_regression, 24, 0.0, 6, "maskzero"};
    const TaskDataset data = gen_task(spec, model);
    TrainConfig cfg;
    cfg.lr = 0.05;
    cfg.steps = 4;
    cfg.batch_size = 8;
    cfg.seed = 2;
    calibrate(model, set, data, {0.8, Granularity::model, 4}, cfg);
    train_adapter(model, set, data, cfg);
    for (const auto& [key, ad] : set.slots) {
        for (std::size_t k = 0; k < ad.b.size(); ++k) {
            if (!ad.mask.get_flat(k)) CHECK(ad.b[k] == 0.0);
        }
    }
}

TEST_CASE("scaled factors reproduce delta exactly") {
    LoriAdapter ad = init_lori({6, 5, 3}, 7.0, "fact", 2);
    RngStream rng(4, "fact_data", 0, "");
    ad.b = gaussian(3, 5, rng);
    AdapterSet set;
    set.task_id = "fact";
    set.alpha = 7.0;
    set.rank = 3;
    set.slots.emplace(SlotKey{0, Projection::attn_q}, ad);
    const AdapterFactors f = scaled_factors(set);
    const auto deltas = materialized_deltas(f);
    CHECK(frob_norm(sub(deltas.at({0, Projection::attn_q}), delta(ad))) <= 1e-15);
}
