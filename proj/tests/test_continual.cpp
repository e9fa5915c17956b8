#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lori/continual.hpp"
#include "lori/tasks.hpp"
#include "lori/toy_model.hpp"

using namespace lori;

namespace {

BitMask bernoulli_mask(std::size_t rows, std::size_t cols, double density, RngStream& rng) {
    BitMask m(rows, cols);
    for (std::size_t k = 0; k < rows * cols; ++k) m.set_flat(k, rng.uniform01() < density);
    return m;
}

struct ContinualFixture {
    ToyModel model = build_toy_model(1, 8, 4, 61);
    TaskDataset phase1 = gen_task({TaskKind::linear_regression, 32, 0.1, 71, "p1"}, model);
    std::vector<TaskDataset> phase2 = {
        gen_task({TaskKind::linear_regression, 32, 0.1, 72, "p2a"}, model)};
    TrainConfig cfg;

    ContinualFixture() {
        cfg.lr = 0.02;
        cfg.steps = 30;
        cfg.batch_size = 8;
        cfg.seed = 5;
    }

    MaskSet calibrated_masks(const TaskDataset& data, double s) const {
        AdapterSet set = init_shared_a_adapter_set(model, 4, 8.0, data.task_id, 9);
        TrainConfig c = cfg;
        return calibrate(model, set, data, {s, Granularity::model, 4}, c);
    }

    ContinualOptions opts() const {
        ContinualOptions o;
        o.kind = ContinualKind::lori;
        o.rank = 4;
        o.alpha = 8.0;
        o.adapter_seed = 9;
        return o;
    }
};

} // namespace

TEST_CASE("mask_overlap examples") {
    SUBCASE("identical masks overlap at their density") {
        RngStream rng(3, "ov", 0, "");
        const BitMask m = bernoulli_mask(20, 50, 0.1, rng);
        const double density = static_cast<double>(m.count()) / static_cast<double>(m.size());
        CHECK(mask_overlap(m, m) == density);
    }
    SUBCASE("hand case 1100 vs 0110") {
        BitMask a(1, 4), b(1, 4);
        a.set_flat(0, true);
        a.set_flat(1, true);
        b.set_flat(1, true);
        b.set_flat(2, true);
        CHECK(mask_overlap(a, b) == 0.25);
    }
    SUBCASE("shape mismatch") {
        CHECK_THROWS_AS(mask_overlap(BitMask(1, 4), BitMask(2, 2)), DimensionError);
    }
}

TEST_CASE("independent random masks at density 0.1 overlap near 1%") {
    RngStream rng(7, "mc", 0, "");
    const std::size_t draws = 1000;
    const std::size_t n = 40, c = 25;  // 1000 positions
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t i = 0; i < draws; ++i) {
        const BitMask a = bernoulli_mask(n, c, 0.1, rng);
        const BitMask b = bernoulli_mask(n, c, 0.1, rng);
        const double ov = mask_overlap(a, b);
        sum += ov;
        sum_sq += ov * ov;
    }
    const double mean = sum / draws;
    const double var = sum_sq / draws - mean * mean;
    const double se = std::sqrt(var / draws);
    CHECK(std::abs(mean - 0.01) <= 3.0 * se);
}

TEST_CASE("overlap is symmetric and within the density bounds") {
    RngStream rng(11, "sym", 0, "");
    for (int trial = 0; trial < 25; ++trial) {
        const double da = 0.05 + 0.9 * rng.uniform01();
        const double db = 0.05 + 0.9 * rng.uniform01();
        const BitMask a = bernoulli_mask(16, 16, da, rng);
        const BitMask b = bernoulli_mask(16, 16, db, rng);
        const double ov = mask_overlap(a, b);
        CHECK(ov == mask_overlap(b, a));
        const double fa = static_cast<double>(a.count()) / 256.0;
        const double fb = static_cast<double>(b.count()) / 256.0;
        CHECK(ov <= std::min(fa, fb));
        CHECK(ov >= std::max(0.0, fa + fb - 1.0));
    }
}

TEST_CASE("zero-step phase 2 forgets nothing, exactly") {
    ContinualFixture f;
    const MaskSet m1 = f.calibrated_masks(f.phase1, 0.5);
    const std::vector<MaskSet> m2 = {m1};
    std::vector<TaskDataset> phase2 = {f.phase1};
    ContinualOptions opts = f.opts();
    opts.phase2_steps = 0;
    const ContinualRun run = two_phase(f.model, f.cfg, f.phase1, &m1, phase2, m2, opts);
    REQUIRE(run.completed);
    for (const auto& row : forgetting_report(run)) {
        CHECK(row.delta == 0.0);
    }
}

TEST_CASE("forgetting report has one row per phase-2 task") {
    ContinualFixture f;
    std::vector<TaskDataset> phase2 = {
        gen_task({TaskKind::linear_regression, 24, 0.1, 73, "a"}, f.model),
        gen_task({TaskKind::cluster_classification, 24, 0.25, 74, "b"}, f.model),
    };
    const MaskSet m1 = f.calibrated_masks(f.phase1, 0.5);
    const std::vector<MaskSet> m2 = {f.calibrated_masks(phase2[0], 0.5),
                                     f.calibrated_masks(phase2[1], 0.5)};
    const ContinualRun run = two_phase(f.model, f.cfg, f.phase1, &m1, phase2, m2, f.opts());
    const auto rows = forgetting_report(run);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].phase2_task == "a");
    CHECK(rows[1].phase2_task == "b");

    ContinualRun incomplete = run;
    incomplete.completed = false;
    CHECK_THROWS_AS(forgetting_report(incomplete), StateError);
}

TEST_CASE("phase-1 parameters outside the phase-2 mask are bitwise preserved") {
    ContinualFixture f;
    const MaskSet m1 = f.calibrated_masks(f.phase1, 0.5);

    // Constructed disjoint phase-2 masks: complement of the phase-1 masks.
    MaskSet m2 = m1;
    m2.task_id = "p2a";
    for (auto& [key, mask] : m2.masks) {
        BitMask inverted(mask.rows(), mask.cols());
        for (std::size_t k = 0; k < mask.size(); ++k) inverted.set_flat(k, !mask.get_flat(k));
        mask = inverted;
    }

    const std::vector<MaskSet> phase2_masks = {m2};
    const ContinualRun run =
        two_phase(f.model, f.cfg, f.phase1, &m1, f.phase2, phase2_masks, f.opts());

    REQUIRE(run.task_adapters.size() == 1);
    for (const auto& [key, branch] : run.task_adapters[0].slots) {
        const LoriAdapter& p1 = run.phase1_adapters.slots.at(key);
        const BitMask& mask1 = m1.masks.at(key);
        for (std::size_t k = 0; k < branch.b.size(); ++k) {
            if (mask1.get_flat(k)) {
                CHECK(branch.b[k] == p1.b[k]);
            }
        }
    }
    // Overlap of complementary masks is zero.
    CHECK(run.tasks[0].overlap_with_phase1 == 0.0);
}

TEST_CASE("all adapters in a run share one frozen A, byte for byte") {
    ContinualFixture f;
    const MaskSet m1 = f.calibrated_masks(f.phase1, 0.5);
    const std::vector<MaskSet> m2 = {f.calibrated_masks(f.phase2[0], 0.5)};
    const ContinualRun run = two_phase(f.model, f.cfg, f.phase1, &m1, f.phase2, m2, f.opts());
    for (const auto& [key, p1] : run.phase1_adapters.slots) {
        for (const auto& branch : run.task_adapters) {
            CHECK(branch.slots.at(key).a == p1.a);
        }
    }
}

TEST_CASE("rezero flag clears carried entries before phase 2") {
    ContinualFixture f;
    const MaskSet m1 = f.calibrated_masks(f.phase1, 0.5);
    const std::vector<MaskSet> m2 = {m1};  // full overlap makes carrying visible
    std::vector<TaskDataset> phase2 = {f.phase2[0]};

    ContinualOptions keep = f.opts();
    ContinualOptions rezero = f.opts();
    rezero.rezero_carried_entries = true;
    rezero.phase2_steps = 0;  // so the cleared state is directly observable

    const ContinualRun r = two_phase(f.model, f.cfg, f.phase1, &m1, phase2, m2, rezero);
    for (const auto& [key, branch] : r.task_adapters[0].slots) {
        for (std::size_t k = 0; k < branch.b.size(); ++k) {
            if (branch.mask.get_flat(k)) CHECK(branch.b[k] == 0.0);
        }
    }
    (void)keep;
}

TEST_CASE("missing masks are a state error") {
    ContinualFixture f;
    const MaskSet m1 = f.calibrated_masks(f.phase1, 0.5);
    CHECK_THROWS_AS(two_phase(f.model, f.cfg, f.phase1, nullptr, f.phase2, {}, f.opts()),
                    StateError);
    const std::vector<MaskSet> none;
    CHECK_THROWS_AS(two_phase(f.model, f.cfg, f.phase1, &m1, f.phase2, none, f.opts()),
                    StateError);
}

TEST_CASE("mask_set_overlap aggregates across slots") {
    ContinualFixture f;
    const MaskSet a = f.calibrated_masks(f.phase1, 0.9);
    const MaskSet b = f.calibrated_masks(f.phase2[0], 0.9);
    const double ov = mask_set_overlap(a, b);
    CHECK(ov >= 0.0);
    CHECK(ov <= 0.1);
    CHECK(ov == mask_set_overlap(b, a));
    // Same task twice: overlap equals the retained density.
    const CalibrationReport rep = sparsity_profile(a);
    const double density = static_cast<double>(rep.global_retained) /
                           static_cast<double>(rep.global_total);
    CHECK(mask_set_overlap(a, a) == doctest::Approx(density).epsilon(1e-12));
}
