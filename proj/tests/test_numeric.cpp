#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "lori/graph.hpp"
#include "lori/matrix.hpp"
#include "lori/rng.hpp"
#include "support/oracles.hpp"

using namespace lori;
namespace oracle = lori::testing;

TEST_CASE("matmul identity") {
    const Matrix m = Matrix::of({{2.5, -1.0}, {0.0, 7.5}});
    CHECK(matmul(Matrix::identity(2), m) == m);
    CHECK(matmul(m, Matrix::identity(2)) == m);
}

TEST_CASE("matmul hand case") {
    const Matrix a = Matrix::of({{1, 2}, {3, 4}});
    const Matrix b = Matrix::of({{0, 1}, {1, 0}});
    CHECK(matmul(a, b) == Matrix::of({{2, 1}, {4, 3}}));
}

TEST_CASE("matmul shape mismatch names both shapes") {
    const Matrix a(2, 3);
    const Matrix b(2, 3);
    CHECK_THROWS_WITH_AS(matmul(a, b), "matmul: 2x3 incompatible with 2x3", DimensionError);
}

TEST_CASE("frob_inner basics") {
    SUBCASE("disjoint supports give zero") {
        const Matrix x = Matrix::of({{1, 0}, {0, 2}});
        const Matrix y = Matrix::of({{0, 5}, {-3, 0}});
        CHECK(frob_inner(x, y) == 0.0);
    }
    SUBCASE("self inner product is squared norm") {
        const Matrix x = Matrix::of({{1, 2}, {3, 4}});
        CHECK(frob_inner(x, x) == doctest::Approx(30.0));
        CHECK(frob_norm(x) == doctest::Approx(std::sqrt(30.0)));
    }
    SUBCASE("hand case") {
        CHECK(frob_inner(Matrix::of({{1, 2}, {3, 4}}), Matrix::of({{1, 0}, {0, 1}})) == 5.0);
    }
    SUBCASE("shape mismatch") {
        CHECK_THROWS_AS(frob_inner(Matrix(1, 2), Matrix(2, 1)), DimensionError);
    }
}

TEST_CASE("frob_inner is symmetric exactly") {
    RngStream rng(99, "frob_sym", 0, "");
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t r = 1 + trial % 5;
        const std::size_t c = 1 + (trial * 7) % 6;
        const Matrix x = gaussian(r, c, rng);
        const Matrix y = gaussian(r, c, rng);
        CHECK(frob_inner(x, y) == frob_inner(y, x));
    }
}

TEST_CASE("kth_largest_abs examples") {
    const std::vector<double> values = {0.1, -0.4, 0.25, 0.9, -0.05, 0.3, 0.7, -0.2, 0.6, 0.15};
    CHECK(kth_largest_abs(values, 5) == 0.3);
    CHECK(kth_largest_abs(values, values.size()) == 0.05);
    CHECK(kth_largest_abs(values, 1) == 0.9);
    CHECK_THROWS_AS(kth_largest_abs(values, 0), ArgumentError);
    CHECK_THROWS_AS(kth_largest_abs(values, 11), ArgumentError);
    CHECK_THROWS_AS(kth_largest_abs({}, 1), ArgumentError);
}

TEST_CASE("kth_largest_abs is permutation invariant and matches sort oracle") {
    RngStream rng(7, "kth", 0, "");
    std::vector<double> values(40);
    for (double& v : values) v = rng.normal();
    for (std::size_t k = 1; k <= values.size(); k += 3) {
        const double expected = oracle::sorted_kth_abs(values, k);
        CHECK(kth_largest_abs(values, k) == expected);
        std::vector<double> shuffled = values;
        const auto perm = rng.permutation(values.size());
        for (std::size_t i = 0; i < values.size(); ++i) shuffled[i] = values[perm[i]];
        CHECK(kth_largest_abs(shuffled, k) == expected);
    }
}

TEST_CASE("kaiming_uniform entries are bounded by sqrt(3/d_in)") {
    RngStream rng(3, "kaiming_bound", 0, "");
    const std::size_t d_in = 37;
    const Matrix a = kaiming_uniform(d_in, 9, rng);
    const double bound = std::sqrt(3.0 / static_cast<double>(d_in));
    CHECK(max_abs(a) <= bound);
    CHECK(a.all_finite());
}

TEST_CASE("kaiming_uniform sample variance approx 1/d_in over 1e6 entries") {
    const std::size_t d_in = 16;
    RngStream rng(11, "kaiming_var", 0, "");
    const std::size_t n = 1'000'000;
    double sum = 0.0, sum_sq = 0.0;
    const double a = std::sqrt(3.0 / static_cast<double>(d_in));
    for (std::size_t i = 0; i < n; ++i) {
        const double v = a * (2.0 * rng.uniform01() - 1.0);
        sum += v;
        sum_sq += v * v;
    }
    const double mean = sum / static_cast<double>(n);
    const double var = sum_sq / static_cast<double>(n) - mean * mean;
    const double expected = 1.0 / static_cast<double>(d_in);
    CHECK(var == doctest::Approx(expected).epsilon(0.02));
}

TEST_CASE("identical stream key reproduces bit-identical matrices") {
    RngStream s1(42, "taskA", 3, "attn.q");
    RngStream s2(42, "taskA", 3, "attn.q");
    const Matrix a = kaiming_uniform(24, 6, s1);
    const Matrix b = kaiming_uniform(24, 6, s2);
    CHECK(a == b);
}

TEST_CASE("distinct stream keys give distinct sequences") {
    RngStream s1(42, "taskA", 0, "attn.q");
    RngStream s2(42, "taskB", 0, "attn.q");
    RngStream s3(43, "taskA", 0, "attn.q");
    RngStream s4(42, "taskA", 1, "attn.q");
    RngStream s5(42, "taskA", 0, "attn.k");
    std::set<std::uint64_t> firsts;
    for (RngStream* s : {&s1, &s2, &s3, &s4, &s5}) firsts.insert(s->next_u64());
    CHECK(firsts.size() == 5);
}

TEST_CASE("kaiming_uniform passes a KS test against U[-a, a]") {
    const std::size_t d_in = 8;
    const double a = std::sqrt(3.0 / static_cast<double>(d_in));
    RngStream rng(5, "kaiming_ks", 0, "");
    std::vector<double> samples(100'000);
    for (double& v : samples) v = a * (2.0 * rng.uniform01() - 1.0);
    const double d = oracle::ks_statistic_uniform(samples, -a, a);
    // Critical value at significance 0.01: 1.6276 / sqrt(n).
    const double critical = 1.6276 / std::sqrt(static_cast<double>(samples.size()));
    CHECK(d < critical);
}

TEST_CASE("kaiming_uniform argument validation") {
    RngStream rng(0, "x", 0, "");
    CHECK_THROWS_AS(kaiming_uniform(0, 3, rng), ArgumentError);
    CHECK_THROWS_AS(kaiming_uniform(3, 0, rng), ArgumentError);
}

TEST_CASE("grad of sum(x o x) is 2x") {
    GradGraph g;
    const Matrix x0 = Matrix::of({{0.5, -1.5}, {2.0, 0.25}});
    const NodeId x = g.leaf(x0);
    // sum(x o x) == mse(x, 0) * N
    const NodeId loss = g.scale(g.mse(x, g.constant(Matrix(2, 2))), 4.0);
    const auto grads = g.backward(loss);
    CHECK(grads.at(x) == scale(x0, 2.0));
}

TEST_CASE("backward rejects non-scalar loss") {
    GradGraph g;
    const NodeId x = g.leaf(Matrix::of({{1.0, 2.0}}));
    const NodeId y = g.relu(x);
    CHECK_THROWS_AS(g.backward(y), ArgumentError);
}

TEST_CASE("unreachable leaf gets a zero gradient of its shape") {
    GradGraph g;
    const NodeId used = g.leaf(Matrix::of({{1.0, -2.0}}));
    const NodeId dead = g.leaf(Matrix::of({{3.0}, {4.0}, {5.0}}));
    const NodeId loss = g.mse(used, g.constant(Matrix(1, 2)));
    const auto grads = g.backward(loss);
    CHECK(grads.at(dead) == Matrix(3, 1));
    CHECK(grads.at(dead).rows() == 3);
    CHECK(grads.at(used) != Matrix(1, 2));
}

TEST_CASE("matmul-relu-mse chain matches finite differences") {
    RngStream rng(17, "chain", 0, "");
    GradGraph g;
    const NodeId w = g.leaf(gaussian(3, 4, rng));
    const NodeId x = g.constant(gaussian(2, 3, rng));
    const NodeId target = g.constant(gaussian(2, 4, rng));
    const NodeId loss = g.mse(g.relu(g.matmul(x, w)), target);
    const auto grads = g.backward(loss);
    CHECK(oracle::gradcheck_entrywise(g, loss, w, grads.at(w)) <= 1e-5);
}

TEST_CASE("replaying the graph reproduces the identical loss") {
    RngStream rng(23, "replay", 0, "");
    GradGraph g;
    const NodeId w = g.leaf(gaussian(4, 4, rng));
    const NodeId x = g.constant(gaussian(3, 4, rng));
    const NodeId h = g.softmax_rows(g.matmul(x, w));
    const NodeId loss = g.mse(h, g.constant(gaussian(3, 4, rng)));
    const double before = g.scalar(loss);
    g.recompute();
    CHECK(g.scalar(loss) == before);
}

namespace {

/// Random graph using every op type across the suite; returns loss node.
NodeId random_graph(GradGraph& g, RngStream& rng, std::vector<NodeId>& leaves) {
    auto rand_shape = [&]() {
        return std::pair<std::size_t, std::size_t>{1 + rng.below(4), 1 + rng.below(4)};
    };
    // Leaf values stay away from zero so relu kinks are not within the
    // finite-difference step.
    auto rand_matrix = [&](std::size_t r, std::size_t c) {
        Matrix m(r, c);
        for (std::size_t k = 0; k < m.size(); ++k) {
            const double mag = 0.2 + rng.uniform01();
            m[k] = rng.uniform01() < 0.5 ? -mag : mag;
        }
        return m;
    };

    std::vector<NodeId> pool;
    const std::size_t n_leaves = 1 + rng.below(3);
    for (std::size_t i = 0; i < n_leaves; ++i) {
        auto [r, c] = rand_shape();
        const NodeId leaf = g.leaf(rand_matrix(r, c));
        leaves.push_back(leaf);
        pool.push_back(leaf);
    }

    const std::size_t n_ops = 3 + rng.below(6);
    for (std::size_t i = 0; i < n_ops; ++i) {
        const NodeId a = pool[rng.below(pool.size())];
        const Matrix& av = g.value(a);
        switch (rng.below(7)) {
        case 0: {
            const std::size_t c = 1 + rng.below(4);
            const NodeId b = g.constant(rand_matrix(av.cols(), c));
            pool.push_back(g.matmul(a, b));
            break;
        }
        case 1: {
            const NodeId b = g.leaf(rand_matrix(av.rows(), av.cols()));
            leaves.push_back(b);
            pool.push_back(g.add(a, b));
            break;
        }
        case 2: {
            const NodeId b = g.constant(rand_matrix(av.rows(), av.cols()));
            pool.push_back(g.hadamard(a, b));
            break;
        }
        case 3: pool.push_back(g.scale(a, rng.uniform(-2.0, 2.0))); break;
        case 4: pool.push_back(g.transpose(a)); break;
        case 5: pool.push_back(g.relu(a)); break;
        case 6: pool.push_back(g.softmax_rows(a)); break;
        }
    }

    const NodeId last = pool.back();
    const Matrix& lv = g.value(last);
    if (rng.uniform01() < 0.3 && lv.cols() >= 2) {
        std::vector<int> labels(lv.rows());
        for (int& l : labels) l = static_cast<int>(rng.below(lv.cols()));
        return g.cross_entropy(last, labels, lv.cols());
    }
    if (rng.uniform01() < 0.5) {
        return g.mse(g.mean_rows(last), g.constant(rand_matrix(1, lv.cols())));
    }
    return g.mse(last, g.constant(rand_matrix(lv.rows(), lv.cols())));
}

} // namespace

TEST_CASE("50 random graphs match finite differences") {
    for (std::uint64_t trial = 0; trial < 50; ++trial) {
        RngStream rng(1000 + trial, "random_graph", trial, "");
        GradGraph g;
        std::vector<NodeId> leaves;
        const NodeId loss = random_graph(g, rng, leaves);
        const auto grads = g.backward(loss);
        for (const NodeId leaf : leaves) {
            CAPTURE(trial);
            CHECK(oracle::gradcheck_entrywise(g, loss, leaf, grads.at(leaf)) <= 1e-5);
        }
    }
}

TEST_CASE("gradient shapes always match leaf shapes") {
    for (std::uint64_t trial = 0; trial < 10; ++trial) {
        RngStream rng(7000 + trial, "shape_graph", trial, "");
        GradGraph g;
        std::vector<NodeId> leaves;
        const NodeId loss = random_graph(g, rng, leaves);
        const auto grads = g.backward(loss);
        for (const NodeId leaf : leaves) {
            CHECK(grads.at(leaf).rows() == g.value(leaf).rows());
            CHECK(grads.at(leaf).cols() == g.value(leaf).cols());
        }
    }
}

TEST_CASE("cross_entropy restricted to the first n_classes columns") {
    GradGraph g;
    const NodeId logits = g.leaf(Matrix::of({{0.4, -0.9, 5.0, -5.0}}));
    const NodeId loss = g.cross_entropy(logits, {1}, 2);
    const auto grads = g.backward(loss);
    // Columns past n_classes carry zero gradient.
    CHECK(grads.at(logits)(0, 2) == 0.0);
    CHECK(grads.at(logits)(0, 3) == 0.0);
    CHECK(grads.at(logits)(0, 0) != 0.0);
    CHECK(oracle::gradcheck_entrywise(g, loss, logits, grads.at(logits)) <= 1e-5);
}

TEST_CASE("cross_entropy label validation") {
    GradGraph g;
    const NodeId logits = g.leaf(Matrix(2, 3));
    CHECK_THROWS_AS(g.cross_entropy(logits, {0, 3}, 3), ArgumentError);
    CHECK_THROWS_AS(g.cross_entropy(logits, {0}, 3), DimensionError);
    CHECK_THROWS_AS(g.cross_entropy(logits, {0, 1}, 5), ArgumentError);
}
