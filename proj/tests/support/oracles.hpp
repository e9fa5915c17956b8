#pragma once

// Test-only reference implementations, independent of the library paths they
// check: finite differences for gradients, plain sorting for selection,
// Gauss-Jordan least squares for the regression tasks.

#include <algorithm>
#include <cmath>
#include <vector>

#include "lori/graph.hpp"
#include "lori/matrix.hpp"

namespace lori::testing {

/// Central finite differences d(loss)/d(leaf[k]) with step h.
inline double fd_entry(GradGraph& g, NodeId loss, NodeId leaf, std::size_t k, double h = 1e-5) {
    Matrix saved = g.value(leaf);
    Matrix bumped = saved;
    bumped[k] = saved[k] + h;
    g.set_value(leaf, bumped);
    g.recompute();
    const double up = g.scalar(loss);
    bumped[k] = saved[k] - h;
    g.set_value(leaf, bumped);
    g.recompute();
    const double down = g.scalar(loss);
    g.set_value(leaf, saved);
    g.recompute();
    return (up - down) / (2.0 * h);
}

/// max over entries of |ad - fd| / max(1, |ad|, |fd|).
inline double gradcheck_entrywise(GradGraph& g, NodeId loss, NodeId leaf, const Matrix& grad,
                                  double h = 1e-5) {
    double worst = 0.0;
    for (std::size_t k = 0; k < grad.size(); ++k) {
        const double fd = fd_entry(g, loss, leaf, k, h);
        const double ad = grad[k];
        const double rel = std::abs(ad - fd) / std::max({1.0, std::abs(ad), std::abs(fd)});
        worst = std::max(worst, rel);
    }
    return worst;
}

/// Central finite difference of the loss along a direction in one leaf,
/// compared against <grad, dir>. Cheap enough for large leaves.
inline double gradcheck_directional(GradGraph& g, NodeId loss, NodeId leaf, const Matrix& grad,
                                    const Matrix& dir, double h = 1e-5) {
    Matrix saved = g.value(leaf);
    Matrix bumped = saved;
    for (std::size_t k = 0; k < bumped.size(); ++k) bumped[k] = saved[k] + h * dir[k];
    g.set_value(leaf, bumped);
    g.recompute();
    const double up = g.scalar(loss);
    for (std::size_t k = 0; k < bumped.size(); ++k) bumped[k] = saved[k] - h * dir[k];
    g.set_value(leaf, bumped);
    g.recompute();
    const double down = g.scalar(loss);
    g.set_value(leaf, saved);
    g.recompute();
    const double fd = (up - down) / (2.0 * h);
    const double ad = frob_inner(grad, dir);
    return std::abs(ad - fd) / std::max({1.0, std::abs(ad), std::abs(fd)});
}

/// Sort-based k-th largest |value| (the oracle for kth_largest_abs).
inline double sorted_kth_abs(std::vector<double> values, std::size_t k) {
    for (double& v : values) v = std::abs(v);
    std::sort(values.begin(), values.end(), std::greater<double>());
    return values[k - 1];
}

/// Least squares theta minimizing ||X theta - Y||_F via normal equations
/// with Gauss-Jordan elimination (partial pivoting).
inline Matrix least_squares(const Matrix& x, const Matrix& y) {
    const std::size_t d = x.cols();
    Matrix gram = matmul(transpose(x), x);
    Matrix rhs = matmul(transpose(x), y);
    // Tiny ridge keeps the toy systems well posed.
    for (std::size_t i = 0; i < d; ++i) gram(i, i) += 1e-10;

    for (std::size_t col = 0; col < d; ++col) {
        std::size_t pivot = col;
        for (std::size_t i = col + 1; i < d; ++i) {
            if (std::abs(gram(i, col)) > std::abs(gram(pivot, col))) pivot = i;
        }
        for (std::size_t j = 0; j < d; ++j) std::swap(gram(col, j), gram(pivot, j));
        for (std::size_t j = 0; j < rhs.cols(); ++j) std::swap(rhs(col, j), rhs(pivot, j));
        const double diag = gram(col, col);
        for (std::size_t j = 0; j < d; ++j) gram(col, j) /= diag;
        for (std::size_t j = 0; j < rhs.cols(); ++j) rhs(col, j) /= diag;
        for (std::size_t i = 0; i < d; ++i) {
            if (i == col) continue;
            const double f = gram(i, col);
            if (f == 0.0) continue;
            for (std::size_t j = 0; j < d; ++j) gram(i, j) -= f * gram(col, j);
            for (std::size_t j = 0; j < rhs.cols(); ++j) rhs(i, j) -= f * rhs(col, j);
        }
    }
    return rhs;
}

/// Kolmogorov-Smirnov statistic of samples against a uniform [lo, hi] cdf.
inline double ks_statistic_uniform(std::vector<double> samples, double lo, double hi) {
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double cdf = std::clamp((samples[i] - lo) / (hi - lo), 0.0, 1.0);
        d = std::max(d, cdf - static_cast<double>(i) / n);
        d = std::max(d, static_cast<double>(i + 1) / n - cdf);
    }
    return d;
}

} // namespace lori::testing
