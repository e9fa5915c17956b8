#include "lori/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>

namespace lori {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (rows_ * cols_ != data_.size()) {
        throw DimensionError("matrix " + std::to_string(rows_) + "x" + std::to_string(cols_) +
                             " cannot hold " + std::to_string(data_.size()) + " values");
    }
}

Matrix Matrix::of(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    Matrix m(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
        if (row.size() != c) {
            throw DimensionError("ragged initializer: row " + std::to_string(i) + " has " +
                                 std::to_string(row.size()) + " entries, expected " + std::to_string(c));
        }
        std::size_t j = 0;
        for (double v : row) m(i, j++) = v;
        ++i;
    }
    return m;
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::filled(std::size_t rows, std::size_t cols, double value) {
    Matrix m(rows, cols);
    std::fill(m.data_.begin(), m.data_.end(), value);
    return m;
}

std::string Matrix::shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
}

bool Matrix::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: " + a.shape_str() + " incompatible with " + b.shape_str());
    }
    Matrix c(a.rows(), b.cols());
    const std::size_t n = a.rows(), m = a.cols(), p = b.cols();
    // (i, k, j) loop order: each c(i, j) accumulates over k ascending, which is
    // the row-major left-to-right order, while staying cache friendly.
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < m; ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < p; ++j) {
                c(i, j) += aik * b(k, j);
            }
        }
    }
    return c;
}

Matrix transpose(const Matrix& m) {
    Matrix t(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
    return t;
}

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(op) + ": " + a.shape_str() + " vs " + b.shape_str());
    }
}

} // namespace

Matrix add(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "add");
    Matrix c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c[i] += b[i];
    return c;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "sub");
    Matrix c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c[i] -= b[i];
    return c;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "hadamard");
    Matrix c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c[i] *= b[i];
    return c;
}

Matrix scale(const Matrix& m, double c) {
    Matrix r = m;
    for (std::size_t i = 0; i < r.size(); ++i) r[i] *= c;
    return r;
}

double frob_inner(const Matrix& x, const Matrix& y) {
    require_same_shape(x, y, "frob_inner");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

double frob_norm(const Matrix& m) {
    return std::sqrt(frob_inner(m, m));
}

double max_abs(const Matrix& m) {
    double r = 0.0;
    for (double v : m.data()) r = std::max(r, std::abs(v));
    return r;
}

double kth_largest_abs(std::span<const double> values, std::size_t k) {
    if (values.empty()) {
        throw ArgumentError("kth_largest_abs: empty input");
    }
    if (k < 1 || k > values.size()) {
        throw ArgumentError("kth_largest_abs: k=" + std::to_string(k) + " out of range [1, " +
                            std::to_string(values.size()) + "]");
    }
    std::vector<double> abs_values(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) abs_values[i] = std::abs(values[i]);
    std::nth_element(abs_values.begin(), abs_values.begin() + (k - 1), abs_values.end(),
                     std::greater<double>());
    return abs_values[k - 1];
}

} // namespace lori
