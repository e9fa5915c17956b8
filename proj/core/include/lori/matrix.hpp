#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "lori/errors.hpp"

namespace lori {

/// Dense row-major matrix of doubles.
///
/// Every reduction in this library runs in a fixed order (rows outer,
/// columns inner, accumulation index ascending) so that results are
/// reproducible bit for bit across runs of the same binary.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    /// Builds from nested braces: Matrix::of({{1,2},{3,4}}).
    static Matrix of(std::initializer_list<std::initializer_list<double>> rows);
    static Matrix identity(std::size_t n);
    static Matrix filled(std::size_t rows, std::size_t cols, double value);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    /// Row-major element access by flat index.
    double& operator[](std::size_t k) { return data_[k]; }
    double operator[](std::size_t k) const { return data_[k]; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }
    std::string shape_str() const;

    bool all_finite() const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

bool operator==(const Matrix& a, const Matrix& b);

/// Standard product with deterministic accumulation (k ascending per entry).
/// Throws DimensionError naming both shapes if a.cols() != b.rows().
Matrix matmul(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& m);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& m, double c);

/// Sum of entrywise products; frob_norm(x) == sqrt(frob_inner(x, x)).
double frob_inner(const Matrix& x, const Matrix& y);
double frob_norm(const Matrix& m);
double max_abs(const Matrix& m);

/// k-th largest absolute value of the sequence (1-based k).
/// The returned value is an order statistic of the multiset {|v|}, so it is
/// deterministic under ties and invariant under permutation of the input.
double kth_largest_abs(std::span<const double> values, std::size_t k);

} // namespace lori
