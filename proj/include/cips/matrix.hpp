#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace cips {

/// Dense row-major matrix of doubles. Immutable-by-convention once handed to
/// a Graph or a model; helpers below return new matrices.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}
    Matrix(std::size_t r, std::size_t c, std::vector<double> values)
        : rows(r), cols(c), data(std::move(values)) {
        if (data.size() != rows * cols)
            throw std::invalid_argument("Matrix: data length != rows*cols");
    }

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::size_t size() const { return data.size(); }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    static Matrix zeros(std::size_t r, std::size_t c) { return Matrix(r, c, 0.0); }
    static Matrix ones(std::size_t r, std::size_t c) { return Matrix(r, c, 1.0); }
    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }
    static Matrix row_vector(std::vector<double> v) {
        std::size_t n = v.size();
        return Matrix(1, n, std::move(v));
    }
    static Matrix col_vector(std::vector<double> v) {
        std::size_t n = v.size();
        return Matrix(n, 1, std::move(v));
    }
};

bool all_finite(const Matrix& m);

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);
/// Adds a 1 x cols row vector to every row of a.
Matrix add_row(const Matrix& a, const Matrix& row);
/// Horizontal concatenation (same row count).
Matrix hconcat(const std::vector<Matrix>& parts);
/// Vertical concatenation (same col count).
Matrix vconcat(const std::vector<Matrix>& parts);
double sum_all(const Matrix& m);

/// Cholesky factorization of a symmetric positive-definite matrix.
/// Returns the lower-triangular factor L with A = L L^T.
/// Throws std::runtime_error when A is not positive definite.
Matrix cholesky(const Matrix& a);
/// Solves A x = b given the Cholesky factor L of A; b is n x k.
Matrix cholesky_solve(const Matrix& l, const Matrix& b);
/// Solves the SPD system A x = b directly (factor + solve).
Matrix solve_spd(const Matrix& a, const Matrix& b);
/// Inverse of an SPD matrix via its Cholesky factor.
Matrix inverse_spd(const Matrix& a);

}  // namespace cips
