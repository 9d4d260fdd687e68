#include "cips/matrix.hpp"

#include <cmath>

namespace cips {

namespace {
void require(bool cond, const char* msg) {
    if (!cond) throw std::invalid_argument(msg);
}
}  // namespace

bool all_finite(const Matrix& m) {
    for (double v : m.data)
        if (!std::isfinite(v)) return false;
    return true;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    require(a.cols == b.rows, "matmul: inner dimensions differ");
    Matrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t k = 0; k < a.cols; ++k) {
            double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* brow = &b.data[k * b.cols];
            double* orow = &out.data[i * out.cols];
            for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

Matrix transpose(const Matrix& m) {
    Matrix out(m.cols, m.rows);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) out(j, i) = m(i, j);
    return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
    require(a.same_shape(b), "add: shape mismatch");
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b.data[i];
    return out;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    require(a.same_shape(b), "sub: shape mismatch");
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= b.data[i];
    return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    require(a.same_shape(b), "hadamard: shape mismatch");
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= b.data[i];
    return out;
}

Matrix scale(const Matrix& a, double s) {
    Matrix out = a;
    for (double& v : out.data) v *= s;
    return out;
}

Matrix add_row(const Matrix& a, const Matrix& row) {
    require(row.rows == 1 && row.cols == a.cols, "add_row: row vector shape mismatch");
    Matrix out = a;
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) out(i, j) += row(0, j);
    return out;
}

Matrix hconcat(const std::vector<Matrix>& parts) {
    require(!parts.empty(), "hconcat: empty");
    std::size_t rows = parts.front().rows, cols = 0;
    for (const Matrix& p : parts) {
        require(p.rows == rows, "hconcat: row mismatch");
        cols += p.cols;
    }
    Matrix out(rows, cols);
    std::size_t off = 0;
    for (const Matrix& p : parts) {
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < p.cols; ++j) out(i, off + j) = p(i, j);
        off += p.cols;
    }
    return out;
}

Matrix vconcat(const std::vector<Matrix>& parts) {
    require(!parts.empty(), "vconcat: empty");
    std::size_t cols = parts.front().cols, rows = 0;
    for (const Matrix& p : parts) {
        require(p.cols == cols, "vconcat: col mismatch");
        rows += p.rows;
    }
    Matrix out(rows, cols);
    std::size_t off = 0;
    for (const Matrix& p : parts) {
        for (std::size_t i = 0; i < p.rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) out(off + i, j) = p(i, j);
        off += p.rows;
    }
    return out;
}

double sum_all(const Matrix& m) {
    double s = 0.0;
    for (double v : m.data) s += v;
    return s;
}

Matrix cholesky(const Matrix& a) {
    require(a.rows == a.cols, "cholesky: not square");
    std::size_t n = a.rows;
    Matrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double d = a(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        if (!(d > 0.0)) throw std::runtime_error("cholesky: matrix not positive definite");
        l(j, j) = std::sqrt(d);
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / l(j, j);
        }
    }
    return l;
}

Matrix cholesky_solve(const Matrix& l, const Matrix& b) {
    require(l.rows == l.cols && l.rows == b.rows, "cholesky_solve: shape mismatch");
    std::size_t n = l.rows, k = b.cols;
    Matrix y(n, k), x(n, k);
    // forward: L y = b
    for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = b(i, c);
            for (std::size_t j = 0; j < i; ++j) s -= l(i, j) * y(j, c);
            y(i, c) = s / l(i, i);
        }
        // backward: L^T x = y
        for (std::size_t ii = n; ii-- > 0;) {
            double s = y(ii, c);
            for (std::size_t j = ii + 1; j < n; ++j) s -= l(j, ii) * x(j, c);
            x(ii, c) = s / l(ii, ii);
        }
    }
    return x;
}

Matrix solve_spd(const Matrix& a, const Matrix& b) { return cholesky_solve(cholesky(a), b); }

Matrix inverse_spd(const Matrix& a) {
    return cholesky_solve(cholesky(a), Matrix::identity(a.rows));
}

}  // namespace cips
