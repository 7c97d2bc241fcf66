#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "sdelab/errors.hpp"

namespace sdelab {

using Vec = std::vector<double>;

// Dense row-major matrix. State dimensions in this project are tiny (d <= 4
// in all shipped experiments), so no effort is spent on anything clever.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

    double& operator()(int i, int j) { return a[static_cast<std::size_t>(i) * cols + j]; }
    double operator()(int i, int j) const { return a[static_cast<std::size_t>(i) * cols + j]; }

    void set_zero() { std::fill(a.begin(), a.end(), 0.0); }

    static Mat identity(int n) {
        Mat m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }
};

// Rank-3 tensor, used for the diffusion gradient (i, j, m) -> d_m sigma^{ij}
// and for the Milstein contraction coefficients.
struct Tensor3 {
    int n0 = 0, n1 = 0, n2 = 0;
    std::vector<double> a;

    Tensor3() = default;
    Tensor3(int a0, int a1, int a2)
        : n0(a0), n1(a1), n2(a2), a(static_cast<std::size_t>(a0) * a1 * a2, 0.0) {}

    double& operator()(int i, int j, int k) {
        return a[(static_cast<std::size_t>(i) * n1 + j) * n2 + k];
    }
    double operator()(int i, int j, int k) const {
        return a[(static_cast<std::size_t>(i) * n1 + j) * n2 + k];
    }

    void set_zero() { std::fill(a.begin(), a.end(), 0.0); }
};

inline double dot(const Vec& x, const Vec& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

inline double norm2(const Vec& x) { return std::sqrt(dot(x, x)); }

// y = m x
inline void matvec(const Mat& m, const double* x, double* y) {
    for (int i = 0; i < m.rows; ++i) {
        double s = 0.0;
        for (int j = 0; j < m.cols; ++j) s += m(i, j) * x[j];
        y[i] = s;
    }
}

// Solve m x = b in place by LU with partial pivoting. m is destroyed.
inline void solve_inplace(Mat& m, Vec& b) {
    const int n = m.rows;
    for (int col = 0; col < n; ++col) {
        int piv = col;
        double best = std::fabs(m(col, col));
        for (int r = col + 1; r < n; ++r) {
            const double v = std::fabs(m(r, col));
            if (v > best) {
                best = v;
                piv = r;
            }
        }
        if (best == 0.0) throw NumericalError("singular matrix in linear solve");
        if (piv != col) {
            for (int j = 0; j < n; ++j) std::swap(m(piv, j), m(col, j));
            std::swap(b[piv], b[col]);
        }
        const double inv = 1.0 / m(col, col);
        for (int r = col + 1; r < n; ++r) {
            const double f = m(r, col) * inv;
            if (f == 0.0) continue;
            for (int j = col + 1; j < n; ++j) m(r, j) -= f * m(col, j);
            b[r] -= f * b[col];
        }
    }
    for (int row = n - 1; row >= 0; --row) {
        double s = b[row];
        for (int j = row + 1; j < n; ++j) s -= m(row, j) * b[j];
        b[row] = s / m(row, row);
    }
}

}  // namespace sdelab
