#pragma once

// Small dense linear algebra helpers. All matrices here are tiny
// (constraint counts m <= 2, state dimensions n <= 5), stored row-major
// in std::vector<double> or templated scalar buffers.

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace snde {

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline bool all_finite(std::span<const double> a) {
    for (double x : a)
        if (!std::isfinite(x)) return false;
    return true;
}

/// Cholesky factorization of a symmetric positive definite m x m matrix
/// (row-major, in place, lower triangle). Throws on a non-positive pivot.
template <class S>
void cholesky_inplace(S* a, int m) {
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j <= i; ++j) {
            S s = a[i * m + j];
            for (int k = 0; k < j; ++k) s -= a[i * m + k] * a[j * m + k];
            if (i == j) {
                using std::sqrt;
                a[i * m + i] = sqrt(s);
            } else {
                a[i * m + j] = s / a[j * m + j];
            }
        }
    }
}

/// Solve L L^T x = b given the Cholesky factor L (lower triangle of a).
template <class S>
void cholesky_solve(const S* a, int m, S* x) {
    for (int i = 0; i < m; ++i) {
        S s = x[i];
        for (int k = 0; k < i; ++k) s -= a[i * m + k] * x[k];
        x[i] = s / a[i * m + i];
    }
    for (int i = m - 1; i >= 0; --i) {
        S s = x[i];
        for (int k = i + 1; k < m; ++k) s -= a[k * m + i] * x[k];
        x[i] = s / a[i * m + i];
    }
}

/// Eigenvalues of a symmetric m x m matrix via cyclic Jacobi rotations.
/// Adequate for the tiny systems that appear in constraint handling.
inline std::vector<double> symmetric_eigenvalues(std::vector<double> a, int m) {
    if (m == 1) return {a[0]};
    for (int sweep = 0; sweep < 60; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < m; ++p)
            for (int q = p + 1; q < m; ++q) off += a[p * m + q] * a[p * m + q];
        if (off < 1e-300) break;
        for (int p = 0; p < m; ++p) {
            for (int q = p + 1; q < m; ++q) {
                double apq = a[p * m + q];
                if (apq == 0.0) continue;
                double theta = (a[q * m + q] - a[p * m + p]) / (2.0 * apq);
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (int k = 0; k < m; ++k) {
                    double akp = a[k * m + p], akq = a[k * m + q];
                    a[k * m + p] = c * akp - s * akq;
                    a[k * m + q] = s * akp + c * akq;
                }
                for (int k = 0; k < m; ++k) {
                    double apk = a[p * m + k], aqk = a[q * m + k];
                    a[p * m + k] = c * apk - s * aqk;
                    a[q * m + k] = s * apk + c * aqk;
                }
            }
        }
    }
    std::vector<double> ev(m);
    for (int i = 0; i < m; ++i) ev[i] = a[i * m + i];
    return ev;
}

}  // namespace snde
