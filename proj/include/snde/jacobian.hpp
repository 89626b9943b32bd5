#pragma once

// Forward-mode Jacobians. Functions are templated over the scalar type
// so that nesting (Dual over Dual) provides the second derivatives the
// stabilization term needs.

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "snde/dual.hpp"

namespace snde {

/// Jacobian of func: R^n -> R^m at u, computed with one dual pass per
/// input direction. func must be callable as func(span<const Dual<S>>,
/// span<Dual<S>>). Output J is row-major m x n with scalar type S.
template <class S, class F>
void jacobian_generic(F&& func, std::span<const S> u, int m, S* jac, S* value = nullptr) {
    const int n = static_cast<int>(u.size());
    std::vector<Dual<S>> x(n), y(m);
    for (int k = 0; k < n; ++k) x[k] = Dual<S>(u[k]);
    for (int dir = 0; dir < n; ++dir) {
        x[dir].d = S(1.0);
        func(std::span<const Dual<S>>(x.data(), n), std::span<Dual<S>>(y.data(), m));
        for (int i = 0; i < m; ++i) jac[i * n + dir] = y[i].d;
        x[dir].d = S(0.0);
    }
    if (value) {
        for (int i = 0; i < m; ++i) value[i] = y[i].v;
    }
}

/// Double-precision Jacobian of a map R^n -> R^m, validating finiteness.
template <class F>
std::vector<double> jacobian(F&& func, std::span<const double> u, int m) {
    const int n = static_cast<int>(u.size());
    std::vector<double> jac(static_cast<std::size_t>(m) * n);
    std::vector<double> val(m);
    jacobian_generic<double>(func, u, m, jac.data(), val.data());
    for (int i = 0; i < m; ++i)
        if (!std::isfinite(val[i]))
            throw std::runtime_error("jacobian: component " + std::to_string(i) +
                                     " is non-finite at evaluation point");
    return jac;
}

}  // namespace snde
