#pragma once

// Constraint manifolds M = { u : g(u) = 0 }. The residual map g is
// stored type-erased at three scalar levels (double, dual, dual-over-
// dual) so both the constraint Jacobian and its derivative are exact.

#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "snde/dual.hpp"

namespace snde {

struct ConstraintManifold {
    int n = 0;  ///< state dimension
    int m = 0;  ///< constraint count, m < n

    std::function<void(std::span<const double>, std::span<double>)> g0;
    std::function<void(std::span<const Dual1>, std::span<Dual1>)> g1;
    std::function<void(std::span<const Dual2>, std::span<Dual2>)> g2;

    /// Per-trajectory conserved constants (L0 | C0 | E0 | path anchor),
    /// captured at t = 0 so that g(u0) = 0 by construction.
    std::vector<double> reference;

    /// Coordinates receiving stabilization; masked-out coordinates
    /// (e.g. the lifted time variable) are never perturbed.
    std::vector<char> stabilized;

    template <class S>
    void eval_g(std::span<const S> u, std::span<S> out) const {
        if constexpr (std::is_same_v<S, double>) g0(u, out);
        else if constexpr (std::is_same_v<S, Dual1>) g1(u, out);
        else g2(u, out);
    }
};

/// Build a manifold from a scalar-generic residual callable
/// g(span<const S> u, span<S> out).
template <class G>
ConstraintManifold make_manifold(int n, int m, G g, std::vector<double> reference = {},
                                 std::vector<char> stabilized = {}) {
    if (m >= n) throw std::invalid_argument("constraint count must be below state dimension");
    ConstraintManifold cm;
    cm.n = n;
    cm.m = m;
    cm.g0 = [g](std::span<const double> u, std::span<double> out) { g(u, out); };
    cm.g1 = [g](std::span<const Dual1> u, std::span<Dual1> out) { g(u, out); };
    cm.g2 = [g](std::span<const Dual2> u, std::span<Dual2> out) { g(u, out); };
    cm.reference = std::move(reference);
    cm.stabilized = stabilized.empty() ? std::vector<char>(n, 1) : std::move(stabilized);
    if (static_cast<int>(cm.stabilized.size()) != n)
        throw std::invalid_argument("stabilization mask length mismatch");
    return cm;
}

}  // namespace snde
