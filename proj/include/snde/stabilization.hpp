#pragma once

// The stabilization term -gamma * G^+(u) g(u) and its wrapper around a
// base vector field. G^+ is formed by solving the small m x m system
// G G^T w = g (Cholesky after a spectral condition check), never by a
// full decomposition of G.

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "snde/integrate.hpp"
#include "snde/jacobian.hpp"
#include "snde/linalg.hpp"
#include "snde/manifold.hpp"
#include "snde/trajectory.hpp"

namespace snde {

struct SingularConfigurationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

constexpr double kConditionLimit = 1e12;

/// G^+(u) g(u) restricted to the stabilized coordinates. Columns of G
/// belonging to masked-out coordinates are zeroed, so those coordinates
/// receive exactly zero correction. Scalar-generic: instantiating with
/// Dual<double> yields the exact Jacobian of the term.
template <class S>
void stabilization_term_t(const ConstraintManifold& mf, std::span<const S> u,
                          std::span<S> out) {
    const int n = mf.n, m = mf.m;
    std::vector<S> G(static_cast<std::size_t>(m) * n);
    std::vector<S> gval(m);
    jacobian_generic<S>(
        [&mf](std::span<const Dual<S>> x, std::span<Dual<S>> y) { mf.eval_g(x, y); },
        u, m, G.data());
    mf.eval_g(u, std::span<S>(gval.data(), m));

    for (int j = 0; j < n; ++j) {
        if (!mf.stabilized[j])
            for (int i = 0; i < m; ++i) G[i * n + j] = S(0.0);
    }

    std::vector<S> A(static_cast<std::size_t>(m) * m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j <= i; ++j) {
            S s(0.0);
            for (int k = 0; k < n; ++k) s += G[i * n + k] * G[j * n + k];
            A[i * m + j] = s;
            A[j * m + i] = s;
        }

    std::vector<double> Ap(static_cast<std::size_t>(m) * m);
    for (std::size_t i = 0; i < Ap.size(); ++i) Ap[i] = primal(A[i]);
    auto ev = symmetric_eigenvalues(Ap, m);
    double lo = ev[0], hi = ev[0];
    for (double e : ev) {
        lo = std::min(lo, e);
        hi = std::max(hi, e);
    }
    if (!(lo > 0.0) || hi / lo > kConditionLimit)
        throw SingularConfigurationError(
            "constraint Jacobian is rank deficient (cond(GG^T) > 1e12)");

    std::vector<S> w(gval);
    cholesky_inplace(A.data(), m);
    cholesky_solve(A.data(), m, w.data());

    for (int k = 0; k < n; ++k) {
        S s(0.0);
        for (int i = 0; i < m; ++i) s += G[i * n + k] * w[i];
        out[k] = s;
    }
}

inline std::vector<double> stabilization_term(const ConstraintManifold& mf,
                                              std::span<const double> u) {
    std::vector<double> out(mf.n);
    stabilization_term_t<double>(mf, u, out);
    return out;
}

/// A base vector field with the stabilization term attached.
/// gamma == 0 evaluates the base field alone, bit for bit.
struct StabilizedField {
    RhsFn base;
    ConstraintManifold manifold;
    double gamma = 0.0;

    StabilizedField(RhsFn f, ConstraintManifold mf, double g)
        : base(std::move(f)), manifold(std::move(mf)), gamma(g) {
        if (gamma < 0.0) throw std::invalid_argument("gamma must be nonnegative");
    }

    RhsFn rhs() const {
        if (gamma == 0.0) return base;
        return [this](double t, std::span<const double> u, std::span<double> du) {
            base(t, u, du);
            std::vector<double> term(manifold.n);
            stabilization_term_t<double>(manifold, u, term);
            for (int k = 0; k < manifold.n; ++k) du[k] -= gamma * term[k];
        };
    }
};

inline std::vector<double> stabilized_rhs(const StabilizedField& sf, std::span<const double> u,
                                          double t) {
    std::vector<double> du(u.size());
    sf.rhs()(t, u, du);
    return du;
}

/// Empirical lower bound for gamma per the stability condition:
/// max over probes of ||G(u) f(u)|| / ||g(u)|| with lambda_0 = 1
/// (G F is the identity for F = G^+ at full row rank).
inline double gamma_lower_bound(const RhsFn& field, const ConstraintManifold& mf,
                                const std::vector<std::vector<double>>& probes,
                                double t = 0.0) {
    if (probes.empty()) throw std::invalid_argument("gamma_lower_bound: empty probe set");
    double bound = 0.0;
    for (const auto& u : probes) {
        std::vector<double> G(static_cast<std::size_t>(mf.m) * mf.n), gval(mf.m);
        jacobian_generic<double>(
            [&mf](std::span<const Dual1> x, std::span<Dual1> y) { mf.eval_g(x, y); },
            std::span<const double>(u), mf.m, G.data());
        mf.eval_g(std::span<const double>(u), std::span<double>(gval.data(), mf.m));
        double gnorm = norm2(gval);
        if (gnorm == 0.0) throw std::invalid_argument("gamma_lower_bound: probe lies on the manifold");
        std::vector<double> f(mf.n), Gf(mf.m, 0.0);
        field(t, u, f);
        for (int i = 0; i < mf.m; ++i)
            for (int k = 0; k < mf.n; ++k) Gf[i] += G[i * mf.n + k] * f[k];
        bound = std::max(bound, norm2(Gf) / gnorm);
    }
    return bound;
}

/// Lyapunov function V(u) = 0.5 * g(u)^T g(u) along a trajectory.
inline std::vector<double> lyapunov_series(const ConstraintManifold& mf,
                                           const Trajectory& traj) {
    std::vector<double> out(traj.size());
    std::vector<double> g(mf.m);
    for (std::size_t i = 0; i < traj.size(); ++i) {
        mf.eval_g(traj.state(i), std::span<double>(g.data(), mf.m));
        out[i] = 0.5 * dot(g, g);
    }
    return out;
}

}  // namespace snde
