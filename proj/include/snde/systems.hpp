#pragma once

// Ground-truth dynamics, constraint builders, and initial-condition
// samplers for the five benchmark systems.

#include <cmath>
#include <map>
#include <memory>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "snde/field.hpp"
#include "snde/manifold.hpp"
#include "snde/tape.hpp"

namespace snde {

enum class ModelKind { node, so_node, hybrid };

struct SystemDefinition {
    std::string name;
    int dim = 0;
    std::shared_ptr<const ErasedMap> truth;
    std::shared_ptr<const ErasedMap> known_component;  ///< hybrid variants only
    std::function<std::vector<double>(std::span<const double>)> reference_of;
    std::function<ConstraintManifold(std::span<const double>)> manifold_at;
    std::function<std::vector<double>(std::uint64_t)> sample_ic;
    double default_dt = 0.1;
    std::function<double(std::span<const double>)> horizon_of;
    std::function<std::vector<double>(double, double)> breakpoints;  ///< may be empty
    AuxFn aux;
    int aux_dim = 0;
    ModelKind default_model = ModelKind::node;
    bool time_lifted = false;
    std::vector<char> angular;  ///< per-coordinate wrap flags for measure binning
    std::map<std::string, double> params;

    std::shared_ptr<Field> truth_field() const {
        return std::make_shared<AnalyticField>(truth);
    }
};

namespace detail {

inline std::mt19937_64 ic_rng(std::uint64_t seed) {
    // splitmix-style scramble so consecutive seeds decorrelate
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return std::mt19937_64(z ^ (z >> 31));
}

}  // namespace detail

// ---------------------------------------------------------------- two-body

inline SystemDefinition two_body() {
    SystemDefinition s;
    s.name = "two_body";
    s.dim = 4;
    s.default_dt = 0.1;
    s.default_model = ModelKind::so_node;
    s.angular = {0, 0, 0, 0};
    s.truth = std::make_shared<ErasedMap>(erase_map(4, 4, [](double, auto u, auto du) {
        using S = std::decay_t<decltype(u[0])>;
        S r2 = u[0] * u[0] + u[1] * u[1];
        S r3 = r2 * sqrt(r2);
        du[0] = u[2];
        du[1] = u[3];
        du[2] = -u[0] / r3;
        du[3] = -u[1] / r3;
    }));
    s.reference_of = [](std::span<const double> u0) {
        return std::vector<double>{u0[0] * u0[3] - u0[1] * u0[2]};  // L0
    };
    s.manifold_at = [ref = s.reference_of](std::span<const double> u0) {
        double L0 = ref(u0)[0];
        return make_manifold(4, 1, [L0](auto u, auto g) {
            g[0] = u[0] * u[3] - u[1] * u[2] - L0;
        }, {L0});
    };
    s.sample_ic = [](std::uint64_t seed) {
        auto rng = detail::ic_rng(seed);
        double e = std::uniform_real_distribution<double>(0.5, 0.7)(rng);
        return std::vector<double>{1.0 - e, 0.0, 0.0, std::sqrt((1.0 - e) / (1.0 + e))};
    };
    // one orbital period, from vis-viva: a = (2/r0 - v0^2)^-1, T = 2 pi a^{3/2}
    s.horizon_of = [](std::span<const double> u0) {
        double r0 = std::hypot(u0[0], u0[1]);
        double v2 = u0[2] * u0[2] + u0[3] * u0[3];
        double a = 1.0 / (2.0 / r0 - v2);
        return 2.0 * std::numbers::pi * std::pow(a, 1.5);
    };
    return s;
}

// -------------------------------------------------------------- rigid body

inline SystemDefinition rigid_body() {
    SystemDefinition s;
    s.name = "rigid_body";
    s.dim = 3;
    s.default_dt = 0.1;
    s.default_model = ModelKind::node;
    s.angular = {0, 0, 0};
    const double I1 = 2.0, I2 = 1.0, I3 = 2.0 / 3.0;
    s.params = {{"I1", I1}, {"I2", I2}, {"I3", I3}};
    s.truth = std::make_shared<ErasedMap>(erase_map(3, 3, [=](double, auto u, auto du) {
        du[0] = (1.0 / I3 - 1.0 / I2) * u[1] * u[2];
        du[1] = (1.0 / I1 - 1.0 / I3) * u[2] * u[0];
        du[2] = (1.0 / I2 - 1.0 / I1) * u[0] * u[1];
    }));
    s.reference_of = [](std::span<const double> u0) {
        return std::vector<double>{u0[0] * u0[0] + u0[1] * u0[1] + u0[2] * u0[2]};  // C0
    };
    s.manifold_at = [ref = s.reference_of](std::span<const double> u0) {
        double C0 = ref(u0)[0];
        return make_manifold(3, 1, [C0](auto u, auto g) {
            g[0] = u[0] * u[0] + u[1] * u[1] + u[2] * u[2] - C0;
        }, {C0});
    };
    s.sample_ic = [](std::uint64_t seed) {
        auto rng = detail::ic_rng(seed);
        double phi = std::uniform_real_distribution<double>(0.5, 1.5)(rng);
        return std::vector<double>{std::cos(phi), 0.0, std::sin(phi)};
    };
    s.horizon_of = [](std::span<const double>) { return 15.0; };
    return s;
}

// ---------------------------------------------------------- DC-DC converter

/// Square-wave switch state: 0 on [0, 1.5), 1 on [1.5, 3), ...
inline double dc_switch(double t) {
    double k = std::floor(t / 1.5);
    return (static_cast<long long>(k) % 2 == 0) ? 0.0 : 1.0;
}

inline SystemDefinition dc_converter() {
    SystemDefinition s;
    s.name = "dc_converter";
    s.dim = 3;
    s.default_dt = 0.1;
    s.default_model = ModelKind::node;
    s.angular = {0, 0, 0};
    const double C1 = 0.1, C2 = 0.2, L3 = 0.5;
    s.params = {{"C1", C1}, {"C2", C2}, {"L3", L3}, {"switch_half_period", 1.5}};
    s.truth = std::make_shared<ErasedMap>(erase_map(3, 3, [=](double t, auto u, auto du) {
        double sw = dc_switch(t);
        du[0] = (1.0 - sw) * u[2] / C1;
        du[1] = sw * u[2] / C2;
        du[2] = (-(1.0 - sw) * u[0] - sw * u[1]) / L3;
    }));
    s.reference_of = [=](std::span<const double> u0) {
        return std::vector<double>{C1 * u0[0] * u0[0] + C2 * u0[1] * u0[1] + L3 * u0[2] * u0[2]};
    };
    s.manifold_at = [=, ref = s.reference_of](std::span<const double> u0) {
        double E0 = ref(u0)[0];
        return make_manifold(3, 1, [=](auto u, auto g) {
            g[0] = C1 * u[0] * u[0] + C2 * u[1] * u[1] + L3 * u[2] * u[2] - E0;
        }, {E0});
    };
    s.sample_ic = [](std::uint64_t seed) {
        auto rng = detail::ic_rng(seed);
        std::uniform_real_distribution<double> d(0.0, 1.0);
        double a = d(rng), b = d(rng), c = d(rng);
        return std::vector<double>{a, b, c};
    };
    s.horizon_of = [](std::span<const double>) { return 10.0; };
    s.breakpoints = [](double t0, double t1) {
        std::vector<double> bp;
        for (double t = 1.5; t < t1; t += 1.5)
            if (t > t0) bp.push_back(t);
        return bp;
    };
    s.aux = [](double t) { return std::vector<double>{dc_switch(t)}; };
    s.aux_dim = 1;
    return s;
}

// ---------------------------------------------------------------- robot arm

namespace detail {

template <class S>
void arm_endpoint(std::span<const S> th, S* e) {
    e[0] = cos(th[0]) + cos(th[1]) + cos(th[2]);
    e[1] = sin(th[0]) + sin(th[1]) + sin(th[2]);
}

}  // namespace detail

inline SystemDefinition robot_arm() {
    SystemDefinition s;
    s.name = "robot_arm";
    s.dim = 4;  // (theta1..3, tau) autonomous lift
    s.default_dt = 0.1;
    s.default_model = ModelKind::node;
    s.time_lifted = true;
    s.angular = {1, 1, 1, 0};
    const double two_pi = 2.0 * std::numbers::pi;
    // theta-dot = e'^T (e' e'^T)^-1 p-dot(tau), tau-dot = 1
    s.truth = std::make_shared<ErasedMap>(erase_map(4, 4, [two_pi](double, auto u, auto du) {
        using S = std::decay_t<decltype(u[0])>;
        S J[6];  // e' is 2 x 3
        for (int j = 0; j < 3; ++j) {
            J[0 * 3 + j] = -sin(u[j]);
            J[1 * 3 + j] = cos(u[j]);
        }
        S pd[2] = {-cos(two_pi * u[3]), S(0.0)};
        S a = J[0] * J[0] + J[1] * J[1] + J[2] * J[2];
        S b = J[0] * J[3] + J[1] * J[4] + J[2] * J[5];
        S c = J[3] * J[3] + J[4] * J[4] + J[5] * J[5];
        S det = a * c - b * b;
        S w0 = (c * pd[0] - b * pd[1]) / det;
        S w1 = (a * pd[1] - b * pd[0]) / det;
        for (int j = 0; j < 3; ++j) du[j] = J[0 * 3 + j] * w0 + J[1 * 3 + j] * w1;
        du[3] = S(1.0);
    }));
    s.reference_of = [](std::span<const double> u0) {
        double e0[2];
        detail::arm_endpoint(u0.subspan(0, 3), e0);
        return std::vector<double>{e0[0], e0[1]};
    };
    s.manifold_at = [two_pi, ref = s.reference_of](std::span<const double> u0) {
        auto e0 = ref(u0);
        // g(theta, tau) = e(theta) - p(tau); stabilization is masked off tau
        return make_manifold(4, 2, [=](auto u, auto g) {
            using S = std::decay_t<decltype(u[0])>;
            S e[2];
            detail::arm_endpoint(u.subspan(0, 3), e);
            S px = e0[0] - sin(two_pi * u[3]) / two_pi;
            g[0] = e[0] - px;
            g[1] = e[1] - e0[1];
        }, e0, {1, 1, 1, 0});
    };
    s.sample_ic = [](std::uint64_t seed) {
        auto rng = detail::ic_rng(seed);
        double th0 = std::uniform_real_distribution<double>(std::numbers::pi / 8.0,
                                                            std::numbers::pi / 4.0)(rng);
        return std::vector<double>{th0, -th0, th0, 0.0};
    };
    s.horizon_of = [](std::span<const double>) { return 5.0; };
    s.aux = [two_pi](double t) { return std::vector<double>{-std::cos(two_pi * t), 0.0}; };
    s.aux_dim = 2;
    return s;
}

// ----------------------------------------------------------- double pendulum

namespace detail {

struct DoublePendulumParams {
    double m1 = 1.0, m2 = 1.0, l1 = 1.0, l2 = 1.0, g = 9.81;
};

template <class S>
S dp_acc1(const DoublePendulumParams& p, std::span<const S> u) {
    S d = u[0] - u[1];
    S den = 2.0 * p.m1 + p.m2 - p.m2 * cos(2.0 * d);
    return (-p.g * (2.0 * p.m1 + p.m2) * sin(u[0]) - p.m2 * p.g * sin(u[0] - 2.0 * u[1]) -
            2.0 * sin(d) * p.m2 * (u[3] * u[3] * p.l2 + u[2] * u[2] * p.l1 * cos(d))) /
           (p.l1 * den);
}

template <class S>
S dp_acc2(const DoublePendulumParams& p, std::span<const S> u) {
    S d = u[0] - u[1];
    S den = 2.0 * p.m1 + p.m2 - p.m2 * cos(2.0 * d);
    return (2.0 * sin(d) *
            (u[2] * u[2] * p.l1 * (p.m1 + p.m2) + p.g * (p.m1 + p.m2) * cos(u[0]) +
             u[3] * u[3] * p.l2 * p.m2 * cos(d))) /
           (p.l2 * den);
}

template <class S>
S dp_energy(const DoublePendulumParams& p, std::span<const S> u) {
    S d = u[0] - u[1];
    return 0.5 * p.m1 * p.l1 * p.l1 * u[2] * u[2] +
           0.5 * p.m2 *
               (p.l1 * p.l1 * u[2] * u[2] + p.l2 * p.l2 * u[3] * u[3] +
                2.0 * p.l1 * p.l2 * u[2] * u[3] * cos(d)) -
           (p.m1 + p.m2) * p.g * p.l1 * cos(u[0]) - p.m2 * p.g * p.l2 * cos(u[1]);
}

}  // namespace detail

inline SystemDefinition double_pendulum(bool hybrid = false) {
    SystemDefinition s;
    s.name = hybrid ? "double_pendulum_hybrid" : "double_pendulum";
    s.dim = 4;
    s.default_dt = 0.05;
    s.default_model = hybrid ? ModelKind::hybrid : ModelKind::so_node;
    s.angular = {1, 1, 0, 0};
    detail::DoublePendulumParams p;
    s.params = {{"m1", p.m1}, {"m2", p.m2}, {"l1", p.l1}, {"l2", p.l2}, {"g", p.g}};
    s.truth = std::make_shared<ErasedMap>(erase_map(4, 4, [p](double, auto u, auto du) {
        du[0] = u[2];
        du[1] = u[3];
        du[2] = detail::dp_acc1(p, u);
        du[3] = detail::dp_acc2(p, u);
    }));
    s.known_component = std::make_shared<ErasedMap>(erase_map(4, 1, [p](double, auto u, auto a) {
        a[0] = detail::dp_acc1(p, u);
    }));
    s.reference_of = [p](std::span<const double> u0) {
        return std::vector<double>{detail::dp_energy(p, u0)};
    };
    s.manifold_at = [p, ref = s.reference_of](std::span<const double> u0) {
        double E0 = ref(u0)[0];
        return make_manifold(4, 1, [p, E0](auto u, auto g) {
            g[0] = detail::dp_energy(p, u) - E0;
        }, {E0});
    };
    s.sample_ic = [](std::uint64_t seed) {
        auto rng = detail::ic_rng(seed);
        double phi = std::uniform_real_distribution<double>(std::numbers::pi / 4.0,
                                                            3.0 * std::numbers::pi / 4.0)(rng);
        return std::vector<double>{phi, phi, 0.0, 0.0};
    };
    s.horizon_of = [hybrid](std::span<const double>) { return hybrid ? 60.0 : 10.0; };
    return s;
}

inline SystemDefinition get_system(const std::string& name) {
    if (name == "two_body") return two_body();
    if (name == "rigid_body") return rigid_body();
    if (name == "dc_converter") return dc_converter();
    if (name == "robot_arm") return robot_arm();
    if (name == "double_pendulum") return double_pendulum(false);
    if (name == "double_pendulum_hybrid") return double_pendulum(true);
    throw std::invalid_argument("unknown system: " + name);
}

}  // namespace snde
