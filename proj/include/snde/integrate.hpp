#pragma once

// Adaptive explicit Runge-Kutta integration with proportional step
// control, exact landing on requested output times, and step statistics.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "snde/linalg.hpp"
#include "snde/tableau.hpp"
#include "snde/trajectory.hpp"

namespace snde {

/// Right-hand side signature: du = f(t, u).
using RhsFn = std::function<void(double t, std::span<const double> u, std::span<double> du)>;

struct StepController {
    double abs_tol = 1e-6;
    double rel_tol = 1e-6;
    double safety = 0.9;
    double min_factor = 0.2;
    double max_factor = 10.0;
    double initial_step = 0.0;  ///< 0 selects automatically

    void validate() const {
        if (abs_tol <= 0 || rel_tol <= 0) throw std::invalid_argument("tolerances must be positive");
        if (safety <= 0 || safety >= 1) throw std::invalid_argument("safety factor must be in (0,1)");
        if (min_factor >= 1 || max_factor <= 1) throw std::invalid_argument("growth factors must bracket 1");
    }
};

enum class SolveStatus { ok, diverged };

struct IntegrationResult {
    Trajectory trajectory;
    SolverStats stats;
    SolveStatus status = SolveStatus::ok;
    double failure_time = 0.0;  ///< meaningful when status == diverged
    std::vector<double> step_times;  ///< endpoint of every accepted step
    std::vector<double> step_sizes;  ///< exact h of every accepted step
};

/// One embedded RK step. Returns false when a stage or update went
/// non-finite, in which case the caller shrinks h and retries.
/// work buffers: stages (s*n), y (n).
inline bool rk_step(const RhsFn& field, const ButcherTableau& tab, double t,
                    std::span<const double> u, double h,
                    std::span<double> u_high, std::span<double> u_low,
                    std::vector<double>& stages, std::vector<double>& y,
                    SolverStats& stats) {
    const int n = static_cast<int>(u.size());
    const int s = tab.stages;
    stages.resize(static_cast<std::size_t>(s) * n);
    y.resize(n);
    for (int i = 0; i < s; ++i) {
        for (int k = 0; k < n; ++k) {
            double acc = u[k];
            for (int j = 0; j < i; ++j) acc += h * tab.a_at(i, j) * stages[j * n + k];
            y[k] = acc;
        }
        field(t + tab.c[i] * h, y, std::span<double>(stages.data() + i * n, n));
        ++stats.rhs_evaluations;
        if (!all_finite(std::span<const double>(stages.data() + i * n, n))) return false;
    }
    for (int k = 0; k < n; ++k) {
        double hi = u[k], lo = u[k];
        for (int i = 0; i < s; ++i) {
            hi += h * tab.b[i] * stages[i * n + k];
            lo += h * tab.b_hat[i] * stages[i * n + k];
        }
        u_high[k] = hi;
        u_low[k] = lo;
    }
    return all_finite(u_high) && all_finite(u_low);
}

/// Convenience wrapper allocating its own work buffers.
inline bool rk_step(const RhsFn& field, const ButcherTableau& tab, double t,
                    std::span<const double> u, double h,
                    std::span<double> u_high, std::span<double> u_low) {
    std::vector<double> stages, y;
    SolverStats stats;
    return rk_step(field, tab, t, u, h, u_high, u_low, stages, y, stats);
}

/// Scaled RMS norm of the embedded error estimate.
inline double error_norm(std::span<const double> u_old, std::span<const double> u_new,
                         std::span<const double> u_low, double abs_tol, double rel_tol) {
    double s = 0.0;
    const std::size_t n = u_old.size();
    for (std::size_t k = 0; k < n; ++k) {
        double scale = abs_tol + rel_tol * std::max(std::abs(u_old[k]), std::abs(u_new[k]));
        double e = (u_new[k] - u_low[k]) / scale;
        s += e * e;
    }
    return std::sqrt(s / static_cast<double>(n));
}

/// Classic automatic initial step selection (two trial evaluations).
inline double initial_step_size(const RhsFn& field, double t0, std::span<const double> u0,
                                int order, double abs_tol, double rel_tol,
                                SolverStats& stats) {
    const int n = static_cast<int>(u0.size());
    std::vector<double> f0(n), u1(n), f1(n);
    field(t0, u0, f0);
    ++stats.rhs_evaluations;
    double d0 = 0.0, d1 = 0.0;
    for (int k = 0; k < n; ++k) {
        double sc = abs_tol + rel_tol * std::abs(u0[k]);
        d0 += (u0[k] / sc) * (u0[k] / sc);
        d1 += (f0[k] / sc) * (f0[k] / sc);
    }
    d0 = std::sqrt(d0 / n);
    d1 = std::sqrt(d1 / n);
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    for (int k = 0; k < n; ++k) u1[k] = u0[k] + h0 * f0[k];
    field(t0 + h0, u1, f1);
    ++stats.rhs_evaluations;
    double d2 = 0.0;
    for (int k = 0; k < n; ++k) {
        double sc = abs_tol + rel_tol * std::abs(u0[k]);
        double e = (f1[k] - f0[k]) / sc;
        d2 += e * e;
    }
    d2 = std::sqrt(d2 / n) / h0;
    double h1;
    double dm = std::max(d1, d2);
    if (dm <= 1e-15) {
        h1 = std::max(1e-6, h0 * 1e-3);
    } else {
        h1 = std::pow(0.01 / dm, 1.0 / order);
    }
    return std::min(100.0 * h0, h1);
}

/// Integrate `field` from (t0, u0), sampling exactly at output_times.
/// Solver steps are clipped so every requested time is hit bitwise.
/// Step-size underflow marks the result diverged and returns the part
/// of the trajectory accumulated so far.
inline IntegrationResult integrate(const RhsFn& field, std::span<const double> u0, double t0,
                                   std::span<const double> output_times,
                                   const StepController& ctrl,
                                   const ButcherTableau& tab = tsit5()) {
    ctrl.validate();
    if (output_times.empty()) throw std::invalid_argument("output_times empty");
    for (std::size_t i = 0; i + 1 < output_times.size(); ++i)
        if (!(output_times[i] < output_times[i + 1]))
            throw std::invalid_argument("output_times must be strictly increasing");
    if (output_times.front() < t0) throw std::invalid_argument("first output time precedes t0");

    const int n = static_cast<int>(u0.size());
    IntegrationResult res;
    res.trajectory.dim = n;

    double t = t0;
    std::vector<double> u(u0.begin(), u0.end());
    std::size_t next = 0;
    if (output_times[0] == t0) {
        res.trajectory.push(t0, u);
        ++next;
    }
    if (next >= output_times.size()) return res;

    const double t_end = output_times.back();
    const double span_len = t_end - t0;
    if (span_len <= 0.0) throw std::invalid_argument("output span empty");
    const double h_min = 1e-13 * span_len;

    double h = ctrl.initial_step > 0
                   ? ctrl.initial_step
                   : initial_step_size(field, t0, u, tab.order, ctrl.abs_tol, ctrl.rel_tol, res.stats);
    h = std::min(h, span_len);

    std::vector<double> u_high(n), u_low(n), stages, ybuf;

    while (next < output_times.size()) {
        if (!(h > h_min) || !std::isfinite(h)) {
            res.status = SolveStatus::diverged;
            res.failure_time = t;
            return res;
        }
        const double t_target = output_times[next];
        bool clipped = false;
        double h_try = h;
        if (t + h_try >= t_target) {
            h_try = t_target - t;
            clipped = true;
        }
        bool finite_ok = rk_step(field, tab, t, u, h_try, u_high, u_low, stages, ybuf, res.stats);
        double err = finite_ok ? error_norm(u, u_high, u_low, ctrl.abs_tol, ctrl.rel_tol)
                               : std::numeric_limits<double>::infinity();
        if (err <= 1.0) {
            ++res.stats.accepted;
            if (clipped) {
                t = t_target;  // land bitwise on the request
            } else {
                t += h_try;
            }
            u.assign(u_high.begin(), u_high.end());
            res.step_times.push_back(t);
            res.step_sizes.push_back(h_try);
            if (clipped) {
                res.trajectory.push(t, u);
                ++next;
            }
            double factor = (err == 0.0) ? ctrl.max_factor
                                         : ctrl.safety * std::pow(err, -1.0 / tab.order);
            factor = std::clamp(factor, ctrl.min_factor, ctrl.max_factor);
            // grow from the proposed step, not the clipped one; cap at
            // the full span so repeated clipping cannot inflate h without
            // bound (and eventually overflow it)
            h = std::min(std::max(h, h_try) * factor, span_len);
        } else {
            ++res.stats.rejected;
            double factor = std::isfinite(err)
                                ? std::clamp(ctrl.safety * std::pow(err, -1.0 / tab.order),
                                             ctrl.min_factor, 1.0)
                                : 0.5;
            h = h_try * factor;
        }
    }
    return res;
}

/// Integrate across known discontinuity times (e.g. switch toggles),
/// restarting the solver at each breakpoint. Output times are reported
/// exactly as requested; breakpoints themselves are not recorded unless
/// requested.
inline IntegrationResult integrate_piecewise(const RhsFn& field, std::span<const double> u0,
                                             double t0, std::span<const double> output_times,
                                             const StepController& ctrl,
                                             std::span<const double> breakpoints,
                                             const ButcherTableau& tab = tsit5()) {
    if (breakpoints.empty())
        return integrate(field, u0, t0, output_times, ctrl, tab);

    IntegrationResult total;
    const int n = static_cast<int>(u0.size());
    total.trajectory.dim = n;
    std::vector<double> u(u0.begin(), u0.end());
    double t = t0;
    std::size_t oi = 0;
    const double t_end = output_times.back();

    std::vector<double> cuts;
    for (double b : breakpoints)
        if (b > t0 && b < t_end) cuts.push_back(b);
    cuts.push_back(t_end);

    if (!output_times.empty() && output_times[0] == t0) {
        total.trajectory.push(t0, u);
        ++oi;
    }

    for (double cut : cuts) {
        std::vector<double> seg_out;
        while (oi < output_times.size() && output_times[oi] <= cut) seg_out.push_back(output_times[oi++]);
        bool pad_cut = seg_out.empty() || seg_out.back() != cut;
        if (pad_cut) seg_out.push_back(cut);
        // Stages of the last step land exactly on the cut; clamp the
        // stage time just below it so the segment only ever sees its
        // own side of the discontinuity.
        const double t_clamp = std::nextafter(cut, t0);
        RhsFn seg_field = [&field, t_clamp](double ts, std::span<const double> us,
                                            std::span<double> dus) {
            field(std::min(ts, t_clamp), us, dus);
        };
        auto seg = integrate(seg_field, u, t, seg_out, ctrl, tab);
        total.stats += seg.stats;
        total.step_times.insert(total.step_times.end(), seg.step_times.begin(),
                                seg.step_times.end());
        total.step_sizes.insert(total.step_sizes.end(), seg.step_sizes.begin(),
                                seg.step_sizes.end());
        std::size_t keep = seg.trajectory.size();
        if (seg.status == SolveStatus::ok && pad_cut && keep > 0) --keep;  // drop padding row
        for (std::size_t i = 0; i < keep; ++i)
            total.trajectory.push(seg.trajectory.times[i], seg.trajectory.state(i));
        if (seg.status == SolveStatus::diverged) {
            total.status = SolveStatus::diverged;
            total.failure_time = seg.failure_time;
            return total;
        }
        u.assign(seg.trajectory.state(seg.trajectory.size() - 1).begin(),
                 seg.trajectory.state(seg.trajectory.size() - 1).end());
        t = cut;
    }
    return total;
}

}  // namespace snde
