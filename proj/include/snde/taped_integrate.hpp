#pragma once

// Adaptive RK integration recorded on a gradient tape. Mirrors the
// plain integrator's step control; step-size decisions read primal
// values only and enter the recorded graph as constants, so the
// backward pass yields the exact gradient of the discrete computation.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "snde/field.hpp"
#include "snde/integrate.hpp"
#include "snde/tape.hpp"

namespace snde {

struct TapedIntegration {
    std::vector<int> state_vars;  ///< one tape variable per output time
    SolverStats stats;
    SolveStatus status = SolveStatus::ok;
};

namespace detail {

inline bool taped_span(Tape& tape, const Field& field, int u0_var, double t0,
                       std::span<const double> output_times, const StepController& ctrl,
                       const ButcherTableau& tab, TapedIntegration& out,
                       double t_clamp = std::numeric_limits<double>::infinity()) {
    const int n = field.dim();
    double t = t0;
    int u = u0_var;
    std::size_t next = 0;
    if (!output_times.empty() && output_times[0] == t0) {
        out.state_vars.push_back(u);
        ++next;
    }
    if (next >= output_times.size()) return true;

    const double t_end = output_times.back();
    const double span_len = t_end - t0;
    const double h_min = 1e-13 * span_len;

    auto plain_rhs = field.rhs();
    double h = ctrl.initial_step > 0
                   ? ctrl.initial_step
                   : initial_step_size(plain_rhs, t0, tape.value(u), tab.order, ctrl.abs_tol,
                                       ctrl.rel_tol, out.stats);
    h = std::min(h, span_len);

    std::vector<int> kvars(tab.stages);
    std::vector<double> u_low(n);

    while (next < output_times.size()) {
        if (!(h > h_min) || !std::isfinite(h)) {
            out.status = SolveStatus::diverged;
            return false;
        }
        const double t_target = output_times[next];
        bool clipped = false;
        double h_try = h;
        if (t + h_try >= t_target) {
            h_try = t_target - t;
            clipped = true;
        }

        auto m = tape.mark();
        bool finite_ok = true;
        for (int i = 0; i < tab.stages && finite_ok; ++i) {
            int yi;
            if (i == 0) {
                yi = u;
            } else {
                std::vector<std::pair<double, int>> terms{{1.0, u}};
                for (int j = 0; j < i; ++j)
                    if (tab.a_at(i, j) != 0.0) terms.push_back({h_try * tab.a_at(i, j), kvars[j]});
                yi = tape.lincomb(std::move(terms));
            }
            kvars[i] = field.eval_taped(tape, std::min(t + tab.c[i] * h_try, t_clamp), yi);
            ++out.stats.rhs_evaluations;
            finite_ok = all_finite(tape.value(kvars[i]));
        }
        int u_high = -1;
        double err = std::numeric_limits<double>::infinity();
        if (finite_ok) {
            std::vector<std::pair<double, int>> terms{{1.0, u}};
            for (int i = 0; i < tab.stages; ++i)
                if (tab.b[i] != 0.0) terms.push_back({h_try * tab.b[i], kvars[i]});
            u_high = tape.lincomb(std::move(terms));
            auto uv = tape.value(u);
            for (int k = 0; k < n; ++k) {
                double lo = uv[k];
                for (int i = 0; i < tab.stages; ++i)
                    lo += h_try * tab.b_hat[i] * tape.value(kvars[i])[k];
                u_low[k] = lo;
            }
            finite_ok = all_finite(tape.value(u_high));
            if (finite_ok)
                err = error_norm(uv, tape.value(u_high), u_low, ctrl.abs_tol, ctrl.rel_tol);
        }
        if (finite_ok && err <= 1.0) {
            ++out.stats.accepted;
            t = clipped ? t_target : t + h_try;
            u = u_high;
            if (clipped) {
                out.state_vars.push_back(u);
                ++next;
            }
            double factor = (err == 0.0) ? ctrl.max_factor
                                         : ctrl.safety * std::pow(err, -1.0 / tab.order);
            factor = std::clamp(factor, ctrl.min_factor, ctrl.max_factor);
            // cap at the span; see the plain integrator
            h = std::min(std::max(h, h_try) * factor, span_len);
        } else {
            ++out.stats.rejected;
            tape.rollback(m);  // rejected stages never reach the loss
            double factor = std::isfinite(err)
                                ? std::clamp(ctrl.safety * std::pow(err, -1.0 / tab.order),
                                             ctrl.min_factor, 1.0)
                                : 0.5;
            h = h_try * factor;
        }
    }
    return true;
}

}  // namespace detail

/// Taped integration over a frozen step grid (the `step_times` of a
/// previous adaptive run): one RK step per grid interval, no error
/// control. Differentiating this replay gives the exact gradient of a
/// step-size-independent discrete program, so it matches finite
/// differences of itself to rounding. Steps ending exactly on a
/// breakpoint clamp their stage times just below it.
inline TapedIntegration integrate_taped_replay(Tape& tape, const Field& field, int u0_var,
                                               double t0, std::span<const double> step_times,
                                               std::span<const double> step_sizes,
                                               std::span<const double> output_times,
                                               std::span<const double> breakpoints = {},
                                               const ButcherTableau& tab = tsit5()) {
    if (step_times.size() != step_sizes.size())
        throw std::invalid_argument("replay: step grid length mismatch");
    TapedIntegration out;
    double t = t0;
    int u = u0_var;
    std::size_t oi = 0;
    if (!output_times.empty() && output_times[0] == t0) {
        out.state_vars.push_back(u);
        ++oi;
    }
    std::vector<int> kvars(tab.stages);
    for (std::size_t si = 0; si < step_times.size(); ++si) {
        double t_next = step_times[si];
        double h = step_sizes[si];
        if (!(h > 0)) throw std::invalid_argument("replay step sizes must be positive");
        double t_clamp = std::numeric_limits<double>::infinity();
        for (double b : breakpoints)
            if (b == t_next) t_clamp = std::nextafter(t_next, t);
        for (int i = 0; i < tab.stages; ++i) {
            int yi = u;
            if (i > 0) {
                std::vector<std::pair<double, int>> terms{{1.0, u}};
                for (int j = 0; j < i; ++j)
                    if (tab.a_at(i, j) != 0.0) terms.push_back({h * tab.a_at(i, j), kvars[j]});
                yi = tape.lincomb(std::move(terms));
            }
            kvars[i] = field.eval_taped(tape, std::min(t + tab.c[i] * h, t_clamp), yi);
            ++out.stats.rhs_evaluations;
            if (!all_finite(tape.value(kvars[i]))) {
                out.status = SolveStatus::diverged;
                return out;
            }
        }
        std::vector<std::pair<double, int>> terms{{1.0, u}};
        for (int i = 0; i < tab.stages; ++i)
            if (tab.b[i] != 0.0) terms.push_back({h * tab.b[i], kvars[i]});
        u = tape.lincomb(std::move(terms));
        ++out.stats.accepted;
        t = t_next;
        if (oi < output_times.size() && output_times[oi] == t) {
            out.state_vars.push_back(u);
            ++oi;
        }
    }
    if (oi != output_times.size())
        throw std::invalid_argument("replay grid does not cover all output times");
    return out;
}

/// Integrate on the tape, restarting at each breakpoint.
inline TapedIntegration integrate_taped(Tape& tape, const Field& field, int u0_var, double t0,
                                        std::span<const double> output_times,
                                        const StepController& ctrl,
                                        std::span<const double> breakpoints = {},
                                        const ButcherTableau& tab = tsit5()) {
    ctrl.validate();
    TapedIntegration out;
    const double t_end = output_times.back();

    std::vector<double> cuts;
    for (double b : breakpoints)
        if (b > t0 && b < t_end) cuts.push_back(b);
    cuts.push_back(t_end);

    double t = t0;
    int u = u0_var;
    std::size_t oi = 0;
    if (!output_times.empty() && output_times[0] == t0) {
        out.state_vars.push_back(u);
        ++oi;
    }
    for (double cut : cuts) {
        std::vector<double> seg;
        while (oi < output_times.size() && output_times[oi] <= cut) seg.push_back(output_times[oi++]);
        bool pad = seg.empty() || seg.back() != cut;
        if (pad) seg.push_back(cut);
        TapedIntegration part;
        // see integrate_piecewise: keep stage times strictly on this
        // segment's side of the discontinuity
        bool ok = detail::taped_span(tape, field, u, t, seg, ctrl, tab, part,
                                     std::nextafter(cut, t0));
        out.stats += part.stats;
        std::size_t keep = part.state_vars.size();
        if (ok && pad && keep > 0) --keep;
        for (std::size_t i = 0; i < keep; ++i) out.state_vars.push_back(part.state_vars[i]);
        if (!ok) {
            out.status = SolveStatus::diverged;
            return out;
        }
        u = part.state_vars.back();
        t = cut;
    }
    return out;
}

}  // namespace snde
