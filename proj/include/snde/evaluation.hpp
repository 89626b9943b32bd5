#pragma once

// Evaluation metrics: relative state/constraint errors, stable time,
// occupation histograms, and the Hellinger distance.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "snde/dataset.hpp"
#include "snde/field.hpp"
#include "snde/systems.hpp"

namespace snde {

struct EvalReport {
    std::vector<double> times;
    std::vector<double> state_error;       ///< ||u - u_hat|| / ||u||
    std::vector<double> constraint_error;  ///< ||g(u_hat)|| / ||reference||
    double stable_time = 0.0;
    SolverStats stats;
    bool diverged = false;
    std::uint64_t trial_seed = 0;
};

inline std::vector<double> relative_error_series(const Trajectory& truth,
                                                 const Trajectory& pred) {
    if (truth.times.size() < pred.times.size())
        throw std::invalid_argument("relative_error_series: grid mismatch");
    for (std::size_t i = 0; i < pred.times.size(); ++i)
        if (truth.times[i] != pred.times[i])
            throw std::invalid_argument("relative_error_series: grid mismatch");
    std::vector<double> out(pred.times.size());
    for (std::size_t i = 0; i < pred.times.size(); ++i) {
        auto u = truth.state(i);
        auto v = pred.state(i);
        double nu = norm2(u), d = 0.0;
        if (nu == 0.0) throw std::domain_error("relative error undefined at ||u|| = 0");
        for (std::size_t k = 0; k < u.size(); ++k) d += (u[k] - v[k]) * (u[k] - v[k]);
        out[i] = std::sqrt(d) / nu;
    }
    return out;
}

/// ||g(u_hat)|| normalized by the reference-constant magnitude; falls
/// back to the absolute residual when the reference is zero.
inline std::vector<double> constraint_error_series(const ConstraintManifold& mf,
                                                   const Trajectory& pred,
                                                   bool* absolute_fallback = nullptr) {
    double ref_norm = norm2(mf.reference);
    bool fallback = ref_norm == 0.0;
    if (absolute_fallback) *absolute_fallback = fallback;
    std::vector<double> out(pred.size());
    std::vector<double> g(mf.m);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        mf.eval_g(pred.state(i), std::span<double>(g.data(), mf.m));
        out[i] = fallback ? norm2(g) : norm2(g) / ref_norm;
    }
    return out;
}

/// max{ t : E(t) < E_stab }; the final time when the threshold is never
/// reached, 0 when it is exceeded from the start.
inline double stable_time(std::span<const double> errors, std::span<const double> times,
                          double e_stab = 1e3) {
    if (errors.size() != times.size()) throw std::invalid_argument("stable_time: length mismatch");
    double last_ok = 0.0;
    for (std::size_t i = 0; i < errors.size(); ++i) {
        if (errors[i] < e_stab) last_ok = times[i];
        else break;
    }
    return last_ok;
}

struct GridDim {
    double lo = 0.0, hi = 1.0;
    int bins = 20;
    bool angular = false;  ///< wrap into [-pi, pi)
};

struct BoxHistogram {
    std::vector<GridDim> grid;
    std::vector<double> weights;
    long clamped = 0;  ///< samples outside non-angular bounds, clamped to edge bins

    bool same_grid(const BoxHistogram& o) const {
        if (grid.size() != o.grid.size()) return false;
        for (std::size_t d = 0; d < grid.size(); ++d)
            if (grid[d].lo != o.grid[d].lo || grid[d].hi != o.grid[d].hi ||
                grid[d].bins != o.grid[d].bins || grid[d].angular != o.grid[d].angular)
                return false;
        return true;
    }
};

inline double wrap_angle(double a) {
    double two_pi = 2.0 * std::numbers::pi;
    double w = std::fmod(a + std::numbers::pi, two_pi);
    if (w < 0) w += two_pi;
    return w - std::numbers::pi;
}

/// Normalized visit frequencies of post-burn-in samples.
inline BoxHistogram occupation_measure(const Trajectory& traj, std::vector<GridDim> grid,
                                       double burn_in = 0.0) {
    if (static_cast<int>(grid.size()) != traj.dim)
        throw std::invalid_argument("occupation_measure: grid dimension mismatch");
    BoxHistogram h;
    h.grid = std::move(grid);
    std::size_t total = 1;
    for (auto& d : h.grid) total *= static_cast<std::size_t>(d.bins);
    h.weights.assign(total, 0.0);
    long count = 0;
    for (std::size_t i = 0; i < traj.size(); ++i) {
        if (traj.times[i] < burn_in) continue;
        auto u = traj.state(i);
        std::size_t idx = 0;
        for (int d = 0; d < traj.dim; ++d) {
            const GridDim& gd = h.grid[d];
            double x = gd.angular ? wrap_angle(u[d]) : u[d];
            double f = (x - gd.lo) / (gd.hi - gd.lo);
            int bin = static_cast<int>(std::floor(f * gd.bins));
            if (bin < 0 || bin >= gd.bins) {
                if (gd.angular) {
                    bin = std::clamp(bin, 0, gd.bins - 1);  // wrap rounding at the seam
                } else {
                    bin = std::clamp(bin, 0, gd.bins - 1);
                    ++h.clamped;
                }
            }
            idx = idx * static_cast<std::size_t>(gd.bins) + static_cast<std::size_t>(bin);
        }
        h.weights[idx] += 1.0;
        ++count;
    }
    if (count == 0) throw std::invalid_argument("occupation_measure: no samples after burn-in");
    for (double& w : h.weights) w /= static_cast<double>(count);
    return h;
}

/// (1/sqrt(2)) * || sqrt(p) - sqrt(q) ||_2
inline double hellinger(const BoxHistogram& p, const BoxHistogram& q) {
    if (!p.same_grid(q)) throw std::invalid_argument("hellinger: grid mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < p.weights.size(); ++i) {
        double d = std::sqrt(p.weights[i]) - std::sqrt(q.weights[i]);
        s += d * d;
    }
    return std::sqrt(0.5 * s);
}

/// Default measure grid: angles span [-pi, pi); the remaining bounds
/// come from the ground-truth data envelope padded by 10%.
inline std::vector<GridDim> default_measure_grid(const SystemDefinition& sys,
                                                 const Trajectory& envelope_data, int bins = 20) {
    std::vector<GridDim> grid(sys.dim);
    for (int d = 0; d < sys.dim; ++d) {
        GridDim& gd = grid[d];
        gd.bins = bins;
        if (sys.angular[d]) {
            gd.angular = true;
            gd.lo = -std::numbers::pi;
            gd.hi = std::numbers::pi;
        } else {
            double lo = 1e300, hi = -1e300;
            for (std::size_t i = 0; i < envelope_data.size(); ++i) {
                lo = std::min(lo, envelope_data.state(i)[d]);
                hi = std::max(hi, envelope_data.state(i)[d]);
            }
            double pad = 0.1 * std::max(std::abs(lo), std::abs(hi));
            gd.lo = lo - pad;
            gd.hi = hi + pad;
        }
    }
    return grid;
}

struct EvalOptions {
    int n_trials = 100;
    double horizon = 0.0;  ///< 0 = system default
    double dt = 0.0;       ///< 0 = system default
    std::uint64_t seed = 1;
    double e_stab = 1e3;
    StepController model_ctrl;  ///< defaults to training tolerances 1e-6
};

/// Number of worker threads: SNDE_THREADS if set (1 = fully
/// sequential, bitwise-reproducible scheduling), else the machine's
/// parallelism.
inline int thread_count() {
    if (const char* env = std::getenv("SNDE_THREADS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

/// Evaluate a model field against ground truth on fresh test initial
/// conditions. Trial seeds are derived from (seed, trial), in a stream
/// distinct from training; results are a pure function of the trial
/// seed, so the fan-out across threads does not change them.
inline std::vector<EvalReport> evaluate_model(
    const SystemDefinition& sys, const std::shared_ptr<const Field>& model, double gamma,
    const EvalOptions& opt) {
    std::vector<EvalReport> reports(opt.n_trials);
    auto gt_ctrl = ground_truth_controller();

    auto run_trial = [&](int trial) {
        std::uint64_t trial_seed = opt.seed * 2654435761ULL + 2ULL * trial + 1ULL;
        auto u0 = sys.sample_ic(trial_seed);
        double horizon = opt.horizon > 0 ? opt.horizon : sys.horizon_of(u0);
        double dt = opt.dt > 0 ? opt.dt : sys.default_dt;
        auto ts = uniform_grid(0.0, horizon, dt);
        std::vector<double> bp;
        if (sys.breakpoints) bp = sys.breakpoints(0.0, ts.back());

        auto truth = integrate_piecewise(AnalyticField(sys.truth).rhs(), u0, 0.0, ts, gt_ctrl, bp);
        if (truth.status != SolveStatus::ok)
            throw std::runtime_error("ground-truth integration failed in trial " +
                                     std::to_string(trial));

        auto mf = sys.manifold_at(u0);
        StabilizedFieldView stabilized(model, mf, gamma);
        auto pred = integrate_piecewise(stabilized.rhs(), u0, 0.0, ts, opt.model_ctrl, bp);

        EvalReport rep;
        rep.trial_seed = trial_seed;
        rep.stats = pred.stats;
        rep.diverged = pred.status != SolveStatus::ok;
        std::size_t npts = pred.trajectory.size();
        rep.times.assign(ts.begin(), ts.begin() + npts);
        rep.state_error = relative_error_series(truth.trajectory, pred.trajectory);
        rep.constraint_error = constraint_error_series(mf, pred.trajectory);
        rep.stable_time = stable_time(rep.state_error, rep.times, opt.e_stab);
        reports[trial] = std::move(rep);
    };

    int workers = std::min(thread_count(), opt.n_trials);
    if (workers <= 1) {
        for (int trial = 0; trial < opt.n_trials; ++trial) run_trial(trial);
        return reports;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (int trial = next.fetch_add(1); trial < opt.n_trials; trial = next.fetch_add(1)) {
                try {
                    run_trial(trial);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mu);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
    return reports;
}

/// Mean and 95% normal-approximation confidence half-width.
struct MeanCi {
    double mean = 0.0, ci_low = 0.0, ci_high = 0.0;
};

inline MeanCi mean_ci(std::span<const double> xs) {
    MeanCi r;
    if (xs.empty()) return r;
    double s = 0.0;
    for (double x : xs) s += x;
    r.mean = s / static_cast<double>(xs.size());
    double v = 0.0;
    for (double x : xs) v += (x - r.mean) * (x - r.mean);
    double se = xs.size() > 1 ? std::sqrt(v / (static_cast<double>(xs.size()) - 1.0) /
                                          static_cast<double>(xs.size()))
                              : 0.0;
    r.ci_low = r.mean - 1.96 * se;
    r.ci_high = r.mean + 1.96 * se;
    return r;
}

inline double median(std::vector<double> xs) {
    if (xs.empty()) throw std::invalid_argument("median of empty set");
    std::sort(xs.begin(), xs.end());
    std::size_t n = xs.size();
    return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

}  // namespace snde
