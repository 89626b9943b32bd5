// End-to-end acceptance gate. Each numbered check prints exactly one
// PASS/FAIL line; check 10 is informational (reported, never gating).
// Exit status is the number of failed gating checks.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "snde/commands.hpp"
#include "snde/diff_engine.hpp"
#include "snde/evaluation.hpp"
#include "snde/stabilization.hpp"
#include "snde/taped_integrate.hpp"
#include "snde/training.hpp"

using namespace snde;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int id, bool pass, const std::string& name, const std::string& detail,
            bool gating = true) {
    std::printf("criterion %2d: %s — %s (%s)%s\n", id, pass ? "PASS" : "FAIL", name.c_str(),
                detail.c_str(), gating ? "" : " [informational]");
    std::fflush(stdout);
    if (!pass && gating) ++g_failures;
}

void progress(const std::string& msg) { std::cerr << "[acceptance] " << msg << "\n"; }

std::string fmt(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3g", x);
    return buf;
}

// ---------------------------------------------------------------- studies

struct Study {
    Checkpoint ck;
    double train_seconds = 0.0;
};

TrainingConfig rigid_study_config(double gamma) {
    TrainingConfig cfg;
    cfg.system = "rigid_body";
    cfg.model = ModelKind::node;
    cfg.gamma = gamma;
    cfg.hidden_width = 64;
    cfg.epochs = 300;
    cfg.lr_max = 1e-4;
    cfg.lr_min = 1e-5;
    cfg.n_trajectories = 10;
    cfg.seed = 3;
    return cfg;
}

TrainingConfig two_body_study_config(double gamma) {
    TrainingConfig cfg;
    cfg.system = "two_body";
    cfg.model = ModelKind::so_node;
    cfg.gamma = gamma;
    cfg.hidden_width = 64;
    cfg.epochs = 300;
    cfg.lr_max = 1e-3;
    cfg.lr_min = 1e-5;
    cfg.n_trajectories = 40;
    cfg.seed = 1;
    return cfg;
}

Study run_study(const TrainingConfig& cfg, const TrajectorySet& set) {
    Study s;
    auto t0 = std::chrono::steady_clock::now();
    s.ck = train(cfg, &set);
    s.train_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return s;
}

std::vector<EvalReport> eval_study(const SystemDefinition& sys, const Study& s, double horizon,
                                   int n_trials) {
    auto model = make_model_field(sys, s.ck.config.model, &s.ck.params);
    EvalOptions opt;
    opt.n_trials = n_trials;
    opt.horizon = horizon;
    opt.seed = 101;
    return evaluate_model(sys, model, s.ck.config.gamma, opt);
}

constexpr double kUnreached = 1e300;  ///< trial never produced a final-time value

/// Final-time value of a per-trial series; trials that never reach the
/// horizon (solver divergence) count as unreachable.
double final_or_unreached(const EvalReport& r, const std::vector<double>& series,
                          std::size_t full_len) {
    if (r.diverged || r.times.size() != full_len || series.empty()) return kUnreached;
    return series.back();
}

// ------------------------------------------------------------- criteria

void criterion_1() {
    const char* names[] = {"two_body", "rigid_body",      "dc_converter",
                           "robot_arm", "double_pendulum", "double_pendulum_hybrid"};
    double worst = 0.0;
    const double gamma = 16.0;
    for (const char* name : names) {
        auto sys = get_system(name);
        AnalyticField truth(sys.truth);
        std::vector<double> f(sys.dim);
        for (std::uint64_t seed = 0; seed < 1000; ++seed) {
            auto u0 = sys.sample_ic(seed);
            auto mf = sys.manifold_at(u0);
            auto term = stabilization_term(mf, u0);
            truth.eval(0.0, u0, f);
            double rel = gamma * norm2(term) / std::max(norm2(f), 1e-300);
            worst = std::max(worst, rel);
        }
    }
    report(1, worst <= 1e-12, "stabilization vanishes on the manifold",
           "max relative residual over 6x1000 on-manifold states: " + fmt(worst));
}

void criterion_2() {
    bool pass = true;
    std::string detail;
    // affine constraint: exact exponential decay of g
    {
        auto mf = make_manifold(2, 1, [](auto u, auto g) { g[0] = u[0] + 2.0 * u[1]; });
        RhsFn zero = [](double, std::span<const double>, std::span<double> du) {
            du[0] = du[1] = 0.0;
        };
        double worst = 0.0;
        for (double gamma : {1.0, 8.0, 32.0}) {
            StabilizedField sf(zero, mf, gamma);
            StepController ctrl;
            ctrl.abs_tol = 1e-300;
            ctrl.rel_tol = 1e-10;
            std::vector<double> u0{1.0, 2.0};  // g(u0) = 5, u0 in range(G^T)
            std::vector<double> ts{0.5, 1.0, 2.0};
            auto res = integrate(sf.rhs(), u0, 0.0, ts, ctrl);
            if (res.status != SolveStatus::ok) {
                pass = false;
                continue;
            }
            for (std::size_t i = 0; i < ts.size(); ++i) {
                auto u = res.trajectory.state(i);
                double g = u[0] + 2.0 * u[1];
                double expected = 5.0 * std::exp(-gamma * ts[i]);
                worst = std::max(worst, std::abs(g - expected) / expected);
            }
        }
        pass = pass && worst <= 1e-6;
        detail = "affine decay max rel dev " + fmt(worst);
    }
    // nonlinear circle constraint: V non-increasing along trajectories
    {
        auto mf = make_manifold(2, 1, [](auto u, auto g) {
            g[0] = 0.5 * (u[0] * u[0] + u[1] * u[1] - 1.0);
        });
        RhsFn rot = [](double, std::span<const double> u, std::span<double> du) {
            du[0] = -u[1];
            du[1] = u[0];
        };
        double worst_rise = 0.0;
        for (double gamma : {1.0, 8.0, 32.0}) {
            StabilizedField sf(rot, mf, gamma);
            StepController ctrl;
            std::vector<double> u0{1.5, 0.0};
            std::vector<double> ts;
            for (int i = 1; i <= 40; ++i) ts.push_back(0.1 * i);
            auto res = integrate(sf.rhs(), u0, 0.0, ts, ctrl);
            if (res.status != SolveStatus::ok) {
                pass = false;
                continue;
            }
            auto V = lyapunov_series(mf, res.trajectory);
            for (std::size_t i = 1; i < V.size(); ++i)
                worst_rise = std::max(worst_rise, V[i] - V[i - 1]);
        }
        pass = pass && worst_rise <= 1e-6;
        detail += "; circle V max rise " + fmt(worst_rise);
    }
    report(2, pass, "constraint decay follows the Lyapunov law", detail);
}

void criterion_3() {
    auto sys = rigid_body();
    auto p = mlp_init({{3, 8}, {8, 3}}, 3);
    auto base = make_model_field(sys, ModelKind::node, &p);
    std::vector<double> u0{std::cos(0.9), 0.0, std::sin(0.9)};
    auto view = std::make_shared<StabilizedFieldView>(base, sys.manifold_at(u0), 4.0);

    StepController ctrl;
    std::vector<double> ts{0.0, 0.5, 1.0};
    std::vector<double> target{0.5, 0.3, -0.2};
    auto fwd = integrate(view->rhs(), u0, 0.0, ts, ctrl);
    bool enough_steps = fwd.status == SolveStatus::ok && fwd.stats.accepted >= 5;

    TapedLossFn loss = [&](Tape& tape, const std::vector<double>&) {
        int u0v = tape.constant(u0);
        auto res = integrate_taped_replay(tape, *view, u0v, 0.0, fwd.step_times, fwd.step_sizes,
                                          ts);
        for (std::size_t i = 1; i < res.state_vars.size(); ++i)
            tape.add_squared_error(res.state_vars[i], target);
        return tape.loss();
    };
    double dev = enough_steps ? fd_check(loss, p.flat, 1e-6) : 1.0;
    report(3, enough_steps && dev < 1e-4, "solver-step gradients match finite differences",
           "accepted steps " + std::to_string(fwd.stats.accepted) + ", max rel deviation " +
               fmt(dev));
}

void criterion_4() {
    auto sys = two_body();
    AnalyticField f(sys.truth);
    auto rhs = f.rhs();
    std::vector<double> u0{0.4, 0.0, 0.0, 0.5};
    StepController tight;
    tight.abs_tol = tight.rel_tol = 1e-13;
    std::vector<double> tout{0.5};
    auto ref = integrate(rhs, u0, 0.0, tout, tight);
    auto uref = ref.trajectory.state(0);

    std::vector<double> hs, errs;
    for (int n : {320, 640, 1280, 2560, 5120}) {
        double h = 0.5 / n;
        std::vector<double> u(u0), uh(4), ul(4);
        for (int i = 0; i < n; ++i) {
            rk_step(rhs, tsit5(), i * h, u, h, uh, ul);
            u.assign(uh.begin(), uh.end());
        }
        double e = 0.0;
        for (int k = 0; k < 4; ++k) e += (u[k] - uref[k]) * (u[k] - uref[k]);
        hs.push_back(h);
        errs.push_back(std::sqrt(e));
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int m = static_cast<int>(hs.size());
    for (int i = 0; i < m; ++i) {
        double x = std::log(hs[i]), y = std::log(errs[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    double order = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    report(4, order >= 4.5 && order <= 5.5, "embedded pair converges at fifth order",
           "fitted order " + fmt(order));
}

void criterion_5() {
    auto drift = [](const SystemDefinition& sys, std::span<const double> u0, double horizon,
                    double dt) {
        auto ts = uniform_grid(0.0, horizon, dt);
        std::vector<double> bp;
        if (sys.breakpoints) bp = sys.breakpoints(0.0, ts.back());
        AnalyticField f(sys.truth);
        auto res = integrate_piecewise(f.rhs(), u0, 0.0, ts, ground_truth_controller(), bp);
        if (res.status != SolveStatus::ok) return 1e9;
        auto mf = sys.manifold_at(u0);
        std::vector<double> g(mf.m);
        double worst = 0.0, ref = norm2(mf.reference);
        for (std::size_t i = 0; i < res.trajectory.size(); ++i) {
            mf.g0(res.trajectory.state(i), g);
            worst = std::max(worst, ref > 0 ? norm2(g) / ref : norm2(g));
        }
        return worst;
    };
    double worst = 0.0;
    {
        auto s = two_body();
        auto u0 = s.sample_ic(7);
        double T = s.horizon_of(u0);
        worst = std::max(worst, drift(s, u0, T, T / 100.0));
    }
    {
        auto s = rigid_body();
        worst = std::max(worst, drift(s, s.sample_ic(7), 15.0, 0.1));
    }
    {
        auto s = dc_converter();
        worst = std::max(worst, drift(s, s.sample_ic(7), 10.0, 0.1));
    }
    {
        auto s = double_pendulum(false);
        worst = std::max(worst, drift(s, s.sample_ic(7), 60.0, 0.05));
    }
    {
        auto s = robot_arm();
        worst = std::max(worst, drift(s, s.sample_ic(7), 5.0, 0.1));
    }
    report(5, worst < 1e-8, "ground truth conserves the invariants",
           "max relative drift over the five systems: " + fmt(worst));
}

void criterion_9() {
    bool pass = true;
    std::string detail;
    // unit values of the distance itself
    {
        auto mk = [](std::vector<double> w) {
            BoxHistogram h;
            h.grid = {GridDim{0.0, 1.0, static_cast<int>(w.size()), false}};
            h.weights = std::move(w);
            return h;
        };
        double h_same = hellinger(mk({0.5, 0.5}), mk({0.5, 0.5}));
        double h_disj = hellinger(mk({1.0, 0.0}), mk({0.0, 1.0}));
        double h_half = hellinger(mk({1.0, 0.0}), mk({0.5, 0.5}));
        pass = h_same == 0.0 && h_disj == 1.0 && std::abs(h_half - 0.54120) <= 1e-5;
        detail = "unit values " + fmt(h_same) + "/" + fmt(h_disj) + "/" + fmt(h_half);
    }
    // split-half self distance of a long chaotic pendulum trajectory
    {
        auto sys = double_pendulum(false);
        auto u0 = sys.sample_ic(9);
        const double horizon = 600.0, burn = 10.0, dt = 0.01;
        auto ts = uniform_grid(0.0, horizon, dt);
        auto truth = integrate_piecewise(AnalyticField(sys.truth).rhs(), u0, 0.0, ts,
                                         ground_truth_controller(), {});
        if (truth.status != SolveStatus::ok) {
            pass = false;
            detail += "; ground truth diverged";
        } else {
            auto grid = default_measure_grid(sys, truth.trajectory, 20);
            double mid = burn + 0.5 * (horizon - burn);
            Trajectory a, b;
            a.dim = b.dim = truth.trajectory.dim;
            for (std::size_t i = 0; i < truth.trajectory.size(); ++i) {
                double t = truth.trajectory.times[i];
                if (t < burn) continue;
                (t < mid ? a : b).push(t, truth.trajectory.state(i));
            }
            double h = hellinger(occupation_measure(a, grid), occupation_measure(b, grid));
            pass = pass && h < 0.1;
            detail += "; split-half distance " + fmt(h);
        }
    }
    report(9, pass, "occupation measure is reproducible across trajectory halves", detail);
}

void criterion_11() {
    setenv("SNDE_THREADS", "1", 1);
    auto cfg = parse_config_text(
        "system=rigid_body\n"
        "hidden_width=8\n"
        "epochs=3\n"
        "n_trajectories=2\n"
        "seed=4\n"
        "n_test_trials=2\n"
        "eval_horizon=2\n");
    fs::path base = fs::temp_directory_path() / "snde_acceptance_repro";
    fs::remove_all(base);
    for (const char* run : {"a", "b"}) {
        ExperimentConfig sub = cfg;
        sub.out_dir = (base / run).string();
        if (run_command("generate", sub) != 0 || run_command("train", sub) != 0 ||
            run_command("eval", sub) != 0) {
            report(11, false, "seeded pipeline is byte-identical across runs",
                   "a pipeline command failed");
            return;
        }
    }
    auto slurp = [](const fs::path& p) {
        std::ifstream is(p, std::ios::binary);
        std::stringstream ss;
        ss << is.rdbuf();
        std::string text = ss.str();
        // the config snapshot records the output directory, which
        // necessarily differs between the two runs; drop that line
        if (p.filename() == "config.txt") {
            auto pos = text.find("out_dir=");
            if (pos != std::string::npos) {
                auto end = text.find('\n', pos);
                text.erase(pos, end == std::string::npos ? std::string::npos : end - pos + 1);
            }
        }
        return text;
    };
    bool pass = true;
    std::string mismatch;
    for (const char* f :
         {"config.txt", "dataset.csv", "dataset.meta", "checkpoint.txt", "loss.csv",
          "trial_0.csv", "trial_1.csv", "stats.csv", "aggregate.csv"}) {
        if (slurp(base / "a" / f) != slurp(base / "b" / f)) {
            pass = false;
            mismatch += std::string(" ") + f;
        }
    }
    report(11, pass, "seeded pipeline is byte-identical across runs",
           pass ? "9 artifacts identical" : "differs:" + mismatch);
}

}  // namespace

int main() {
    std::printf("acceptance checks (stabilized neural differential equations)\n");

    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();

    // shared desk-scale studies for checks 6, 7, 8, and 10
    progress("training rigid-body study (7 stabilization strengths, 300 epochs each)...");
    auto rigid_sys = rigid_body();
    auto rigid_cfg = rigid_study_config(0.0);
    auto rigid_set = generate_dataset(rigid_sys, rigid_cfg.n_trajectories, rigid_cfg.seed);
    const std::vector<double> gammas{0.0, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0};
    std::vector<Study> rigid(gammas.size());
    for (std::size_t i = 0; i < gammas.size(); ++i) {
        rigid[i] = run_study(rigid_study_config(gammas[i]), rigid_set);
        progress("  gamma=" + fmt(gammas[i]) + " trained in " + fmt(rigid[i].train_seconds) +
                 "s, final val loss " + fmt(rigid[i].ck.val_loss.back()));
    }
    const Study& rigid_node = rigid[0];
    const Study& rigid_snde = rigid[gammas.size() - 1];

    progress("training two-body study (gamma 8 and 0)...");
    auto tb_sys = two_body();
    auto tb_cfg = two_body_study_config(8.0);
    auto tb_set = generate_dataset(tb_sys, tb_cfg.n_trajectories, tb_cfg.seed);
    Study tb_snde = run_study(tb_cfg, tb_set);
    Study tb_node = run_study(two_body_study_config(0.0), tb_set);

    progress("evaluating studies...");
    auto rigid150_snde = eval_study(rigid_sys, rigid_snde, 150.0, 22);
    auto rigid150_node = eval_study(rigid_sys, rigid_node, 150.0, 22);
    auto rigid400_snde = eval_study(rigid_sys, rigid_snde, 400.0, 22);
    auto rigid400_node = eval_study(rigid_sys, rigid_node, 400.0, 22);
    auto tb200_snde = eval_study(tb_sys, tb_snde, 200.0, 20);
    auto tb200_node = eval_study(tb_sys, tb_node, 200.0, 20);

    // criterion 6: long-horizon error trend on the rigid body
    {
        const std::size_t full = 1501;
        std::vector<double> se_s, se_n, ce_s, ce_n;
        for (const auto& r : rigid150_snde) {
            se_s.push_back(final_or_unreached(r, r.state_error, full));
            ce_s.push_back(final_or_unreached(r, r.constraint_error, full));
        }
        for (const auto& r : rigid150_node) {
            se_n.push_back(final_or_unreached(r, r.state_error, full));
            ce_n.push_back(final_or_unreached(r, r.constraint_error, full));
        }
        double mcs = median(ce_s), mcn = median(ce_n);
        double mss = median(se_s), msn = median(se_n);
        bool pass = mcs < 1e-2 && mcn >= 10.0 * mcs && mss <= msn;
        report(6, pass, "stabilization preserves the constraint on a 10x horizon",
               "median final constraint error " + fmt(mcs) + " vs " + fmt(mcn) +
                   " unstabilized; state error " + fmt(mss) + " vs " + fmt(msn));
    }

    // criterion 7: stable-time comparison across both studies
    {
        auto never_exceeds = [](const std::vector<EvalReport>& reps, double horizon) {
            for (const auto& r : reps)
                if (r.diverged || r.stable_time < horizon) return false;
            return true;
        };
        auto median_stable = [](const std::vector<EvalReport>& reps) {
            std::vector<double> st;
            for (const auto& r : reps) st.push_back(r.stable_time);
            return median(st);
        };
        bool snde_stable = never_exceeds(rigid150_snde, 150.0) &&
                           never_exceeds(rigid400_snde, 400.0) &&
                           never_exceeds(tb200_snde, 200.0);
        double rigid_node_med = median_stable(rigid400_node);
        double tb_node_med = median_stable(tb200_node);
        bool node_fails_somewhere = rigid_node_med < 400.0 || tb_node_med < 200.0;
        report(7, snde_stable && node_fails_somewhere,
               "stabilized models never destabilize; unstabilized ones do",
               "unstabilized median stable time " + fmt(rigid_node_med) + "/400s rigid, " +
                   fmt(tb_node_med) + "/200s two-body");
    }

    // criterion 8: insensitivity to the stabilization strength
    std::vector<std::vector<EvalReport>> sweep_reports;
    {
        double lo = 1e300, hi = 0.0;
        for (std::size_t i = 1; i < gammas.size(); ++i) {
            auto reps = eval_study(rigid_sys, rigid[i], 150.0, 10);
            std::vector<double> se;
            for (const auto& r : reps)
                se.push_back(final_or_unreached(r, r.state_error, 1501));
            double m = median(se);
            lo = std::min(lo, m);
            hi = std::max(hi, m);
            sweep_reports.push_back(std::move(reps));
        }
        report(8, hi <= 10.0 * lo, "accuracy is insensitive to the stabilization strength",
               "median final state errors span " + fmt(lo) + " to " + fmt(hi));
    }

    criterion_9();

    // criterion 10 (informational): training overhead and solver effort
    {
        double ratio = rigid_snde.train_seconds / rigid_node.train_seconds;
        std::string stats;
        for (std::size_t i = 1; i < gammas.size(); ++i) {
            long acc = 0, rej = 0, rhs = 0;
            for (const auto& r : sweep_reports[i - 1]) {
                acc += r.stats.accepted;
                rej += r.stats.rejected;
                rhs += r.stats.rhs_evaluations;
            }
            stats += " g" + fmt(gammas[i]) + ":" + std::to_string(acc) + "/" +
                     std::to_string(rej) + "/" + std::to_string(rhs);
        }
        bool in_range = ratio >= 1.0 && ratio <= 2.5;
        report(10, true, "stabilized training overhead and solver effort",
               "wall-clock ratio " + fmt(ratio) + (in_range ? " (within" : " (outside") +
                   " expected [1.0, 2.5]); per-gamma accepted/rejected/rhs:" + stats,
               /*gating=*/false);
    }

    criterion_11();

    std::printf("%s (%d gating failure%s)\n", g_failures == 0 ? "ACCEPTED" : "REJECTED",
                g_failures, g_failures == 1 ? "" : "s");
    return g_failures;
}
