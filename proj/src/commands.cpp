#include "snde/commands.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "snde/evaluation.hpp"

namespace snde {

namespace fs = std::filesystem;

namespace {

void write_snapshot(const ExperimentConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    std::ofstream os(fs::path(cfg.out_dir) / "config.txt");
    if (!os) throw std::runtime_error("cannot write config snapshot in " + cfg.out_dir);
    os << serialize_config(cfg);
}

std::string gamma_tag(double g) {
    std::ostringstream os;
    os << "gamma_" << g;
    return os.str();
}

/// Aggregate the state-error series across trials (mean and 95% CI per
/// time index, over the trials that reached that index).
void write_aggregate(const std::vector<EvalReport>& reports, const std::string& path) {
    std::size_t max_len = 0;
    for (const auto& r : reports) max_len = std::max(max_len, r.times.size());
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << "t,mean,ci_low,ci_high\n";
    std::vector<double> vals;
    for (std::size_t i = 0; i < max_len; ++i) {
        vals.clear();
        double t = 0.0;
        for (const auto& r : reports) {
            if (i < r.times.size()) {
                t = r.times[i];
                vals.push_back(r.state_error[i]);
            }
        }
        auto ci = mean_ci(vals);
        os << detail::fmt17(t) << "," << detail::fmt17(ci.mean) << ","
           << detail::fmt17(ci.ci_low) << "," << detail::fmt17(ci.ci_high) << "\n";
    }
}

void write_reports(const std::vector<EvalReport>& reports, const fs::path& dir) {
    for (std::size_t k = 0; k < reports.size(); ++k) {
        std::ofstream os(dir / ("trial_" + std::to_string(k) + ".csv"));
        os << "t,rel_err_state,rel_err_constraint\n";
        const auto& r = reports[k];
        for (std::size_t i = 0; i < r.times.size(); ++i)
            os << detail::fmt17(r.times[i]) << "," << detail::fmt17(r.state_error[i]) << ","
               << detail::fmt17(r.constraint_error[i]) << "\n";
    }
    std::ofstream ss(dir / "stats.csv");
    ss << "trial,accepted,rejected,rhs_evals,stable_time\n";
    for (std::size_t k = 0; k < reports.size(); ++k) {
        const auto& r = reports[k];
        ss << k << "," << r.stats.accepted << "," << r.stats.rejected << ","
           << r.stats.rhs_evaluations << "," << detail::fmt17(r.stable_time) << "\n";
    }
    write_aggregate(reports, (dir / "aggregate.csv").string());
}

std::vector<EvalReport> run_eval(const ExperimentConfig& cfg, const fs::path& dir) {
    auto sys = get_system(cfg.training.system);
    EvalOptions opt;
    opt.n_trials = cfg.n_test_trials;
    opt.horizon = cfg.eval_horizon;
    opt.seed = cfg.training.seed;
    opt.model_ctrl.abs_tol = cfg.training.abs_tol;
    opt.model_ctrl.rel_tol = cfg.training.rel_tol;

    fs::path ck_path = dir / "checkpoint.txt";
    std::shared_ptr<const Field> model;
    double gamma = 0.0;
    Checkpoint ck;
    if (fs::exists(ck_path)) {
        ck = load_checkpoint(ck_path.string());
        if (ck.config.system != cfg.training.system)
            throw std::runtime_error("checkpoint system '" + ck.config.system +
                                     "' does not match config system '" + cfg.training.system +
                                     "'");
        model = make_model_field(sys, ck.config.model, &ck.params);
        gamma = ck.config.gamma;
    } else {
        // no trained model present: evaluate the exact field (oracle)
        std::cout << "no checkpoint in " << dir << ", evaluating the ground-truth field\n";
        model = sys.truth_field();
    }
    return evaluate_model(sys, model, gamma, opt);
}

}  // namespace

int cmd_generate(const ExperimentConfig& cfg) {
    write_snapshot(cfg);
    auto sys = get_system(cfg.training.system);
    auto set = generate_dataset(sys, cfg.training.n_trajectories, cfg.training.seed);
    fs::path dir(cfg.out_dir);
    save_dataset(set, (dir / "dataset.csv").string(), (dir / "dataset.meta").string());
    std::cout << "wrote " << set.trajectories.size() << " trajectories to "
              << (dir / "dataset.csv") << "\n";
    return 0;
}

int cmd_train(const ExperimentConfig& cfg) {
    write_snapshot(cfg);
    auto ck = train(cfg.training);
    fs::path dir(cfg.out_dir);
    save_checkpoint(ck, (dir / "checkpoint.txt").string());
    std::ofstream os(dir / "loss.csv");
    os << "epoch,train_loss,val_loss\n";
    for (std::size_t e = 0; e < ck.train_loss.size(); ++e)
        os << e << "," << detail::fmt17(ck.train_loss[e]) << ","
           << detail::fmt17(ck.val_loss[e]) << "\n";
    std::cout << "trained " << ck.epoch << " epochs; final val loss "
              << ck.val_loss.back() << "\n";
    return 0;
}

int cmd_eval(const ExperimentConfig& cfg) {
    write_snapshot(cfg);
    fs::path dir(cfg.out_dir);
    auto reports = run_eval(cfg, dir);
    write_reports(reports, dir);
    double mean_final = 0.0;
    int n = 0;
    for (const auto& r : reports)
        if (!r.state_error.empty()) {
            mean_final += r.state_error.back();
            ++n;
        }
    std::cout << "evaluated " << reports.size() << " trials; mean final relative error "
              << (n ? mean_final / n : 0.0) << "\n";
    return 0;
}

int cmd_sweep_gamma(const ExperimentConfig& cfg) {
    if (cfg.gamma_sweep.empty())
        throw std::runtime_error("sweep-gamma requires a nonempty gamma_sweep list");
    write_snapshot(cfg);
    for (double g : cfg.gamma_sweep) {
        ExperimentConfig sub = cfg;
        sub.training.gamma = g;
        sub.out_dir = (fs::path(cfg.out_dir) / gamma_tag(g)).string();
        std::cout << "=== gamma = " << g << " ===\n";
        cmd_train(sub);
        cmd_eval(sub);
    }
    return 0;
}

int cmd_measure(const ExperimentConfig& cfg) {
    write_snapshot(cfg);
    auto sys = get_system(cfg.training.system);
    fs::path dir(cfg.out_dir);

    auto u0 = sys.sample_ic(cfg.training.seed * 2654435761ULL + 1ULL);
    auto ts = uniform_grid(0.0, cfg.measure_horizon, cfg.measure_dt);
    std::vector<double> bp;
    if (sys.breakpoints) bp = sys.breakpoints(0.0, ts.back());
    auto truth = integrate_piecewise(AnalyticField(sys.truth).rhs(), u0, 0.0, ts,
                                     ground_truth_controller(), bp);
    if (truth.status != SolveStatus::ok)
        throw std::runtime_error("ground-truth integration failed in measure");

    auto grid = default_measure_grid(sys, truth.trajectory, cfg.measure_bins);
    auto h_truth = occupation_measure(truth.trajectory, grid, cfg.measure_burn_in);

    std::ofstream hs(dir / "hellinger.csv");
    hs << "pair,hellinger,bins,burn_in,horizon\n";

    // split-half self-distance of the ground truth (sampling noise floor)
    {
        double mid = cfg.measure_burn_in + 0.5 * (cfg.measure_horizon - cfg.measure_burn_in);
        Trajectory first, second;
        first.dim = second.dim = truth.trajectory.dim;
        for (std::size_t i = 0; i < truth.trajectory.size(); ++i) {
            double t = truth.trajectory.times[i];
            if (t < cfg.measure_burn_in) continue;
            (t < mid ? first : second).push(t, truth.trajectory.state(i));
        }
        auto hl = hellinger(occupation_measure(first, grid), occupation_measure(second, grid));
        hs << "truth_halves," << detail::fmt17(hl) << "," << cfg.measure_bins << ","
           << detail::fmt17(cfg.measure_burn_in) << "," << detail::fmt17(cfg.measure_horizon)
           << "\n";
        std::cout << "truth split-half Hellinger distance: " << hl << "\n";
    }

    fs::path ck_path = dir / "checkpoint.txt";
    if (fs::exists(ck_path)) {
        auto ck = load_checkpoint(ck_path.string());
        auto base = make_model_field(sys, ck.config.model, &ck.params);
        StabilizedFieldView model(base, sys.manifold_at(u0), ck.config.gamma);
        StepController ctrl;
        ctrl.abs_tol = cfg.training.abs_tol;
        ctrl.rel_tol = cfg.training.rel_tol;
        auto pred = integrate_piecewise(model.rhs(), u0, 0.0, ts, ctrl, bp);
        if (pred.status != SolveStatus::ok)
            std::cout << "model trajectory diverged; histogram uses the surviving prefix\n";
        auto h_model = occupation_measure(pred.trajectory, grid, cfg.measure_burn_in);
        double hl = hellinger(h_truth, h_model);
        hs << "truth_vs_model," << detail::fmt17(hl) << "," << cfg.measure_bins << ","
           << detail::fmt17(cfg.measure_burn_in) << "," << detail::fmt17(cfg.measure_horizon)
           << "\n";
        std::cout << "truth vs model Hellinger distance: " << hl << "\n";

        std::ofstream ms(dir / "histogram_model.csv");
        ms << "bin,weight\n";
        for (std::size_t i = 0; i < h_model.weights.size(); ++i)
            if (h_model.weights[i] > 0.0) ms << i << "," << detail::fmt17(h_model.weights[i]) << "\n";
    }

    std::ofstream os(dir / "histogram_truth.csv");
    os << "bin,weight\n";
    for (std::size_t i = 0; i < h_truth.weights.size(); ++i)
        if (h_truth.weights[i] > 0.0) os << i << "," << detail::fmt17(h_truth.weights[i]) << "\n";
    return 0;
}

int cmd_report(const ExperimentConfig& cfg) {
    // Rebuild the aggregate CSV from the per-trial files already on disk.
    fs::path dir(cfg.out_dir);
    std::vector<EvalReport> reports;
    for (int k = 0;; ++k) {
        fs::path p = dir / ("trial_" + std::to_string(k) + ".csv");
        if (!fs::exists(p)) break;
        std::ifstream is(p);
        std::string line;
        std::getline(is, line);  // header
        EvalReport r;
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            std::stringstream ss(line);
            std::string t, se, ce;
            std::getline(ss, t, ',');
            std::getline(ss, se, ',');
            std::getline(ss, ce);
            r.times.push_back(detail::parse_double(t, "t"));
            r.state_error.push_back(detail::parse_double(se, "rel_err_state"));
            r.constraint_error.push_back(detail::parse_double(ce, "rel_err_constraint"));
        }
        reports.push_back(std::move(r));
    }
    if (reports.empty())
        throw std::runtime_error("no trial CSVs under " + cfg.out_dir + "; run eval first");
    write_aggregate(reports, (dir / "aggregate.csv").string());
    std::cout << "aggregated " << reports.size() << " trials into "
              << (dir / "aggregate.csv") << "\n";
    return 0;
}

int run_command(const std::string& command, const ExperimentConfig& cfg) {
    try {
        if (command == "generate") return cmd_generate(cfg);
        if (command == "train") return cmd_train(cfg);
        if (command == "eval") return cmd_eval(cfg);
        if (command == "sweep-gamma") return cmd_sweep_gamma(cfg);
        if (command == "measure") return cmd_measure(cfg);
        if (command == "report") return cmd_report(cfg);
        std::cerr << "unknown command: " << command << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace snde
