#pragma once

// Experiment configuration: flat key=value text with # comments.
// Missing keys fall back to per-system defaults; unknown keys are
// rejected with line numbers. Also: dataset CSV read/write.

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "snde/checkpoint.hpp"
#include "snde/dataset.hpp"

namespace snde {

struct ExperimentConfig {
    TrainingConfig training;
    std::string out_dir = "out";
    double eval_horizon = 0.0;  ///< 0 = system default
    int n_test_trials = 100;
    std::vector<double> gamma_sweep;
    int measure_bins = 20;
    double measure_dt = 0.01;
    double measure_burn_in = 10.0;
    double measure_horizon = 600.0;
};

/// Per-experiment tuned defaults (stabilization strength, width, LR
/// range); shared values elsewhere.
inline void apply_system_defaults(TrainingConfig& c) {
    struct Row {
        double gamma;
        int width;
        double lr_max, lr_min;
    };
    static const std::map<std::string, Row> rows = {
        {"two_body", {8.0, 128, 1e-3, 1e-5}},
        {"rigid_body", {32.0, 64, 1e-4, 1e-5}},
        {"dc_converter", {8.0, 64, 5e-3, 1e-5}},
        {"robot_arm", {16.0, 128, 1e-3, 1e-5}},
        {"double_pendulum", {16.0, 128, 1e-2, 1e-4}},
        {"double_pendulum_hybrid", {16.0, 128, 1e-2, 1e-4}},
    };
    auto it = rows.find(c.system);
    if (it == rows.end()) throw std::invalid_argument("unknown system: " + c.system);
    c.gamma = it->second.gamma;
    c.hidden_width = it->second.width;
    c.lr_max = it->second.lr_max;
    c.lr_min = it->second.lr_min;
    c.model = get_system(c.system).default_model;
}

namespace detail {

inline std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<double> parse_list(const std::string& s, const std::string& what) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (!tok.empty()) out.push_back(parse_double(tok, what));
    }
    return out;
}

}  // namespace detail

inline ExperimentConfig parse_config_text(const std::string& text,
                                          const std::string& origin = "<string>") {
    // First pass: collect key/value pairs, remember line numbers.
    std::vector<std::tuple<int, std::string, std::string>> kv;
    std::stringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument(origin + ":" + std::to_string(lineno) +
                                        ": expected key=value, got '" + line + "'");
        kv.push_back({lineno, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1))});
    }

    ExperimentConfig cfg;
    // The system key selects defaults; everything else then overrides.
    for (auto& [ln, key, val] : kv)
        if (key == "system") cfg.training.system = val;
    apply_system_defaults(cfg.training);

    for (auto& [ln, key, val] : kv) {
        try {
            if (apply_training_key(cfg.training, key, val)) continue;
            if (key == "out_dir") cfg.out_dir = val;
            else if (key == "eval_horizon") cfg.eval_horizon = detail::parse_double(val, key);
            else if (key == "n_test_trials")
                cfg.n_test_trials = static_cast<int>(detail::parse_int(val, key));
            else if (key == "gamma_sweep") cfg.gamma_sweep = detail::parse_list(val, key);
            else if (key == "measure_bins")
                cfg.measure_bins = static_cast<int>(detail::parse_int(val, key));
            else if (key == "measure_dt") cfg.measure_dt = detail::parse_double(val, key);
            else if (key == "measure_burn_in")
                cfg.measure_burn_in = detail::parse_double(val, key);
            else if (key == "measure_horizon")
                cfg.measure_horizon = detail::parse_double(val, key);
            else
                throw std::invalid_argument("unknown key '" + key + "'");
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument(origin + ":" + std::to_string(ln) + ": " + e.what());
        }
    }
    cfg.training.validate();
    if (cfg.n_test_trials < 1) throw std::invalid_argument(origin + ": n_test_trials must be >= 1");
    if (cfg.measure_bins < 1) throw std::invalid_argument(origin + ": measure_bins must be >= 1");
    return cfg;
}

inline ExperimentConfig parse_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read config: " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config_text(ss.str(), path);
}

inline std::string serialize_config(const ExperimentConfig& cfg) {
    std::ostringstream os;
    write_training_config(os, cfg.training);
    os << "out_dir=" << cfg.out_dir << "\n";
    os << "eval_horizon=" << detail::fmt17(cfg.eval_horizon) << "\n";
    os << "n_test_trials=" << cfg.n_test_trials << "\n";
    os << "gamma_sweep=";
    for (std::size_t i = 0; i < cfg.gamma_sweep.size(); ++i) {
        if (i) os << ",";
        os << detail::fmt17(cfg.gamma_sweep[i]);
    }
    os << "\n";
    os << "measure_bins=" << cfg.measure_bins << "\n";
    os << "measure_dt=" << detail::fmt17(cfg.measure_dt) << "\n";
    os << "measure_burn_in=" << detail::fmt17(cfg.measure_burn_in) << "\n";
    os << "measure_horizon=" << detail::fmt17(cfg.measure_horizon) << "\n";
    return os.str();
}

inline bool config_equal(const ExperimentConfig& a, const ExperimentConfig& b) {
    return serialize_config(a) == serialize_config(b);
}

// ------------------------------------------------------------- dataset files

inline void save_dataset(const TrajectorySet& set, const std::string& csv_path,
                         const std::string& meta_path) {
    std::ofstream os(csv_path);
    if (!os) throw std::runtime_error("cannot write dataset: " + csv_path);
    int dim = set.trajectories.empty() ? 0 : set.trajectories[0].dim;
    os << "traj_id,t";
    for (int d = 0; d < dim; ++d) os << ",u_" << d;
    os << "\n";
    for (std::size_t ti = 0; ti < set.trajectories.size(); ++ti) {
        const Trajectory& tr = set.trajectories[ti];
        for (std::size_t i = 0; i < tr.size(); ++i) {
            os << ti << "," << detail::fmt17(tr.times[i]);
            for (double v : tr.state(i)) os << "," << detail::fmt17(v);
            os << "\n";
        }
    }
    std::ofstream ms(meta_path);
    if (!ms) throw std::runtime_error("cannot write dataset metadata: " + meta_path);
    ms << "system=" << set.system << "\n";
    ms << "seed=" << set.seed << "\n";
    ms << "dt=" << detail::fmt17(set.dt) << "\n";
    ms << "n_trajectories=" << set.trajectories.size() << "\n";
    for (std::size_t ti = 0; ti < set.references.size(); ++ti) {
        ms << "reference_" << ti << "=";
        for (std::size_t k = 0; k < set.references[ti].size(); ++k) {
            if (k) ms << ",";
            ms << detail::fmt17(set.references[ti][k]);
        }
        ms << "\n";
    }
}

inline TrajectorySet load_dataset(const std::string& csv_path, const std::string& meta_path) {
    std::ifstream ms(meta_path);
    if (!ms) throw std::runtime_error("cannot read dataset metadata: " + meta_path);
    TrajectorySet set;
    std::string line;
    while (std::getline(ms, line)) {
        line = detail::trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(meta_path + ": malformed line '" + line + "'");
        std::string key = line.substr(0, eq), val = line.substr(eq + 1);
        if (key == "system") set.system = val;
        else if (key == "seed") set.seed = static_cast<std::uint64_t>(detail::parse_int(val, key));
        else if (key == "dt") set.dt = detail::parse_double(val, key);
        else if (key == "n_trajectories") { /* count re-derived from the CSV */ }
        else if (key.rfind("reference_", 0) == 0) set.references.push_back(detail::parse_list(val, key));
        else throw std::runtime_error(meta_path + ": unknown key '" + key + "'");
    }

    std::ifstream is(csv_path);
    if (!is) throw std::runtime_error("cannot read dataset: " + csv_path);
    if (!std::getline(is, line)) throw std::runtime_error(csv_path + ": empty file");
    int dim = -1;  // from header: traj_id,t,u_0,...
    {
        std::stringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) ++dim;
        --dim;
    }
    if (dim < 1) throw std::runtime_error(csv_path + ": malformed header");
    long last_id = -1;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string tok;
        std::getline(ss, tok, ',');
        long id = detail::parse_int(tok, "traj_id");
        if (id != last_id) {
            if (id != last_id + 1)
                throw std::runtime_error(csv_path + ": trajectory ids out of order");
            set.trajectories.push_back(Trajectory{});
            set.trajectories.back().dim = dim;
            last_id = id;
        }
        std::getline(ss, tok, ',');
        double t = detail::parse_double(tok, "t");
        std::vector<double> u(dim);
        for (int d = 0; d < dim; ++d) {
            if (!std::getline(ss, tok, ','))
                throw std::runtime_error(csv_path + ": short row '" + line + "'");
            u[d] = detail::parse_double(tok, "state");
        }
        set.trajectories.back().push(t, u);
    }
    if (!set.references.empty() && set.references.size() != set.trajectories.size())
        throw std::runtime_error(csv_path + ": reference count mismatch");
    return set;
}

}  // namespace snde
