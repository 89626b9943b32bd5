#pragma once

// Ground-truth dataset generation and chunk/split preparation.

#include <algorithm>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "snde/integrate.hpp"
#include "snde/systems.hpp"

namespace snde {

struct TrajectorySet {
    std::string system;
    std::uint64_t seed = 0;
    double dt = 0.0;
    std::vector<Trajectory> trajectories;
    std::vector<std::vector<double>> references;  ///< per-trajectory constants
    std::vector<SolverStats> stats;
};

/// Ground-truth solver: the 5(4) pair at tight tolerances.
inline StepController ground_truth_controller() {
    StepController c;
    c.abs_tol = 1e-12;
    c.rel_tol = 1e-12;
    return c;
}

inline std::vector<double> uniform_grid(double t0, double horizon, double dt) {
    std::vector<double> ts;
    long n = static_cast<long>(std::floor(horizon / dt + 1e-9));
    ts.reserve(n + 1);
    for (long i = 0; i <= n; ++i) ts.push_back(t0 + i * dt);
    return ts;
}

inline TrajectorySet generate_dataset(const SystemDefinition& sys, int n_traj,
                                      std::uint64_t seed) {
    if (n_traj < 1) throw std::invalid_argument("need at least one trajectory");
    TrajectorySet set;
    set.system = sys.name;
    set.seed = seed;
    set.dt = sys.default_dt;
    auto ctrl = ground_truth_controller();
    AnalyticField truth(sys.truth);
    auto rhs = truth.rhs();
    for (int i = 0; i < n_traj; ++i) {
        auto u0 = sys.sample_ic(seed * 1000003ULL + static_cast<std::uint64_t>(i));
        auto ts = uniform_grid(0.0, sys.horizon_of(u0), sys.default_dt);
        std::vector<double> bp;
        if (sys.breakpoints) bp = sys.breakpoints(0.0, ts.back());
        auto res = integrate_piecewise(rhs, u0, 0.0, ts, ctrl, bp);
        if (res.status != SolveStatus::ok)
            throw std::runtime_error("dataset generation failed on trajectory " +
                                     std::to_string(i) + " (" + sys.name + ")");
        set.trajectories.push_back(std::move(res.trajectory));
        set.references.push_back(sys.reference_of(u0));
        set.stats.push_back(res.stats);
    }
    return set;
}

/// A chunk: a contiguous sub-grid of one source trajectory.
struct Chunk {
    int traj = 0;  ///< source trajectory index (selects the manifold)
    std::vector<double> times;
    std::vector<double> states;  ///< times.size() x dim, row-major

    std::span<const double> state(std::size_t i, int dim) const {
        return {states.data() + i * dim, static_cast<std::size_t>(dim)};
    }
};

struct ChunkDataset {
    int dim = 0;
    std::vector<Chunk> chunks;
    std::vector<int> train_idx;
    std::vector<int> val_idx;
};

/// Consecutive disjoint windows of chunk_len sample points, leftover
/// tail dropped; global shuffle then a 75:25 (by default) split.
inline ChunkDataset chunk_and_split(const TrajectorySet& set, int chunk_len = 3,
                                    double train_ratio = 0.75, std::uint64_t seed = 0) {
    if (chunk_len < 2) throw std::invalid_argument("chunk length must be at least 2");
    ChunkDataset ds;
    for (std::size_t ti = 0; ti < set.trajectories.size(); ++ti) {
        const Trajectory& tr = set.trajectories[ti];
        ds.dim = tr.dim;
        if (static_cast<int>(tr.size()) < chunk_len)
            throw std::invalid_argument("trajectory " + std::to_string(ti) +
                                        " shorter than chunk length");
        for (std::size_t start = 0; start + chunk_len <= tr.size(); start += chunk_len) {
            Chunk c;
            c.traj = static_cast<int>(ti);
            for (int k = 0; k < chunk_len; ++k) {
                c.times.push_back(tr.times[start + k]);
                auto u = tr.state(start + k);
                c.states.insert(c.states.end(), u.begin(), u.end());
            }
            ds.chunks.push_back(std::move(c));
        }
    }
    std::vector<int> order(ds.chunks.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::mt19937_64 rng(seed ^ 0xc2b2ae3d27d4eb4fULL);
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t n_train = static_cast<std::size_t>(order.size() * train_ratio);
    ds.train_idx.assign(order.begin(), order.begin() + n_train);
    ds.val_idx.assign(order.begin() + n_train, order.end());
    return ds;
}

}  // namespace snde
