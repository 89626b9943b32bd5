#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace snde {

/// Sampled solution: a strictly increasing time grid plus one state row
/// per time point (row-major, rows x dim).
struct Trajectory {
    std::vector<double> times;
    std::vector<double> states;  ///< times.size() * dim
    int dim = 0;

    std::size_t size() const { return times.size(); }
    std::span<const double> state(std::size_t i) const {
        return {states.data() + i * dim, static_cast<std::size_t>(dim)};
    }
    void push(double t, std::span<const double> u) {
        times.push_back(t);
        states.insert(states.end(), u.begin(), u.end());
    }
};

struct SolverStats {
    std::int64_t accepted = 0;
    std::int64_t rejected = 0;
    std::int64_t rhs_evaluations = 0;

    SolverStats& operator+=(const SolverStats& o) {
        accepted += o.accepted;
        rejected += o.rejected;
        rhs_evaluations += o.rhs_evaluations;
        return *this;
    }
};

}  // namespace snde
