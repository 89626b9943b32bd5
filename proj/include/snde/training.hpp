#pragma once

// Loss, AdamW, learning-rate schedule, and the training loop.

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "snde/dataset.hpp"
#include "snde/field.hpp"
#include "snde/systems.hpp"
#include "snde/taped_integrate.hpp"

namespace snde {

struct TrainingConfig {
    std::string system = "rigid_body";
    ModelKind model = ModelKind::node;
    double gamma = 0.0;
    int hidden_layers = 2;
    int hidden_width = 64;
    int epochs = 1000;
    double lr_max = 1e-3;
    double lr_min = 1e-5;
    double weight_decay = 1e-6;
    std::uint64_t seed = 0;
    double abs_tol = 1e-6;
    double rel_tol = 1e-6;
    int n_trajectories = 40;
    int chunk_length = 3;
    /// Epoch at which stabilization switches on; 0 = active from the
    /// start, matching the default.
    int stabilize_after_epoch = 0;

    void validate() const {
        if (!(lr_max >= lr_min) || !(lr_min > 0)) throw std::invalid_argument("need lr_max >= lr_min > 0");
        if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
        if (chunk_length < 2) throw std::invalid_argument("chunk length must be >= 2");
        if (gamma < 0) throw std::invalid_argument("gamma must be nonnegative");
    }
};

struct Checkpoint {
    TrainingConfig config;
    MlpParams params;
    int epoch = 0;
    std::vector<double> train_loss;
    std::vector<double> val_loss;
};

/// Exponential interpolation between lr_max (epoch 0) and lr_min
/// (final epoch).
inline double lr_at_epoch(int k, int epochs, double lr_max, double lr_min) {
    if (epochs == 1) return lr_max;
    double frac = static_cast<double>(k) / static_cast<double>(epochs - 1);
    return lr_max * std::pow(lr_min / lr_max, frac);
}

struct AdamWState {
    std::vector<double> m, v;
    long step = 0;
};

/// Decoupled weight decay followed by a bias-corrected Adam update.
inline void adamw_step(std::vector<double>& w, const std::vector<double>& grad,
                       AdamWState& state, double lr, double weight_decay,
                       double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    if (grad.size() != w.size()) throw std::invalid_argument("adamw: shape mismatch");
    for (double g : grad)
        if (!std::isfinite(g)) throw std::runtime_error("adamw: non-finite gradient");
    if (state.m.empty()) {
        state.m.assign(w.size(), 0.0);
        state.v.assign(w.size(), 0.0);
    }
    ++state.step;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] -= lr * weight_decay * w[i];
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grad[i];
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grad[i] * grad[i];
        double mhat = state.m[i] / bc1;
        double vhat = state.v[i] / bc2;
        w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

constexpr double kDivergedLossSentinel = 1e30;

/// Squared prediction error over a chunk, excluding the supplied first
/// point. Returns the sentinel when the solver diverges.
inline double chunk_loss(const Field& field, const Chunk& chunk, const StepController& ctrl,
                         std::span<const double> breakpoints = {}) {
    const int dim = field.dim();
    auto res = integrate_piecewise(field.rhs(), chunk.state(0, dim), chunk.times[0],
                                   chunk.times, ctrl, breakpoints);
    if (res.status != SolveStatus::ok || res.trajectory.size() != chunk.times.size())
        return kDivergedLossSentinel;
    double loss = 0.0;
    for (std::size_t i = 1; i < chunk.times.size(); ++i) {
        auto pred = res.trajectory.state(i);
        auto obs = chunk.state(i, dim);
        for (int k = 0; k < dim; ++k) {
            double d = pred[k] - obs[k];
            loss += d * d;
        }
    }
    return loss;
}

/// Loss plus gradient for one chunk via the tape. Returns false (and
/// leaves grad untouched) when the solver diverged on this chunk.
inline bool chunk_loss_gradient(const Field& field, const Chunk& chunk,
                                const StepController& ctrl, const std::vector<double>& params,
                                double& loss, std::vector<double>& grad,
                                std::span<const double> breakpoints = {}) {
    const int dim = field.dim();
    Tape tape(&params);
    int u0 = tape.constant(chunk.state(0, dim));
    auto res = integrate_taped(tape, field, u0, chunk.times[0], chunk.times, ctrl, breakpoints);
    if (res.status != SolveStatus::ok || res.state_vars.size() != chunk.times.size())
        return false;
    for (std::size_t i = 1; i < chunk.times.size(); ++i)
        tape.add_squared_error(res.state_vars[i], chunk.state(i, dim));
    loss = tape.loss();
    if (!std::isfinite(loss)) return false;
    tape.backward();
    grad = tape.param_grad();
    return true;
}

/// Assemble the model field for a config; params must outlive the field.
inline std::shared_ptr<Field> make_model_field(const SystemDefinition& sys, ModelKind kind,
                                               const MlpParams* params) {
    FieldSpec spec;
    spec.state_dim = sys.dim;
    spec.net = params;
    spec.aux = sys.aux;
    spec.aux_dim = sys.aux_dim;
    spec.time_lifted = sys.time_lifted;
    switch (kind) {
        case ModelKind::node: spec.kind = FieldKind::neural; break;
        case ModelKind::so_node: spec.kind = FieldKind::second_order; break;
        case ModelKind::hybrid:
            spec.kind = FieldKind::hybrid;
            spec.known = sys.known_component;
            break;
    }
    return assemble_field(spec);
}

/// Net shapes implied by system and model kind.
inline std::vector<std::pair<int, int>> model_shapes(const SystemDefinition& sys, ModelKind kind,
                                                     int hidden_layers, int hidden_width) {
    int in = 0, out = 0;
    switch (kind) {
        case ModelKind::node:
            in = sys.dim - (sys.time_lifted ? 1 : 0) + sys.aux_dim;
            out = sys.dim - (sys.time_lifted ? 1 : 0);
            break;
        case ModelKind::so_node:
            in = sys.dim + sys.aux_dim;
            out = sys.dim / 2;
            break;
        case ModelKind::hybrid:
            in = sys.dim;
            out = 1;
            break;
    }
    std::vector<std::pair<int, int>> shapes;
    int prev = in;
    for (int l = 0; l < hidden_layers; ++l) {
        shapes.push_back({prev, hidden_width});
        prev = hidden_width;
    }
    shapes.push_back({prev, out});
    return shapes;
}

/// Full training loop: one AdamW step per training chunk, chunk order
/// reshuffled each epoch, validation loss recorded per epoch.
inline Checkpoint train(const TrainingConfig& cfg, const TrajectorySet* dataset = nullptr) {
    cfg.validate();
    auto sys = get_system(cfg.system);
    TrajectorySet local;
    if (!dataset) {
        local = generate_dataset(sys, cfg.n_trajectories, cfg.seed);
        dataset = &local;
    }
    auto chunks = chunk_and_split(*dataset, cfg.chunk_length, 0.75, cfg.seed);

    Checkpoint ck;
    ck.config = cfg;
    ck.params = mlp_init(model_shapes(sys, cfg.model, cfg.hidden_layers, cfg.hidden_width),
                         cfg.seed ^ 0x5851f42d4c957f2dULL);
    auto base = make_model_field(sys, cfg.model, &ck.params);

    // per-trajectory stabilized views (manifold references differ)
    std::vector<std::shared_ptr<Field>> stabilized;
    for (const auto& tr : dataset->trajectories) {
        stabilized.push_back(std::make_shared<StabilizedFieldView>(
            base, sys.manifold_at(tr.state(0)), cfg.gamma));
    }

    StepController ctrl;
    ctrl.abs_tol = cfg.abs_tol;
    ctrl.rel_tol = cfg.rel_tol;

    AdamWState opt;
    std::vector<double> grad;
    std::mt19937_64 shuffle_rng(cfg.seed ^ 0xa0761d6478bd642fULL);

    auto field_for = [&](const Chunk& c, int epoch) -> const Field& {
        bool stab_active = cfg.gamma > 0.0 && epoch >= cfg.stabilize_after_epoch;
        if (!stab_active) return *base;
        return *stabilized[c.traj];
    };
    auto chunk_breakpoints = [&](const Chunk& c) {
        return sys.breakpoints ? sys.breakpoints(c.times.front(), c.times.back())
                               : std::vector<double>{};
    };

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double lr = lr_at_epoch(epoch, cfg.epochs, cfg.lr_max, cfg.lr_min);
        auto order = chunks.train_idx;
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double train_sum = 0.0;
        int diverged = 0;
        for (int ci : order) {
            const Chunk& c = chunks.chunks[ci];
            auto bp = chunk_breakpoints(c);
            double loss = 0.0;
            if (!chunk_loss_gradient(field_for(c, epoch), c, ctrl, ck.params.flat, loss, grad, bp)) {
                ++diverged;
                continue;
            }
            train_sum += loss;
            adamw_step(ck.params.flat, grad, opt, lr, cfg.weight_decay);
        }
        if (diverged * 2 > static_cast<int>(order.size()))
            throw std::runtime_error("training aborted: " + std::to_string(diverged) + " of " +
                                     std::to_string(order.size()) +
                                     " chunks diverged in epoch " + std::to_string(epoch));

        double val_sum = 0.0;
        int val_count = 0;
        for (int ci : chunks.val_idx) {
            const Chunk& c = chunks.chunks[ci];
            double l = chunk_loss(field_for(c, epoch), c, ctrl, chunk_breakpoints(c));
            if (l < kDivergedLossSentinel) {
                val_sum += l;
                ++val_count;
            }
        }
        ck.train_loss.push_back(order.empty() ? 0.0 : train_sum / static_cast<double>(order.size()));
        ck.val_loss.push_back(val_count > 0 ? val_sum / val_count : kDivergedLossSentinel);
        ck.epoch = epoch + 1;
    }
    return ck;
}

}  // namespace snde
