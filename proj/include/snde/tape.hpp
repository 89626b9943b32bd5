#pragma once

// Reverse-mode gradient tape. Operations are recorded at the level of
// whole vectors (affine layers, stage combinations, analytic maps), so
// the backward pass is a handful of matrix-vector products per solver
// stage rather than a scalar-op graph.

#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "snde/jacobian.hpp"
#include "snde/manifold.hpp"

namespace snde {

/// Type-erased analytic map y = f(t, x) evaluable on doubles and duals;
/// the dual instantiation supplies the exact Jacobian for backprop.
struct ErasedMap {
    int in = 0, out = 0;
    std::function<void(double, std::span<const double>, std::span<double>)> f0;
    std::function<void(double, std::span<const Dual1>, std::span<Dual1>)> f1;
};

template <class F>
ErasedMap erase_map(int in, int out, F f) {
    ErasedMap em;
    em.in = in;
    em.out = out;
    em.f0 = [f](double t, std::span<const double> x, std::span<double> y) { f(t, x, y); };
    em.f1 = [f](double t, std::span<const Dual1> x, std::span<Dual1> y) { f(t, x, y); };
    return em;
}

class Tape {
public:
    explicit Tape(const std::vector<double>* params = nullptr) : params_(params) {
        if (params_) param_grad_.assign(params_->size(), 0.0);
    }

    std::span<const double> value(int var) const {
        const Var& v = vars_[var];
        return {vals_.data() + v.off, static_cast<std::size_t>(v.len)};
    }
    int length(int var) const { return vars_[var].len; }

    int constant(std::span<const double> v) {
        int y = new_var(static_cast<int>(v.size()));
        write(y, v);
        ops_.push_back(OpConst{y});
        return y;
    }

    /// y = W x + b with W (out x in, row-major) at params[w_off] and b
    /// at params[b_off].
    int affine(int x, int w_off, int b_off, int in, int out) {
        if (length(x) != in) throw std::invalid_argument("affine: input width mismatch");
        int y = new_var(out);
        const double* W = params_->data() + w_off;
        const double* b = params_->data() + b_off;
        auto xv = value(x);
        auto yv = mutable_value(y);
        for (int i = 0; i < out; ++i) {
            double s = b[i];
            for (int j = 0; j < in; ++j) s += W[i * in + j] * xv[j];
            yv[i] = s;
        }
        ops_.push_back(OpAffine{x, y, w_off, b_off, in, out});
        return y;
    }

    /// Elementwise max(x, 0); subgradient at 0 is 0.
    int relu(int x) {
        int y = new_var(length(x));
        auto xv = value(x);
        auto yv = mutable_value(y);
        for (std::size_t i = 0; i < xv.size(); ++i) yv[i] = xv[i] > 0.0 ? xv[i] : 0.0;
        ops_.push_back(OpRelu{x, y});
        return y;
    }

    /// y = sum_i c_i * x_i over equal-length variables.
    int lincomb(std::vector<std::pair<double, int>> terms) {
        if (terms.empty()) throw std::invalid_argument("lincomb: no terms");
        int len = length(terms[0].second);
        int y = new_var(len);
        auto yv = mutable_value(y);
        for (int k = 0; k < len; ++k) yv[k] = 0.0;
        for (auto& [c, x] : terms) {
            auto xv = value(x);
            if (static_cast<int>(xv.size()) != len) throw std::invalid_argument("lincomb: length mismatch");
            for (int k = 0; k < len; ++k) yv[k] += c * xv[k];
        }
        ops_.push_back(OpLinComb{std::move(terms), y});
        return y;
    }

    /// y = f(t, x) for an analytic map; backward applies the exact
    /// transposed Jacobian obtained from the dual instantiation.
    /// The map must outlive the tape.
    int analytic(const ErasedMap* f, double t, int x) {
        if (length(x) != f->in) throw std::invalid_argument("analytic: input width mismatch");
        int y = new_var(f->out);
        f->f0(t, value(x), mutable_value(y));
        ops_.push_back(OpAnalytic{f, t, x, y});
        return y;
    }

    int concat(std::vector<int> xs) {
        int len = 0;
        for (int x : xs) len += length(x);
        int y = new_var(len);
        auto yv = mutable_value(y);
        int off = 0;
        for (int x : xs) {
            auto xv = value(x);
            for (std::size_t i = 0; i < xv.size(); ++i) yv[off + static_cast<int>(i)] = xv[i];
            off += static_cast<int>(xv.size());
        }
        ops_.push_back(OpConcat{std::move(xs), y});
        return y;
    }

    int slice(int x, int off, int len) {
        if (off + len > length(x)) throw std::invalid_argument("slice: out of range");
        int y = new_var(len);
        auto xv = value(x);
        auto yv = mutable_value(y);
        for (int i = 0; i < len; ++i) yv[i] = xv[off + i];
        ops_.push_back(OpSlice{x, off, y});
        return y;
    }

    /// loss += ||x - target||^2
    void add_squared_error(int x, std::span<const double> target) {
        auto xv = value(x);
        if (xv.size() != target.size()) throw std::invalid_argument("squared_error: length mismatch");
        double s = 0.0;
        for (std::size_t i = 0; i < xv.size(); ++i) {
            double d = xv[i] - target[i];
            s += d * d;
        }
        loss_ += s;
        ops_.push_back(OpSqErr{x, std::vector<double>(target.begin(), target.end())});
    }

    double loss() const { return loss_; }

    /// Reverse sweep; accumulates d loss / d params into param_grad().
    void backward() {
        adj_.assign(vals_.size(), 0.0);
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it)
            std::visit([this](const auto& op) { pull(op); }, *it);
    }

    const std::vector<double>& param_grad() const { return param_grad_; }

    /// Adjoint of a variable after backward() (d loss / d var).
    std::span<const double> adjoint_of(int var) const {
        const Var& v = vars_[var];
        return {adj_.data() + v.off, static_cast<std::size_t>(v.len)};
    }

    struct Mark {
        std::size_t ops, vars, vals;
        double loss;
    };
    Mark mark() const { return {ops_.size(), vars_.size(), vals_.size(), loss_}; }
    /// Discard everything recorded after `m` (used to drop rejected
    /// solver steps).
    void rollback(const Mark& m) {
        ops_.resize(m.ops);
        vars_.resize(m.vars);
        vals_.resize(m.vals);
        loss_ = m.loss;
    }

private:
    struct Var {
        std::size_t off;
        int len;
    };
    struct OpConst {
        int y;
    };
    struct OpAffine {
        int x, y, w_off, b_off, in, out;
    };
    struct OpRelu {
        int x, y;
    };
    struct OpLinComb {
        std::vector<std::pair<double, int>> terms;
        int y;
    };
    struct OpAnalytic {
        const ErasedMap* f;
        double t;
        int x, y;
    };
    struct OpConcat {
        std::vector<int> xs;
        int y;
    };
    struct OpSlice {
        int x, off, y;
    };
    struct OpSqErr {
        int x;
        std::vector<double> target;
    };
    using Op = std::variant<OpConst, OpAffine, OpRelu, OpLinComb, OpAnalytic, OpConcat,
                            OpSlice, OpSqErr>;

    int new_var(int len) {
        vars_.push_back(Var{vals_.size(), len});
        vals_.resize(vals_.size() + len, 0.0);
        return static_cast<int>(vars_.size()) - 1;
    }
    std::span<double> mutable_value(int var) {
        Var& v = vars_[var];
        return {vals_.data() + v.off, static_cast<std::size_t>(v.len)};
    }
    std::span<double> adjoint(int var) {
        Var& v = vars_[var];
        return {adj_.data() + v.off, static_cast<std::size_t>(v.len)};
    }

    void pull(const OpConst&) {}
    void pull(const OpAffine& op) {
        auto ybar = adjoint(op.y);
        auto xbar = adjoint(op.x);
        auto xv = value(op.x);
        const double* W = params_->data() + op.w_off;
        for (int i = 0; i < op.out; ++i) {
            double yb = ybar[i];
            if (yb == 0.0) continue;
            param_grad_[op.b_off + i] += yb;
            for (int j = 0; j < op.in; ++j) {
                param_grad_[op.w_off + i * op.in + j] += yb * xv[j];
                xbar[j] += W[i * op.in + j] * yb;
            }
        }
    }
    void pull(const OpRelu& op) {
        auto ybar = adjoint(op.y);
        auto xbar = adjoint(op.x);
        auto xv = value(op.x);
        for (std::size_t i = 0; i < xv.size(); ++i)
            if (xv[i] > 0.0) xbar[i] += ybar[i];
    }
    void pull(const OpLinComb& op) {
        auto ybar = adjoint(op.y);
        for (auto& [c, x] : op.terms) {
            auto xbar = adjoint(x);
            for (std::size_t k = 0; k < ybar.size(); ++k) xbar[k] += c * ybar[k];
        }
    }
    void pull(const OpAnalytic& op) {
        auto ybar = adjoint(op.y);
        bool live = false;
        for (double v : ybar)
            if (v != 0.0) { live = true; break; }
        if (!live) return;
        auto xv = value(op.x);
        const int n = op.f->in, m = op.f->out;
        std::vector<double> J(static_cast<std::size_t>(m) * n);
        double t = op.t;
        jacobian_generic<double>(
            [f = op.f, t](std::span<const Dual1> x, std::span<Dual1> y) { f->f1(t, x, y); },
            xv, m, J.data());
        auto xbar = adjoint(op.x);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) xbar[j] += J[i * n + j] * ybar[i];
    }
    void pull(const OpConcat& op) {
        auto ybar = adjoint(op.y);
        int off = 0;
        for (int x : op.xs) {
            auto xbar = adjoint(x);
            for (std::size_t i = 0; i < xbar.size(); ++i) xbar[i] += ybar[off + static_cast<int>(i)];
            off += static_cast<int>(xbar.size());
        }
    }
    void pull(const OpSlice& op) {
        auto ybar = adjoint(op.y);
        auto xbar = adjoint(op.x);
        for (std::size_t i = 0; i < ybar.size(); ++i) xbar[op.off + static_cast<int>(i)] += ybar[i];
    }
    void pull(const OpSqErr& op) {
        auto xbar = adjoint(op.x);
        auto xv = value(op.x);
        for (std::size_t i = 0; i < xv.size(); ++i) xbar[i] += 2.0 * (xv[i] - op.target[i]);
    }

    void write(int var, std::span<const double> v) {
        auto dst = mutable_value(var);
        for (std::size_t i = 0; i < v.size(); ++i) dst[i] = v[i];
    }

    const std::vector<double>* params_ = nullptr;
    std::vector<double> param_grad_;
    std::vector<Var> vars_;
    std::vector<double> vals_;
    std::vector<double> adj_;
    std::vector<Op> ops_;
    double loss_ = 0.0;
};

}  // namespace snde
