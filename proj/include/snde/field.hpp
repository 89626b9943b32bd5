#pragma once

// Vector fields: analytic ground truth, pure neural, second-order lift,
// hybrid (known part + learned slot), and the stabilization wrapper.
// Every field supports plain evaluation; trainable fields additionally
// record themselves onto a gradient tape.

#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "snde/integrate.hpp"
#include "snde/manifold.hpp"
#include "snde/mlp.hpp"
#include "snde/stabilization.hpp"
#include "snde/tape.hpp"

namespace snde {

using AuxFn = std::function<std::vector<double>(double t)>;

class Field {
public:
    virtual ~Field() = default;
    virtual int dim() const = 0;
    virtual void eval(double t, std::span<const double> u, std::span<double> du) const = 0;
    virtual int eval_taped(Tape&, double, int) const {
        throw std::logic_error("field is not differentiable");
    }
    RhsFn rhs() const {
        return [this](double t, std::span<const double> u, std::span<double> du) {
            eval(t, u, du);
        };
    }
};

/// Analytic field wrapping a type-erased map (ground truth dynamics).
class AnalyticField : public Field {
public:
    explicit AnalyticField(std::shared_ptr<const ErasedMap> f) : f_(std::move(f)) {}
    int dim() const override { return f_->out; }
    void eval(double t, std::span<const double> u, std::span<double> du) const override {
        f_->f0(t, u, du);
    }
    int eval_taped(Tape& tape, double t, int u) const override {
        return tape.analytic(f_.get(), t, u);
    }

private:
    std::shared_ptr<const ErasedMap> f_;
};

enum class FieldKind { ground_truth, neural, second_order, hybrid };

/// Assembly recipe for a model field. The net's flat vector is owned by
/// the caller (the trainer) and referenced here, so in-place parameter
/// updates are visible without reassembly.
struct FieldSpec {
    FieldKind kind = FieldKind::neural;
    int state_dim = 0;
    std::shared_ptr<const ErasedMap> known;  ///< ground truth, or the hybrid's known component
    const MlpParams* net = nullptr;
    AuxFn aux;  ///< optional control input, e.g. p-dot or the switch state
    int aux_dim = 0;
    bool time_lifted = false;  ///< last coordinate is tau with tau-dot = 1
};

namespace detail {

/// du = net(u_state, aux(t)); with the time lift, u_state drops the
/// trailing tau coordinate and the output gains a constant 1.
class NeuralField : public Field {
public:
    explicit NeuralField(FieldSpec spec) : s_(std::move(spec)) {
        const int in = s_.state_dim - (s_.time_lifted ? 1 : 0) + s_.aux_dim;
        const int out = s_.state_dim - (s_.time_lifted ? 1 : 0);
        if (!s_.net) throw std::invalid_argument("neural field needs a net");
        if (s_.net->input_dim() != in || s_.net->output_dim() != out)
            throw std::invalid_argument("neural field: net width mismatch");
    }
    int dim() const override { return s_.state_dim; }
    void eval(double t, std::span<const double> u, std::span<double> du) const override {
        const int k = s_.state_dim - (s_.time_lifted ? 1 : 0);
        std::vector<double> in(u.begin(), u.begin() + k);
        append_aux(in, t);
        auto out = mlp_forward(*s_.net, in);
        for (int i = 0; i < k; ++i) du[i] = out[i];
        if (s_.time_lifted) du[s_.state_dim - 1] = 1.0;
    }
    int eval_taped(Tape& tape, double t, int u) const override {
        const int k = s_.state_dim - (s_.time_lifted ? 1 : 0);
        int x = s_.time_lifted ? tape.slice(u, 0, k) : u;
        if (s_.aux_dim > 0) {
            auto a = s_.aux(t);
            x = tape.concat({x, tape.constant(a)});
        }
        int out = mlp_taped(tape, *s_.net, x);
        if (s_.time_lifted) {
            const double one = 1.0;
            out = tape.concat({out, tape.constant(std::span<const double>(&one, 1))});
        }
        return out;
    }

private:
    void append_aux(std::vector<double>& in, double t) const {
        if (s_.aux_dim > 0) {
            auto a = s_.aux(t);
            in.insert(in.end(), a.begin(), a.end());
        }
    }
    FieldSpec s_;
    friend class SecondOrderField;
};

/// (q, v) -> (v, net(q, v, aux(t)))
class SecondOrderField : public Field {
public:
    explicit SecondOrderField(FieldSpec spec) : s_(std::move(spec)) {
        if (s_.state_dim % 2 != 0)
            throw std::invalid_argument("second-order field needs even state dimension");
        if (!s_.net || s_.net->input_dim() != s_.state_dim + s_.aux_dim ||
            s_.net->output_dim() != s_.state_dim / 2)
            throw std::invalid_argument("second-order field: net width mismatch");
    }
    int dim() const override { return s_.state_dim; }
    void eval(double t, std::span<const double> u, std::span<double> du) const override {
        const int k = s_.state_dim / 2;
        std::vector<double> in(u.begin(), u.end());
        if (s_.aux_dim > 0) {
            auto a = s_.aux(t);
            in.insert(in.end(), a.begin(), a.end());
        }
        auto acc = mlp_forward(*s_.net, in);
        for (int i = 0; i < k; ++i) {
            du[i] = u[k + i];
            du[k + i] = acc[i];
        }
    }
    int eval_taped(Tape& tape, double t, int u) const override {
        const int k = s_.state_dim / 2;
        int x = u;
        if (s_.aux_dim > 0) x = tape.concat({u, tape.constant(s_.aux(t))});
        int acc = mlp_taped(tape, *s_.net, x);
        return tape.concat({tape.slice(u, k, k), acc});
    }

private:
    FieldSpec s_;
};

/// Double-pendulum hybrid: (w1, w2, known_acc1(u), net(u)).
class HybridField : public Field {
public:
    explicit HybridField(FieldSpec spec) : s_(std::move(spec)) {
        if (!s_.known || !s_.net) throw std::invalid_argument("hybrid field needs both parts");
        if (s_.state_dim != 4 || s_.known->in != 4 || s_.known->out != 1 ||
            s_.net->input_dim() != 4 || s_.net->output_dim() != 1)
            throw std::invalid_argument("hybrid field: width mismatch");
    }
    int dim() const override { return 4; }
    void eval(double t, std::span<const double> u, std::span<double> du) const override {
        double a1;
        s_.known->f0(t, u, std::span<double>(&a1, 1));
        auto a2 = mlp_forward(*s_.net, u);
        du[0] = u[2];
        du[1] = u[3];
        du[2] = a1;
        du[3] = a2[0];
    }
    int eval_taped(Tape& tape, double t, int u) const override {
        int a1 = tape.analytic(s_.known.get(), t, u);
        int a2 = mlp_taped(tape, *s_.net, u);
        return tape.concat({tape.slice(u, 2, 2), a1, a2});
    }

private:
    FieldSpec s_;
};

}  // namespace detail

inline std::shared_ptr<Field> assemble_field(const FieldSpec& spec) {
    switch (spec.kind) {
        case FieldKind::ground_truth:
            if (!spec.known) throw std::invalid_argument("ground-truth spec needs a field");
            return std::make_shared<AnalyticField>(spec.known);
        case FieldKind::neural:
            return std::make_shared<detail::NeuralField>(spec);
        case FieldKind::second_order:
            return std::make_shared<detail::SecondOrderField>(spec);
        case FieldKind::hybrid:
            return std::make_shared<detail::HybridField>(spec);
    }
    throw std::logic_error("unreachable");
}

/// base field minus gamma * G^+(u) g(u). gamma == 0 is the base field,
/// bit for bit; the term is then never evaluated.
class StabilizedFieldView : public Field {
public:
    StabilizedFieldView(std::shared_ptr<const Field> base, ConstraintManifold mf, double gamma)
        : base_(std::move(base)), mf_(std::make_shared<ConstraintManifold>(std::move(mf))), gamma_(gamma) {
        if (gamma_ < 0.0) throw std::invalid_argument("gamma must be nonnegative");
        auto mf_ptr = mf_;
        term_ = std::make_shared<ErasedMap>();
        term_->in = mf_->n;
        term_->out = mf_->n;
        term_->f0 = [mf_ptr](double, std::span<const double> u, std::span<double> y) {
            stabilization_term_t<double>(*mf_ptr, u, y);
        };
        term_->f1 = [mf_ptr](double, std::span<const Dual1> u, std::span<Dual1> y) {
            stabilization_term_t<Dual1>(*mf_ptr, u, y);
        };
    }
    int dim() const override { return base_->dim(); }
    double gamma() const { return gamma_; }
    const ConstraintManifold& manifold() const { return *mf_; }

    void eval(double t, std::span<const double> u, std::span<double> du) const override {
        base_->eval(t, u, du);
        if (gamma_ == 0.0) return;
        std::vector<double> term(mf_->n);
        stabilization_term_t<double>(*mf_, u, term);
        for (int k = 0; k < mf_->n; ++k) du[k] -= gamma_ * term[k];
    }
    int eval_taped(Tape& tape, double t, int u) const override {
        int b = base_->eval_taped(tape, t, u);
        if (gamma_ == 0.0) return b;
        int tm = tape.analytic(term_.get(), t, u);
        return tape.lincomb({{1.0, b}, {-gamma_, tm}});
    }

private:
    std::shared_ptr<const Field> base_;
    std::shared_ptr<ConstraintManifold> mf_;
    double gamma_;
    std::shared_ptr<ErasedMap> term_;
};

}  // namespace snde
