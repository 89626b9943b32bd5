#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "snde/diff_engine.hpp"
#include "snde/field.hpp"
#include "snde/mlp.hpp"
#include "snde/systems.hpp"
#include "snde/taped_integrate.hpp"

using namespace snde;

TEST_CASE("tape affine and relu forward values") {
    // one layer y = W x + b with W = [[1,2],[3,4]], b = (0.5, -0.5)
    std::vector<double> params{1.0, 2.0, 3.0, 4.0, 0.5, -0.5};
    Tape tape(&params);
    std::vector<double> xv{1.0, -1.0};
    int x = tape.constant(xv);
    int y = tape.affine(x, 0, 4, 2, 2);
    auto yv = tape.value(y);
    CHECK(yv[0] == doctest::Approx(-0.5));
    CHECK(yv[1] == doctest::Approx(-1.5));
    int r = tape.relu(y);
    CHECK(tape.value(r)[0] == 0.0);
    CHECK(tape.value(r)[1] == 0.0);
}

TEST_CASE("gradient of a quadratic in the parameters") {
    // params = (w, b) of a 1->2 layer fed with x=1: loss = ||W + b||^2
    MlpParams p;
    p.shapes = {{1, 2}};
    p.flat = {0.3, -0.7, 0.1, 0.4};
    TapedLossFn loss = [&](Tape& tape, const std::vector<double>&) {
        double one = 1.0;
        int x = tape.constant(std::span<const double>(&one, 1));
        int y = mlp_taped(tape, p, x);
        tape.add_squared_error(y, std::vector<double>{0.0, 0.0});
        return tape.loss();
    };
    auto grad = loss_gradient(loss, p.flat);
    // y = (w1 + b1, w2 + b2); d loss / d w_i = 2 y_i
    CHECK(grad[0] == doctest::Approx(2.0 * 0.4).epsilon(1e-14));
    CHECK(grad[1] == doctest::Approx(2.0 * -0.3).epsilon(1e-14));
    CHECK(grad[2] == doctest::Approx(2.0 * 0.4).epsilon(1e-14));
    CHECK(grad[3] == doctest::Approx(2.0 * -0.3).epsilon(1e-14));
    CHECK(fd_check(loss, p.flat, 1e-6) < 1e-8);
}

TEST_CASE("finite differences confirm the MLP gradient") {
    auto p = mlp_init({{3, 8}, {8, 3}}, 42);
    std::vector<double> x{0.3, -0.2, 0.9}, target{0.1, 0.0, -0.4};
    TapedLossFn loss = [&](Tape& tape, const std::vector<double>&) {
        int xi = tape.constant(x);
        int y = mlp_taped(tape, p, xi);
        tape.add_squared_error(y, target);
        return tape.loss();
    };
    CHECK(fd_check(loss, p.flat, 1e-5) < 1e-6);
}

TEST_CASE("forward and reverse mode agree on a scalar map") {
    auto f = [](std::span<const Dual1> x, std::span<Dual1> y) {
        y[0] = x[0] * x[0] * x[1] + sin(x[1]);
    };
    std::vector<double> u{1.3, -0.6};
    auto J = jacobian(f, u, 1);

    ErasedMap em;
    em.in = 2;
    em.out = 1;
    em.f0 = [](double, std::span<const double> x, std::span<double> y) {
        y[0] = x[0] * x[0] * x[1] + std::sin(x[1]);
    };
    em.f1 = [f](double, std::span<const Dual1> x, std::span<Dual1> y) { f(x, y); };

    std::vector<double> params;  // none
    Tape tape(&params);
    int x = tape.constant(u);
    int y = tape.analytic(&em, 0.0, x);
    tape.add_squared_error(y, std::vector<double>{0.0});
    tape.backward();
    double yval = tape.value(y)[0];
    CHECK(std::abs(yval - (u[0] * u[0] * u[1] + std::sin(u[1]))) < 1e-15);
    // loss = y^2, so the reverse-mode input adjoint must be 2 y J
    auto xbar = tape.adjoint_of(x);
    for (int j = 0; j < 2; ++j)
        CHECK(xbar[j] == doctest::Approx(2.0 * yval * J[j]).epsilon(1e-12));
}

TEST_CASE("tape rollback discards rejected work") {
    std::vector<double> params{2.0};
    Tape tape(&params);
    int x = tape.constant(std::vector<double>{1.0});
    auto m = tape.mark();
    int y = tape.lincomb({{3.0, x}});
    tape.add_squared_error(y, std::vector<double>{0.0});
    CHECK(tape.loss() == doctest::Approx(9.0));
    tape.rollback(m);
    CHECK(tape.loss() == 0.0);
    tape.add_squared_error(x, std::vector<double>{0.0});
    tape.backward();
    CHECK(tape.loss() == doctest::Approx(1.0));
}

TEST_CASE("taped integration reproduces the plain integrator bitwise") {
    auto sys = rigid_body();
    auto p = mlp_init({{3, 8}, {8, 3}}, 7);
    FieldSpec spec;
    spec.kind = FieldKind::neural;
    spec.state_dim = 3;
    spec.net = &p;
    auto field = assemble_field(spec);

    StepController ctrl;
    std::vector<double> u0{0.8, 0.1, -0.5};
    std::vector<double> ts{0.0, 0.4, 0.8, 1.2};

    auto plain = integrate(field->rhs(), u0, 0.0, ts, ctrl);
    REQUIRE(plain.status == SolveStatus::ok);

    Tape tape(&p.flat);
    int u0v = tape.constant(u0);
    auto taped = integrate_taped(tape, *field, u0v, 0.0, ts, ctrl);
    REQUIRE(taped.status == SolveStatus::ok);
    REQUIRE(taped.state_vars.size() == ts.size());
    for (std::size_t i = 0; i < ts.size(); ++i) {
        auto a = plain.trajectory.state(i);
        auto b = tape.value(taped.state_vars[i]);
        for (int k = 0; k < 3; ++k) CHECK(a[k] == b[k]);
    }
    CHECK(plain.stats.accepted == taped.stats.accepted);
    CHECK(plain.stats.rejected == taped.stats.rejected);
}

TEST_CASE("gradient through adaptive solver steps of a stabilized model") {
    auto sys = rigid_body();
    auto p = mlp_init({{3, 8}, {8, 3}}, 3);
    FieldSpec spec;
    spec.kind = FieldKind::neural;
    spec.state_dim = 3;
    spec.net = &p;
    auto base = assemble_field(spec);
    std::vector<double> u0{std::cos(0.9), 0.0, std::sin(0.9)};
    auto view = std::make_shared<StabilizedFieldView>(base, sys.manifold_at(u0), 4.0);

    StepController ctrl;
    std::vector<double> ts{0.0, 0.5, 1.0};
    std::vector<double> target{0.5, 0.3, -0.2};

    // freeze the accepted step grid of the adaptive run, then
    // differentiate the replayed program (step sizes are constants)
    auto fwd = integrate(view->rhs(), u0, 0.0, ts, ctrl);
    REQUIRE(fwd.status == SolveStatus::ok);
    REQUIRE(fwd.stats.accepted >= 5);
    TapedLossFn loss = [&](Tape& tape, const std::vector<double>&) {
        int u0v = tape.constant(u0);
        auto res = integrate_taped_replay(tape, *view, u0v, 0.0, fwd.step_times, fwd.step_sizes, ts);
        REQUIRE(res.status == SolveStatus::ok);
        for (std::size_t i = 1; i < res.state_vars.size(); ++i)
            tape.add_squared_error(res.state_vars[i], target);
        return tape.loss();
    };
    // the replay at the unperturbed parameters reproduces the adaptive states
    {
        Tape tape(&p.flat);
        int u0v = tape.constant(u0);
        auto res = integrate_taped_replay(tape, *view, u0v, 0.0, fwd.step_times, fwd.step_sizes, ts);
        REQUIRE(res.state_vars.size() == ts.size());
        for (std::size_t i = 0; i < ts.size(); ++i) {
            auto a = fwd.trajectory.state(i);
            auto b = tape.value(res.state_vars[i]);
            for (int k = 0; k < 3; ++k) CHECK(a[k] == b[k]);
        }
    }
    CHECK(fd_check(loss, p.flat, 1e-6) < 1e-4);
}

TEST_CASE("gradient evaluation is bitwise deterministic") {
    auto p = mlp_init({{2, 6}, {6, 2}}, 11);
    std::vector<double> x{0.4, -1.1}, target{1.0, 1.0};
    TapedLossFn loss = [&](Tape& tape, const std::vector<double>&) {
        int xi = tape.constant(x);
        int y = mlp_taped(tape, p, xi);
        tape.add_squared_error(y, target);
        return tape.loss();
    };
    auto g1 = loss_gradient(loss, p.flat);
    auto g2 = loss_gradient(loss, p.flat);
    CHECK(g1 == g2);
}

TEST_CASE("loss_gradient rejects non-finite losses") {
    std::vector<double> params{1.0};
    TapedLossFn bad = [](Tape&, const std::vector<double>&) {
        return std::numeric_limits<double>::quiet_NaN();
    };
    CHECK_THROWS_AS(loss_gradient(bad, params), std::runtime_error);
}
