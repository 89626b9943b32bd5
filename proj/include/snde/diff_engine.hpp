#pragma once

// Gradient entry points: reverse-mode gradients of scalar losses built
// on a tape, and a central-finite-difference cross-check.

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "snde/jacobian.hpp"
#include "snde/tape.hpp"

namespace snde {

/// A loss defined by the ops it records on the tape; must return
/// tape.loss() (or an equivalent scalar accumulated via squared-error
/// terms).
using TapedLossFn = std::function<double(Tape&, const std::vector<double>& params)>;

inline std::vector<double> loss_gradient(const TapedLossFn& loss,
                                         const std::vector<double>& params) {
    Tape tape(&params);
    double value = loss(tape, params);
    if (!std::isfinite(value)) throw std::runtime_error("loss_gradient: non-finite loss");
    tape.backward();
    auto grad = tape.param_grad();
    for (std::size_t i = 0; i < grad.size(); ++i)
        if (!std::isfinite(grad[i]))
            throw std::runtime_error("loss_gradient: non-finite gradient component " +
                                     std::to_string(i));
    return grad;
}

/// Maximum relative deviation between the reverse-mode gradient and a
/// central finite difference with step h. Components whose magnitude is
/// below 1e-8 are compared absolutely.
inline double fd_check(const TapedLossFn& loss, const std::vector<double>& params, double h) {
    if (!(h > 0)) throw std::invalid_argument("fd_check: h must be positive");
    auto grad = loss_gradient(loss, params);
    auto value_at = [&](const std::vector<double>& p) {
        Tape tape(&p);
        return loss(tape, p);
    };
    double worst = 0.0;
    std::vector<double> p = params;
    for (std::size_t i = 0; i < params.size(); ++i) {
        p[i] = params[i] + h;
        double fp = value_at(p);
        p[i] = params[i] - h;
        double fm = value_at(p);
        p[i] = params[i];
        double fd = (fp - fm) / (2.0 * h);
        double scale = std::max(std::abs(fd), std::abs(grad[i]));
        double dev = std::abs(fd - grad[i]);
        if (scale > 1e-8) dev /= scale;
        worst = std::max(worst, dev);
    }
    return worst;
}

}  // namespace snde
