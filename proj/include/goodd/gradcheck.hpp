#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "goodd/autodiff.hpp"
#include "goodd/error.hpp"

namespace goodd::ad {

struct GradCheckOptions {
    double step = 1e-5;
    double tolerance = 1e-4;
    /// Set on the tape of the analytic pass only; see Tape::inject_backward_fault.
    std::string inject_fault;
};

struct ExcludedCoordinate {
    std::size_t input = 0;
    std::size_t index = 0;
};

struct GradCheckReport {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    std::vector<ExcludedCoordinate> excluded;    // kinks: one-sided slopes disagree
    std::vector<ExcludedCoordinate> noise_limited;  // |g_ad - g_fd| within rounding noise of the quotient
    ExcludedCoordinate worst;                    // coordinate attaining max_relative_error
    double worst_analytic = 0.0, worst_numeric = 0.0;
    bool passed = true;
};

/// Builds a scalar on the tape from leaves holding the inputs.
using TapeFunction = std::function<Var(Tape&, const std::vector<Var>&)>;

namespace detail {

inline double evaluate(const TapeFunction& f, const std::vector<Matrix>& inputs) {
    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(inputs.size());
    for (const auto& m : inputs) leaves.push_back(tape.leaf(m, false));
    const Var out = f(tape, leaves);
    const Matrix& v = tape.value(out);
    if (v.rows() != 1 || v.cols() != 1) throw ArgumentError("grad_check needs a scalar function, got " + v.shape());
    return v(0, 0);
}

}  // namespace detail

/// Compares reverse-mode gradients with central differences for every input
/// coordinate. Relative error is |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|).
///
/// Two kinds of coordinates are reported but not scored:
///  - kinks, where the one-sided slopes differ by more than
///    1e-2 * max(|fwd|, |bwd|, 1e-3);
///  - noise-limited ones, where the relative error exceeds the tolerance but
///    |g_ad - g_fd| <= 8 * eps * max(1, |f|) / h, the rounding noise of the
///    central quotient. These are tiny gradients (|g| well under 1e-6) that
///    agree to every digit finite differences can resolve.
inline GradCheckReport grad_check(const TapeFunction& f, std::vector<Matrix> inputs, const GradCheckOptions& opt = {}) {
    std::vector<Matrix> analytic;
    {
        Tape tape;
        if (!opt.inject_fault.empty()) tape.inject_backward_fault(opt.inject_fault);
        std::vector<Var> leaves;
        for (const auto& m : inputs) leaves.push_back(tape.leaf(m, true));
        const Var out = f(tape, leaves);
        if (!std::isfinite(tape.value(out)(0, 0))) throw NumericalError("grad_check: non-finite value at x0");
        tape.backward(out);
        for (const auto& l : leaves) analytic.push_back(tape.grad(l));
    }

    const double f0 = detail::evaluate(f, inputs);
    GradCheckReport report;
    const double h = opt.step;
    for (std::size_t in = 0; in < inputs.size(); ++in) {
        for (std::size_t k = 0; k < inputs[in].size(); ++k) {
            double& x = inputs[in].data()[k];
            const double saved = x;
            x = saved + h;
            const double fp = detail::evaluate(f, inputs);
            x = saved - h;
            const double fm = detail::evaluate(f, inputs);
            x = saved;
            if (!std::isfinite(fp) || !std::isfinite(fm)) {
                throw NumericalError("grad_check: non-finite value near x0 (input " + std::to_string(in) +
                                     ", coordinate " + std::to_string(k) + ")");
            }
            const double forward = (fp - f0) / h;
            const double backward = (f0 - fm) / h;
            if (std::abs(forward - backward) > 1e-2 * std::max({1e-3, std::abs(forward), std::abs(backward)})) {
                report.excluded.push_back({in, k});
                continue;
            }
            const double fd = (fp - fm) / (2.0 * h);
            const double ad = analytic[in].data()[k];
            const double rel = std::abs(ad - fd) / std::max(1e-8, std::abs(ad) + std::abs(fd));
            const double noise = 8.0 * std::numeric_limits<double>::epsilon() *
                                 std::max({1.0, std::abs(f0), std::abs(fp), std::abs(fm)}) / h;
            if (rel > opt.tolerance && std::abs(ad - fd) <= noise) {
                report.noise_limited.push_back({in, k});
                continue;
            }
            if (rel > report.max_relative_error) {
                report.max_relative_error = rel;
                report.worst = {in, k};
                report.worst_analytic = ad;
                report.worst_numeric = fd;
            }
            ++report.checked;
        }
    }
    report.passed = report.max_relative_error <= opt.tolerance;
    return report;
}

/// Single-input form.
inline GradCheckReport grad_check(const std::function<Var(Tape&, Var)>& f, const Matrix& x0,
                                  const GradCheckOptions& opt = {}) {
    return grad_check([&f](Tape& t, const std::vector<Var>& v) { return f(t, v.front()); },
                      std::vector<Matrix>{x0}, opt);
}

}  // namespace goodd::ad
