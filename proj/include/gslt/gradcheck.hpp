#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "gslt/tensor.hpp"

namespace gslt {

// Central finite differences against the analytic gradients of `params`.
// `forward` must rebuild the graph and return the scalar loss value; it is
// called twice per checked entry with one parameter component nudged by h.
// Relative error uses denominator max(1, |analytic|, |numeric|), so tiny
// gradients are compared absolutely.
struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    long entries_checked = 0;
};

inline double gradcheck_rel_err(double analytic, double numeric) {
    const double denom = std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
    return std::fabs(analytic - numeric) / denom;
}

inline GradCheckReport finite_difference_check(
    const std::vector<std::pair<std::string, Tensor>>& params,
    const std::function<double()>& forward,
    const std::function<void()>& run_backward,
    double step = 1e-5) {
    for (auto& [name, p] : params) {
        Tensor t = p;
        t.zero_grad();
    }
    run_backward();

    GradCheckReport report;
    for (const auto& [name, p] : params) {
        Tensor t = p;
        const std::vector<double> analytic = t.grad();
        for (std::size_t i = 0; i < analytic.size(); ++i) {
            const double original = t.values()[i];
            t.set_value_at(i, original + step);
            const double up = forward();
            t.set_value_at(i, original - step);
            const double down = forward();
            t.set_value_at(i, original);
            const double numeric = (up - down) / (2.0 * step);
            const double err = gradcheck_rel_err(analytic[i], numeric);
            ++report.entries_checked;
            if (err > report.max_rel_err) {
                report.max_rel_err = err;
                report.worst_param = name;
                report.worst_index = i;
            }
        }
    }
    return report;
}

}  // namespace gslt
