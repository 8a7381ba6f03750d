#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "harmonize/tensor.hpp"

namespace harmonize {

struct GradCheckReport {
    double max_abs_err = 0.0;    // worst |analytic - numeric|
    double max_rel_err = 0.0;    // worst error scaled by max(1, |a|, |n|)
    std::string worst_param;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;

    bool within(double tol) const { return max_rel_err <= tol; }
};

// Compares reverse-mode gradients against central differences,
// (f(x+e) - f(x-e)) / 2e, element by element. The loss closure must be a
// deterministic pure function of the listed parameters.
inline GradCheckReport check_gradients(const std::function<Tensor<double>()>& loss,
                                       std::vector<std::pair<std::string, Tensor<double>>> params,
                                       double eps = 1e-4) {
    for (auto& [name, p] : params) {
        p.set_requires_grad(true);
        p.zero_grad();
    }
    Tensor<double> l = loss();
    l.backward();

    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (auto& [name, p] : params) analytic.push_back(p.grad());

    GradCheckReport report;
    NoGradGuard no_grad;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& p = params[pi].second;
        for (std::size_t i = 0; i < p.numel(); ++i) {
            const double saved = p[i];
            p[i] = saved + eps;
            const double lp = loss()[0];
            p[i] = saved - eps;
            const double lm = loss()[0];
            p[i] = saved;
            const double numeric = (lp - lm) / (2.0 * eps);
            const double a = analytic[pi][i];
            const double abs_err = std::abs(a - numeric);
            const double rel_err = abs_err / std::max({1.0, std::abs(a), std::abs(numeric)});
            report.max_abs_err = std::max(report.max_abs_err, abs_err);
            if (rel_err > report.max_rel_err) {
                report.max_rel_err = rel_err;
                report.worst_param = params[pi].first;
                report.worst_index = i;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    return report;
}

}  // namespace harmonize
