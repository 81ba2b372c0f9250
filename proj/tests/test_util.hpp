#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "chainhoi/tensor.hpp"

namespace chainhoi::testing {

// Central finite differences against the analytic gradient of a scalar loss.
// `loss` must rebuild the graph from current tensor values on every call.
// Returns the max relative error over the checked coordinates.
struct GradCheckResult {
    double max_rel_err = 0.0;
    int checked = 0;
};

inline double rel_err(double analytic, double numeric) {
    double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
    return std::abs(analytic - numeric) / denom;
}

// indices: coordinates of `t` to probe; empty = all.
inline GradCheckResult finite_diff_check(Tensor& t, const std::function<double()>& loss_value,
                                         const std::vector<double>& analytic_grad,
                                         std::vector<int64_t> indices = {}, double eps = 1e-5) {
    GradCheckResult r;
    if (indices.empty()) {
        indices.resize(static_cast<size_t>(t.numel()));
        for (int64_t i = 0; i < t.numel(); ++i) indices[static_cast<size_t>(i)] = i;
    }
    for (int64_t idx : indices) {
        double saved = t.data()[idx];
        t.data()[idx] = saved + eps;
        double up = loss_value();
        t.data()[idx] = saved - eps;
        double down = loss_value();
        t.data()[idx] = saved;
        double numeric = (up - down) / (2.0 * eps);
        r.max_rel_err = std::max(r.max_rel_err, rel_err(analytic_grad[static_cast<size_t>(idx)], numeric));
        ++r.checked;
    }
    return r;
}

}  // namespace chainhoi::testing
