#pragma once

#include <string>
#include <vector>

#include "chainhoi/tensor.hpp"

namespace chainhoi {

struct GradCheckRow {
    std::string op;
    int cases = 0;
    int coords = 0;
    double max_rel_err = 0.0;
    double seconds = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckRow> rows;
    double tolerance = 1e-4;

    bool passed() const;
    std::string table() const;
};

// Central finite differences (eps = 1e-5) against analytic gradients for every
// differentiable operation: linear, attention, layer norm, graph conv,
// temporal conv, a full one-block model, and the contact loss.
GradCheckReport run_gradcheck_suite(uint64_t seed, int cases_per_op = 20);

}  // namespace chainhoi
