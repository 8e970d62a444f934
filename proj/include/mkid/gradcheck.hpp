#pragma once

#include "mkid/blocks.hpp"

namespace mkid {

struct GradCheckReport {
    double max_rel_err_params = 0.0;
    double max_rel_err_input = 0.0;

    bool ok(double tol) const {
        return max_rel_err_params < tol && max_rel_err_input < tol;
    }
};

// Central finite differences against the analytic backward pass of a
// block, using the probe loss 0.5 * ||forward(x)||^2. Relative error
// denominator is max(|analytic|, |numeric|, floor) where the floor scales
// with the probe loss so that exactly-zero gradients are not compared
// against pure finite-difference roundoff.
GradCheckReport grad_check(Block& block, const Tensor4& input, double step = 1e-6);
GradCheckReport grad_check(CBlock& block, const CTensor& input, double step = 1e-6);

}  // namespace mkid
