#include "mkid/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace mkid {

namespace {

// floor_ scales with the probe-loss magnitude: the roundoff noise of a
// central difference is ~eps*loss/step, so coordinates whose true gradient
// is exactly zero would otherwise read as pure noise.
double rel_err(double a, double b, double floor_) {
    const double denom = std::max({std::fabs(a), std::fabs(b), floor_});
    return std::fabs(a - b) / denom;
}

double half_sq(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return 0.5 * s;
}

}  // namespace

GradCheckReport grad_check(Block& block, const Tensor4& input, double step) {
    Tensor4 out = block.forward(input);
    if (!out.all_finite())
        throw std::runtime_error("grad_check: non-finite forward output in block " + block.name());

    std::vector<double> gp(block.params().size(), 0.0);
    Tensor4 gx = block.backward(input, out, gp);  // upstream = out for the probe loss

    GradCheckReport rep;
    auto loss = [&](const Tensor4& x) { return half_sq(block.forward(x).raw()); };
    const double floor_ = 1e-5 * std::max(1.0, loss(input));

    std::vector<double>& p = block.params();
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double keep = p[i];
        p[i] = keep + step;
        const double lp = loss(input);
        p[i] = keep - step;
        const double lm = loss(input);
        p[i] = keep;
        rep.max_rel_err_params = std::max(rep.max_rel_err_params,
                                          rel_err(gp[i], (lp - lm) / (2.0 * step), floor_));
    }

    Tensor4 xin = input;
    for (std::size_t i = 0; i < xin.raw().size(); ++i) {
        const double keep = xin.raw()[i];
        xin.raw()[i] = keep + step;
        const double lp = loss(xin);
        xin.raw()[i] = keep - step;
        const double lm = loss(xin);
        xin.raw()[i] = keep;
        rep.max_rel_err_input = std::max(rep.max_rel_err_input,
                                         rel_err(gx.raw()[i], (lp - lm) / (2.0 * step), floor_));
    }
    return rep;
}

GradCheckReport grad_check(CBlock& block, const CTensor& input, double step) {
    CTensor out = block.forward(input);
    for (double v : out.re_raw())
        if (!std::isfinite(v))
            throw std::runtime_error("grad_check: non-finite forward output in block " + block.name());
    for (double v : out.im_raw())
        if (!std::isfinite(v))
            throw std::runtime_error("grad_check: non-finite forward output in block " + block.name());

    std::vector<double> gp(block.params().size(), 0.0);
    CTensor gx = block.backward(input, out, gp);

    GradCheckReport rep;
    auto loss = [&](const CTensor& x) {
        CTensor y = block.forward(x);
        return half_sq(y.re_raw()) + half_sq(y.im_raw());
    };
    const double floor_ = 1e-5 * std::max(1.0, loss(input));

    std::vector<double>& p = block.params();
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double keep = p[i];
        p[i] = keep + step;
        const double lp = loss(input);
        p[i] = keep - step;
        const double lm = loss(input);
        p[i] = keep;
        rep.max_rel_err_params = std::max(rep.max_rel_err_params,
                                          rel_err(gp[i], (lp - lm) / (2.0 * step), floor_));
    }

    CTensor xin = input;
    auto probe_plane = [&](std::vector<double>& plane, const std::vector<double>& gplane) {
        for (std::size_t i = 0; i < plane.size(); ++i) {
            const double keep = plane[i];
            plane[i] = keep + step;
            const double lp = loss(xin);
            plane[i] = keep - step;
            const double lm = loss(xin);
            plane[i] = keep;
            rep.max_rel_err_input = std::max(rep.max_rel_err_input,
                                             rel_err(gplane[i], (lp - lm) / (2.0 * step), floor_));
        }
    };
    probe_plane(xin.re_raw(), gx.re_raw());
    probe_plane(xin.im_raw(), gx.im_raw());
    return rep;
}

}  // namespace mkid
