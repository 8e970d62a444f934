#pragma once

#include <string>
#include <vector>

namespace mkid {

enum class BasisKind { Power, OddFourier };

struct BasisFit {
    BasisKind basis = BasisKind::Power;
    std::size_t order = 0;        // P
    double period = 2.0;          // T_x, odd Fourier only
    std::vector<double> coeffs;   // a_1 .. a_P
    double residual = 0.0;        // sum of squared fit errors

    double eval(double x) const;
    std::string to_json() const;
};

// Discrete least squares on (x_i, f(x_i)) pairs; ridge 1e-10 keeps the
// solve stable for near-collinear designs.
BasisFit fit_basis_ls(const std::vector<double>& x, const std::vector<double>& fx,
                      BasisKind basis, std::size_t order, double period = 2.0);

// Per-plant linear-in-parameters baseline: FIR filters on powers of the
// input, solved independently per plant.
struct MemoryPolynomial {
    std::size_t order = 0;  // P
    std::size_t taps = 0;   // L
    std::vector<double> scale;                 // per-plant input scaling to (-1,1)
    std::vector<std::vector<double>> coeffs;   // per plant, c[(p-1)*L + l]
};

MemoryPolynomial fit_memory_polynomial(const std::vector<std::vector<double>>& x,
                                       const std::vector<std::vector<double>>& y,
                                       std::size_t order, std::size_t taps);
std::vector<double> predict_memory_polynomial(const MemoryPolynomial& mp, std::size_t plant,
                                              const std::vector<double>& x);

// Complex baseband variant with |x|^(p-1) * x basis terms.
struct ComplexMemoryPolynomial {
    std::size_t order = 0;
    std::size_t taps = 0;
    std::vector<double> scale;
    std::vector<std::vector<double>> coeffs_re, coeffs_im;
};

ComplexMemoryPolynomial fit_memory_polynomial_complex(
    const std::vector<std::vector<double>>& xre, const std::vector<std::vector<double>>& xim,
    const std::vector<std::vector<double>>& yre, const std::vector<std::vector<double>>& yim,
    std::size_t order, std::size_t taps);
void predict_memory_polynomial_complex(const ComplexMemoryPolynomial& mp, std::size_t plant,
                                       const std::vector<double>& xre,
                                       const std::vector<double>& xim,
                                       std::vector<double>& yre, std::vector<double>& yim);

}  // namespace mkid
