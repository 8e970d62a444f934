#include "mkid/baselines.hpp"

#include <cmath>
#include <complex>
#include <stdexcept>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace mkid {

double BasisFit::eval(double x) const {
    double s = 0.0;
    if (basis == BasisKind::Power) {
        double xp = 1.0;
        for (std::size_t p = 0; p < order; ++p) {
            xp *= x;
            s += coeffs[p] * xp;
        }
    } else {
        for (std::size_t p = 0; p < order; ++p)
            s += coeffs[p] * std::sin(2.0 * M_PI * static_cast<double>(p + 1) * x / period);
    }
    return s;
}

std::string BasisFit::to_json() const {
    nlohmann::json j;
    j["basis"] = basis == BasisKind::Power ? "power" : "odd_fourier";
    j["order"] = order;
    if (basis == BasisKind::OddFourier) j["period"] = period;
    j["coeffs"] = coeffs;
    j["residual"] = residual;
    return j.dump();
}

BasisFit fit_basis_ls(const std::vector<double>& x, const std::vector<double>& fx,
                      BasisKind basis, std::size_t order, double period) {
    if (order < 1) throw std::invalid_argument("fit_basis_ls: order must be >= 1");
    if (x.size() != fx.size() || x.size() < order)
        throw std::invalid_argument("fit_basis_ls: need at least P samples");
    const std::size_t N = x.size(), P = order;

    Eigen::MatrixXd A(N + P, P);
    Eigen::VectorXd b(N + P);
    const double ridge = 1e-7;  // tiny: guards singular designs without visible coefficient bias
    for (std::size_t n = 0; n < N; ++n) {
        double xp = 1.0;
        for (std::size_t p = 0; p < P; ++p) {
            if (basis == BasisKind::Power) {
                xp *= x[n];
                A(n, p) = xp;
            } else {
                A(n, p) = std::sin(2.0 * M_PI * static_cast<double>(p + 1) * x[n] / period);
            }
        }
        b(n) = fx[n];
    }
    A.bottomRows(P).setZero();
    b.tail(P).setZero();
    for (std::size_t p = 0; p < P; ++p) A(N + p, p) = ridge;

    Eigen::VectorXd a = A.householderQr().solve(b);
    if (!a.allFinite()) throw std::runtime_error("fit_basis_ls: ill-conditioned design");

    BasisFit fit;
    fit.basis = basis;
    fit.order = P;
    fit.period = period;
    fit.coeffs.assign(a.data(), a.data() + P);
    const Eigen::VectorXd r = A.topRows(N) * a - b.head(N);
    fit.residual = r.squaredNorm();
    return fit;
}

namespace {

// Gram entry sum_{n=max(l,j)}^{N-1} xp[n-l]*xq[n-j] for every lag pair,
// built from one running correlation per (p,q,d) instead of an
// O(N (PL)^2) accumulation.
void fill_gram_real(const std::vector<std::vector<double>>& pw, std::size_t L,
                    Eigen::MatrixXd& G) {
    const std::size_t P = pw.size();
    const std::size_t N = pw[0].size();
    for (std::size_t p = 0; p < P; ++p)
        for (std::size_t q = 0; q <= p; ++q)
            for (std::size_t d = 0; d < L; ++d) {
                // A(l) = sum_{m=0}^{N-1-l} pw[p][m] * pw[q][m+d], l >= d
                double acc = 0.0;
                for (std::size_t m = 0; m + d < N; ++m) acc += pw[p][m] * pw[q][m + d];
                double a = acc;  // value at l = d
                for (std::size_t l = d; l < L; ++l) {
                    const std::size_t j = l - d;  // xp lag l, xq lag j, l >= j
                    G(p * L + l, q * L + j) = a;
                    G(q * L + j, p * L + l) = a;
                    if (l + 1 < L) a -= pw[p][N - 1 - l] * pw[q][N - 1 - l + d];
                }
                if (p != q && d > 0) {
                    // lags with xq deeper than xp: entry (q*L+l, p*L+j)
                    double acc2 = 0.0;
                    for (std::size_t m = 0; m + d < N; ++m) acc2 += pw[q][m] * pw[p][m + d];
                    double a2 = acc2;
                    for (std::size_t l = d; l < L; ++l) {
                        const std::size_t j = l - d;
                        G(q * L + l, p * L + j) = a2;
                        G(p * L + j, q * L + l) = a2;
                        if (l + 1 < L) a2 -= pw[q][N - 1 - l] * pw[p][N - 1 - l + d];
                    }
                }
            }
}

}  // namespace

MemoryPolynomial fit_memory_polynomial(const std::vector<std::vector<double>>& x,
                                       const std::vector<std::vector<double>>& y,
                                       std::size_t order, std::size_t taps) {
    const std::size_t K = x.size();
    if (K == 0 || y.size() != K)
        throw std::invalid_argument("fit_memory_polynomial: plant count mismatch");
    const std::size_t P = order, L = taps, PL = P * L;
    MemoryPolynomial mp;
    mp.order = P;
    mp.taps = L;
    for (std::size_t k = 0; k < K; ++k) {
        const std::size_t N = x[k].size();
        if (N < PL + L)
            throw std::invalid_argument("fit_memory_polynomial: sequence too short");
        double peak = 0.0;
        for (double v : x[k]) peak = std::max(peak, std::fabs(v));
        if (peak <= 0.0) throw std::invalid_argument("fit_memory_polynomial: silent input");
        mp.scale.push_back(peak);

        std::vector<std::vector<double>> pw(P, std::vector<double>(N));
        for (std::size_t n = 0; n < N; ++n) {
            const double xs = x[k][n] / peak;
            double v = 1.0;
            for (std::size_t p = 0; p < P; ++p) {
                v *= xs;
                pw[p][n] = v;
            }
        }

        Eigen::MatrixXd G = Eigen::MatrixXd::Zero(PL, PL);
        fill_gram_real(pw, L, G);
        Eigen::VectorXd b = Eigen::VectorXd::Zero(PL);
        for (std::size_t p = 0; p < P; ++p)
            for (std::size_t l = 0; l < L; ++l) {
                double acc = 0.0;
                for (std::size_t m = 0; m + l < N; ++m) acc += pw[p][m] * y[k][m + l];
                b(p * L + l) = acc;
            }
        const double lambda = 1e-12 * G.trace() / static_cast<double>(PL);
        G.diagonal().array() += lambda;
        Eigen::VectorXd c = G.ldlt().solve(b);
        if (!c.allFinite()) throw std::runtime_error("fit_memory_polynomial: solve failed");
        mp.coeffs.emplace_back(c.data(), c.data() + PL);
    }
    return mp;
}

std::vector<double> predict_memory_polynomial(const MemoryPolynomial& mp, std::size_t plant,
                                              const std::vector<double>& x) {
    const std::size_t N = x.size(), P = mp.order, L = mp.taps;
    const double s = mp.scale.at(plant);
    const std::vector<double>& c = mp.coeffs.at(plant);
    std::vector<std::vector<double>> pw(P, std::vector<double>(N));
    for (std::size_t n = 0; n < N; ++n) {
        const double xs = x[n] / s;
        double v = 1.0;
        for (std::size_t p = 0; p < P; ++p) {
            v *= xs;
            pw[p][n] = v;
        }
    }
    std::vector<double> yhat(N, 0.0);
    for (std::size_t p = 0; p < P; ++p)
        for (std::size_t l = 0; l < L; ++l) {
            const double cc = c[p * L + l];
            if (cc == 0.0) continue;
            for (std::size_t n = l; n < N; ++n) yhat[n] += cc * pw[p][n - l];
        }
    return yhat;
}

ComplexMemoryPolynomial fit_memory_polynomial_complex(
    const std::vector<std::vector<double>>& xre, const std::vector<std::vector<double>>& xim,
    const std::vector<std::vector<double>>& yre, const std::vector<std::vector<double>>& yim,
    std::size_t order, std::size_t taps) {
    using cd = std::complex<double>;
    const std::size_t K = xre.size();
    const std::size_t P = order, L = taps, PL = P * L;
    ComplexMemoryPolynomial mp;
    mp.order = P;
    mp.taps = L;
    for (std::size_t k = 0; k < K; ++k) {
        const std::size_t N = xre[k].size();
        double peak = 0.0;
        for (std::size_t n = 0; n < N; ++n)
            peak = std::max(peak, std::hypot(xre[k][n], xim[k][n]));
        if (peak <= 0.0) throw std::invalid_argument("fit_memory_polynomial: silent input");
        mp.scale.push_back(peak);

        // basis phi_p[n] = |x|^(p-1) * x (baseband convention)
        std::vector<std::vector<cd>> pw(P, std::vector<cd>(N));
        for (std::size_t n = 0; n < N; ++n) {
            const cd xs(xre[k][n] / peak, xim[k][n] / peak);
            const double mag = std::abs(xs);
            double m = 1.0;
            for (std::size_t p = 0; p < P; ++p) {
                pw[p][n] = xs * m;
                m *= mag;
            }
        }

        Eigen::MatrixXcd G = Eigen::MatrixXcd::Zero(PL, PL);
        for (std::size_t p = 0; p < P; ++p)
            for (std::size_t q = 0; q < P; ++q)
                for (std::size_t d = 0; d < L; ++d) {
                    cd acc = 0.0;
                    for (std::size_t m = 0; m + d < N; ++m)
                        acc += std::conj(pw[p][m]) * pw[q][m + d];
                    cd a = acc;
                    for (std::size_t l = d; l < L; ++l) {
                        const std::size_t j = l - d;
                        G(p * L + l, q * L + j) = a;
                        G(q * L + j, p * L + l) = std::conj(a);
                        if (l + 1 < L) a -= std::conj(pw[p][N - 1 - l]) * pw[q][N - 1 - l + d];
                    }
                }
        Eigen::VectorXcd b = Eigen::VectorXcd::Zero(PL);
        for (std::size_t p = 0; p < P; ++p)
            for (std::size_t l = 0; l < L; ++l) {
                cd acc = 0.0;
                for (std::size_t m = 0; m + l < N; ++m)
                    acc += std::conj(pw[p][m]) * cd(yre[k][m + l], yim[k][m + l]);
                b(p * L + l) = acc;
            }
        const double lambda = 1e-12 * G.real().trace() / static_cast<double>(PL);
        G.diagonal().array() += lambda;
        Eigen::VectorXcd c = G.ldlt().solve(b);
        if (!c.allFinite()) throw std::runtime_error("fit_memory_polynomial: complex solve failed");
        std::vector<double> cre(PL), cim(PL);
        for (std::size_t i = 0; i < PL; ++i) {
            cre[i] = c(i).real();
            cim[i] = c(i).imag();
        }
        mp.coeffs_re.push_back(std::move(cre));
        mp.coeffs_im.push_back(std::move(cim));
    }
    return mp;
}

void predict_memory_polynomial_complex(const ComplexMemoryPolynomial& mp, std::size_t plant,
                                       const std::vector<double>& xre,
                                       const std::vector<double>& xim,
                                       std::vector<double>& yre, std::vector<double>& yim) {
    using cd = std::complex<double>;
    const std::size_t N = xre.size(), P = mp.order, L = mp.taps;
    const double s = mp.scale.at(plant);
    std::vector<std::vector<cd>> pw(P, std::vector<cd>(N));
    for (std::size_t n = 0; n < N; ++n) {
        const cd xs(xre[n] / s, xim[n] / s);
        const double mag = std::abs(xs);
        double m = 1.0;
        for (std::size_t p = 0; p < P; ++p) {
            pw[p][n] = xs * m;
            m *= mag;
        }
    }
    yre.assign(N, 0.0);
    yim.assign(N, 0.0);
    for (std::size_t p = 0; p < P; ++p)
        for (std::size_t l = 0; l < L; ++l) {
            const cd cc(mp.coeffs_re.at(plant)[p * L + l], mp.coeffs_im.at(plant)[p * L + l]);
            for (std::size_t n = l; n < N; ++n) {
                const cd v = cc * pw[p][n - l];
                yre[n] += v.real();
                yim[n] += v.imag();
            }
        }
}

}  // namespace mkid
