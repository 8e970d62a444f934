#include "mkid/blocks.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "mkid/dft.hpp"

namespace mkid {

// ---------------------------------------------------------------- NlCore

std::size_t NlCore::max_width() const {
    std::size_t w = std::max(in, out);
    for (std::size_t h : hidden) w = std::max(w, h);
    return w;
}

std::size_t NlCore::param_count() const {
    std::size_t n = 0, prev = in;
    for (std::size_t h : hidden) {
        n += h * prev + (with_bias ? h : 0);
        prev = h;
    }
    n += out * prev + (with_bias ? out : 0);
    return n;
}

void NlCore::init_params(std::vector<double>& p, Rng rng) const {
    p.assign(param_count(), 0.0);
    std::size_t off = 0, prev = in;
    auto fill = [&](std::size_t rows, std::size_t cols) {
        const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
        for (std::size_t i = 0; i < rows * cols; ++i) p[off + i] = rng.uniform(-a, a);
        off += rows * cols;
        if (with_bias) off += rows;  // biases stay zero
    };
    for (std::size_t h : hidden) {
        fill(h, prev);
        prev = h;
    }
    fill(out, prev);
}

void NlCore::finalize() {
    offs.assign(hidden.size() + 1, 0);
    std::size_t off = 0, prev = in;
    for (std::size_t li = 0; li < hidden.size(); ++li) {
        offs[li] = off;
        off += hidden[li] * prev + (with_bias ? hidden[li] : 0);
        prev = hidden[li];
    }
    offs[hidden.size()] = off;
}

void NlCore::forward_sample(const double* p, const double* x, double* acts) const {
    const std::size_t W = max_width();
    std::size_t prev = in;
    double* cur = acts;
    std::copy(x, x + in, cur);
    std::size_t off = 0;
    for (std::size_t li = 0; li < hidden.size(); ++li) {
        const std::size_t h = hidden[li];
        double* nxt = cur + W;
        for (std::size_t r = 0; r < h; ++r) {
            double acc = with_bias ? p[off + h * prev + r] : 0.0;
            const double* row = p + off + r * prev;
            for (std::size_t cix = 0; cix < prev; ++cix) acc += row[cix] * cur[cix];
            nxt[r] = std::tanh(acc);
        }
        off += h * prev + (with_bias ? h : 0);
        prev = h;
        cur = nxt;
    }
    double* outp = cur + W;
    for (std::size_t r = 0; r < out; ++r) {
        double acc = with_bias ? p[off + out * prev + r] : 0.0;
        const double* row = p + off + r * prev;
        for (std::size_t cix = 0; cix < prev; ++cix) acc += row[cix] * cur[cix];
        outp[r] = acc;
    }
}

void NlCore::backward_sample(const double* p, const double* acts, const double* up,
                             double* gp, double* grad_x, double* scratch) const {
    const std::size_t W = max_width();
    const std::size_t D = hidden.size();

    double* g_cur = scratch;       // gradient w.r.t. current layer activations
    double* g_prev = scratch + W;

    // output layer: out x P_D linear
    const std::size_t pd = D ? hidden[D - 1] : in;
    const double* fD = acts + W * D;
    {
        const std::size_t off = offs[D];
        std::fill(g_cur, g_cur + pd, 0.0);
        for (std::size_t r = 0; r < out; ++r) {
            const double u = up[r];
            const double* row = p + off + r * pd;
            double* grow = gp + off + r * pd;
            for (std::size_t cix = 0; cix < pd; ++cix) {
                grow[cix] += u * fD[cix];
                g_cur[cix] += u * row[cix];
            }
            if (with_bias) gp[off + out * pd + r] += u;
        }
    }

    // hidden layers, highest first
    for (std::size_t li = D; li-- > 0;) {
        const std::size_t h = hidden[li];
        const std::size_t pw = li ? hidden[li - 1] : in;
        const double* f_out = acts + W * (li + 1);  // tanh outputs of this layer
        const double* f_in = acts + W * li;
        const std::size_t off = offs[li];
        std::fill(g_prev, g_prev + pw, 0.0);
        for (std::size_t r = 0; r < h; ++r) {
            const double delta = g_cur[r] * (1.0 - f_out[r] * f_out[r]);
            const double* row = p + off + r * pw;
            double* grow = gp + off + r * pw;
            for (std::size_t cix = 0; cix < pw; ++cix) {
                grow[cix] += delta * f_in[cix];
                g_prev[cix] += delta * row[cix];
            }
            if (with_bias) gp[off + h * pw + r] += delta;
        }
        std::swap(g_cur, g_prev);
    }
    std::copy(g_cur, g_cur + in, grad_x);
}

// --------------------------------------------------------------- NlBlock

NlBlock::NlBlock(std::size_t in, std::vector<std::size_t> hidden, std::size_t out,
                 bool with_bias) {
    if (in == 0 || out == 0) throw std::invalid_argument("NlBlock: zero width");
    for (std::size_t h : hidden)
        if (h == 0) throw std::invalid_argument("NlBlock: zero hidden width");
    core_.in = in;
    core_.hidden = std::move(hidden);
    core_.out = out;
    core_.with_bias = with_bias;
    core_.finalize();
    params_.assign(core_.param_count(), 0.0);
}

Shape4 NlBlock::output_shape(const Shape4& in) const {
    return {in.t, in.k, core_.out, in.m};
}

Tensor4 NlBlock::forward(const Tensor4& x) const {
    const Shape4 s = x.shape();
    if (s.c != core_.in)
        throw ShapeError("NL forward: input channels " + std::to_string(s.c) +
                         " != " + std::to_string(core_.in));
    Tensor4 out(output_shape(s));
    const std::size_t W = core_.max_width();
    std::vector<double> acts((core_.depth() + 2) * W);
    std::vector<double> xin(core_.in);
    const double* p = params_.data();
    for (std::size_t t = 0; t < s.t; ++t)
        for (std::size_t k = 0; k < s.k; ++k)
            for (std::size_t m = 0; m < s.m; ++m) {
                for (std::size_t i = 0; i < s.c; ++i) xin[i] = x.at(t, k, i, m);
                core_.forward_sample(p, xin.data(), acts.data());
                const double* o = acts.data() + W * (core_.depth() + 1);
                for (std::size_t q = 0; q < core_.out; ++q) out.at(t, k, q, m) = o[q];
            }
    return out;
}

Tensor4 NlBlock::backward(const Tensor4& x, const Tensor4& upstream,
                          std::vector<double>& grad_params) const {
    const Shape4 s = x.shape();
    require_shape(upstream.shape(), output_shape(s), "NL backward");
    if (grad_params.size() != params_.size())
        throw ShapeError("NL backward: grad_params length mismatch");
    Tensor4 gx(s);
    const std::size_t W = core_.max_width();
    std::vector<double> acts((core_.depth() + 2) * W), scratch(2 * W);
    std::vector<double> xin(core_.in), up(core_.out), gin(core_.in);
    const double* p = params_.data();
    for (std::size_t t = 0; t < s.t; ++t)
        for (std::size_t k = 0; k < s.k; ++k)
            for (std::size_t m = 0; m < s.m; ++m) {
                for (std::size_t i = 0; i < s.c; ++i) xin[i] = x.at(t, k, i, m);
                for (std::size_t q = 0; q < core_.out; ++q) up[q] = upstream.at(t, k, q, m);
                core_.forward_sample(p, xin.data(), acts.data());
                core_.backward_sample(p, acts.data(), up.data(), grad_params.data(),
                                      gin.data(), scratch.data());
                for (std::size_t i = 0; i < s.c; ++i) gx.at(t, k, i, m) = gin[i];
            }
    return gx;
}

// ----------------------------------------------------------- FirTimeBlock

FirTimeBlock::FirTimeBlock(std::size_t L, std::size_t K, std::size_t I, std::size_t P,
                           KernelMode mode)
    : L_(L), Kk_(mode == KernelMode::SingleKernel ? 1 : K), I_(I), P_(P), mode_(mode) {
    if (L_ < 1) throw std::invalid_argument("FirTimeBlock: L must be >= 1");
    if (mode == KernelMode::SingleKernel && K != 1 && Kk_ != 1)
        throw std::invalid_argument("FirTimeBlock: single-kernel stores K=1");
    params_.assign(L_ * Kk_ * I_ * P_, 0.0);
}

void FirTimeBlock::init(Rng rng) {
    const double sd = 1.0 / std::sqrt(static_cast<double>(L_ * I_));
    for (double& v : params_) v = sd * rng.normal();
}

Shape4 FirTimeBlock::output_shape(const Shape4& in) const {
    if (in.m < L_)
        throw ShapeError("FIR forward: frame length " + std::to_string(in.m) +
                         " < kernel length " + std::to_string(L_));
    return {in.t, in.k, P_, in.m - L_ + 1};
}

Tensor4 FirTimeBlock::forward(const Tensor4& x) const {
    const Shape4 s = x.shape();
    if (s.c != I_) throw ShapeError("FIR forward: input channel mismatch");
    if (mode_ == KernelMode::Multikernel && s.k != Kk_)
        throw ShapeError("FIR forward: multikernel plant axis " + std::to_string(s.k) +
                         " != kernel K " + std::to_string(Kk_));
    Tensor4 out(output_shape(s));
    const std::size_t Mv = s.m - L_ + 1;
    for (std::size_t t = 0; t < s.t; ++t)
        for (std::size_t k = 0; k < s.k; ++k) {
            const std::size_t kap = (mode_ == KernelMode::Multikernel) ? k : 0;
            for (std::size_t p = 0; p < P_; ++p) {
                double* orow = &out.at(t, k, p, 0);
                for (std::size_t i = 0; i < I_; ++i) {
                    const double* xrow = &x.at(t, k, i, 0);
                    const double* wrow = &params_[widx(0, kap, i, p)];
                    // lag-outer order keeps both streams contiguous for SIMD
                    for (std::size_t l = 0; l < L_; ++l) {
                        const double wl = wrow[l];
                        const double* __restrict xs = xrow + (L_ - 1 - l);
                        double* __restrict od = orow;
                        for (std::size_t m = 0; m < Mv; ++m) od[m] += wl * xs[m];
                    }
                }
            }
        }
    return out;
}

Tensor4 FirTimeBlock::backward(const Tensor4& x, const Tensor4& upstream,
                               std::vector<double>& grad_params) const {
    const Shape4 s = x.shape();
    require_shape(upstream.shape(), output_shape(s), "FIR backward");
    if (grad_params.size() != params_.size())
        throw ShapeError("FIR backward: grad_params length mismatch");
    const std::size_t Mv = s.m - L_ + 1;
    Tensor4 gx(s);
    for (std::size_t t = 0; t < s.t; ++t)
        for (std::size_t k = 0; k < s.k; ++k) {
            const std::size_t kap = (mode_ == KernelMode::Multikernel) ? k : 0;
            for (std::size_t p = 0; p < P_; ++p) {
                const double* urow = &upstream.at(t, k, p, 0);
                for (std::size_t i = 0; i < I_; ++i) {
                    const double* xrow = &x.at(t, k, i, 0);
                    double* gxrow = &gx.at(t, k, i, 0);
                    double* gw = &grad_params[widx(0, kap, i, p)];
                    const double* wrow = &params_[widx(0, kap, i, p)];
                    for (std::size_t l = 0; l < L_; ++l) {
                        const double wl = wrow[l];
                        const double* __restrict xs = xrow + (L_ - 1 - l);
                        const double* __restrict ur = urow;
                        double* __restrict gxs = gxrow + (L_ - 1 - l);
                        double acc = 0.0;
                        for (std::size_t m = 0; m < Mv; ++m) {
                            acc += ur[m] * xs[m];
                            gxs[m] += ur[m] * wl;
                        }
                        gw[l] += acc;
                    }
                }
            }
        }
    return gx;
}

// ----------------------------------------------------------- FirFreqBlock

FirFreqBlock::FirFreqBlock(std::size_t L, std::size_t M, std::size_t K, std::size_t I,
                           std::size_t P, KernelMode mode, bool allow_naive_dft)
    : L_(L), M_(M), Kk_(mode == KernelMode::SingleKernel ? 1 : K), I_(I), P_(P),
      mode_(mode), allow_naive_dft_(allow_naive_dft) {
    if (L_ < 1 || M_ < L_) throw std::invalid_argument("FirFreqBlock: need M >= L >= 1");
    if (!is_pow2(M_) && !allow_naive_dft_)
        throw std::invalid_argument("FirFreqBlock: frame length " + std::to_string(M_) +
                                    " is not a power of two (naive DFT not enabled)");
    params_.assign(2 * plane(), 0.0);
}

void FirFreqBlock::init(Rng rng) {
    // DFT of a random time-domain kernel, so the constraint holds from the start
    const double sd = 1.0 / std::sqrt(static_cast<double>(L_ * I_));
    std::vector<double> tre(M_), tim(M_);
    for (std::size_t kap = 0; kap < Kk_; ++kap)
        for (std::size_t i = 0; i < I_; ++i)
            for (std::size_t p = 0; p < P_; ++p) {
                std::fill(tre.begin(), tre.end(), 0.0);
                std::fill(tim.begin(), tim.end(), 0.0);
                for (std::size_t l = 0; l < L_; ++l) tre[l] = sd * rng.normal();
                dft_inplace(tre.data(), tim.data(), M_, false);
                for (std::size_t m = 0; m < M_; ++m) {
                    params_[sidx(kap, i, p, m)] = tre[m];
                    params_[plane() + sidx(kap, i, p, m)] = tim[m];
                }
            }
}

std::vector<double> FirFreqBlock::constrained(const std::vector<double>& raw) const {
    std::vector<double> out(raw);
    std::vector<double> tre(M_), tim(M_);
    for (std::size_t kap = 0; kap < Kk_; ++kap)
        for (std::size_t i = 0; i < I_; ++i)
            for (std::size_t p = 0; p < P_; ++p) {
                const std::size_t base = sidx(kap, i, p, 0);
                for (std::size_t m = 0; m < M_; ++m) {
                    tre[m] = raw[base + m];
                    tim[m] = raw[plane() + base + m];
                }
                dft_inplace(tre.data(), tim.data(), M_, true);
                std::fill(tre.begin() + L_, tre.end(), 0.0);
                std::fill(tim.begin() + L_, tim.end(), 0.0);
                dft_inplace(tre.data(), tim.data(), M_, false);
                for (std::size_t m = 0; m < M_; ++m) {
                    out[base + m] = tre[m];
                    out[plane() + base + m] = tim[m];
                }
            }
    return out;
}

Shape4 FirFreqBlock::output_shape(const Shape4& in) const {
    if (in.m != M_)
        throw ShapeError("FIRf forward: frame length " + std::to_string(in.m) +
                         " != kernel M " + std::to_string(M_));
    return {in.t, in.k, P_, M_ - L_ + 1};
}

Tensor4 FirFreqBlock::forward(const Tensor4& x) const {
    const Shape4 s = x.shape();
    if (s.c != I_) throw ShapeError("FIRf forward: input channel mismatch");
    if (mode_ == KernelMode::Multikernel && s.k != Kk_)
        throw ShapeError("FIRf forward: multikernel plant axis mismatch");
    const std::size_t R = M_ - L_ + 1;
    const std::vector<double> cw = constrained(params_);
    Tensor4 out({s.t, s.k, P_, R});
    std::vector<double> Xre(I_ * M_), Xim(I_ * M_), Dre(M_), Dim(M_);
    for (std::size_t t = 0; t < s.t; ++t)
        for (std::size_t k = 0; k < s.k; ++k) {
            const std::size_t kap = (mode_ == KernelMode::Multikernel) ? k : 0;
            for (std::size_t i = 0; i < I_; ++i) {
                const double* xrow = &x.at(t, k, i, 0);
                std::copy(xrow, xrow + M_, Xre.begin() + i * M_);
                std::fill(Xim.begin() + i * M_, Xim.begin() + (i + 1) * M_, 0.0);
                dft_inplace(Xre.data() + i * M_, Xim.data() + i * M_, M_, false);
            }
            for (std::size_t p = 0; p < P_; ++p) {
                std::fill(Dre.begin(), Dre.end(), 0.0);
                std::fill(Dim.begin(), Dim.end(), 0.0);
                for (std::size_t i = 0; i < I_; ++i) {
                    const double* wr = &cw[sidx(kap, i, p, 0)];
                    const double* wi = &cw[plane() + sidx(kap, i, p, 0)];
                    const double* xr = Xre.data() + i * M_;
                    const double* xi = Xim.data() + i * M_;
                    for (std::size_t m = 0; m < M_; ++m) {
                        Dre[m] += xr[m] * wr[m] - xi[m] * wi[m];
                        Dim[m] += xr[m] * wi[m] + xi[m] * wr[m];
                    }
                }
                dft_inplace(Dre.data(), Dim.data(), M_, true);
                for (std::size_t m = 0; m < R; ++m)
                    out.at(t, k, p, m) = Dre[M_ - R + m];
            }
        }
    return out;
}

Tensor4 FirFreqBlock::backward(const Tensor4& x, const Tensor4& upstream,
                               std::vector<double>& grad_params) const {
    const Shape4 s = x.shape();
    require_shape(upstream.shape(), output_shape(s), "FIRf backward");
    if (grad_params.size() != params_.size())
        throw ShapeError("FIRf backward: grad_params length mismatch");
    const std::size_t R = M_ - L_ + 1;
    const std::vector<double> cw = constrained(params_);
    std::vector<double> gw(params_.size(), 0.0);  // spectral gradient, pre-projection
    Tensor4 gx(s);
    std::vector<double> Xre(I_ * M_), Xim(I_ * M_);
    std::vector<double> gDre(M_), gDim(M_), gXre(M_), gXim(M_);
    const double invM = 1.0 / static_cast<double>(M_);
    for (std::size_t t = 0; t < s.t; ++t)
        for (std::size_t k = 0; k < s.k; ++k) {
            const std::size_t kap = (mode_ == KernelMode::Multikernel) ? k : 0;
            for (std::size_t i = 0; i < I_; ++i) {
                const double* xrow = &x.at(t, k, i, 0);
                std::copy(xrow, xrow + M_, Xre.begin() + i * M_);
                std::fill(Xim.begin() + i * M_, Xim.begin() + (i + 1) * M_, 0.0);
                dft_inplace(Xre.data() + i * M_, Xim.data() + i * M_, M_, false);
            }
            std::vector<double> gXacc_re(I_ * M_, 0.0), gXacc_im(I_ * M_, 0.0);
            for (std::size_t p = 0; p < P_; ++p) {
                // grad w.r.t. spectrum D: (1/M) DFT of the (zero-padded) upstream
                std::fill(gDre.begin(), gDre.end(), 0.0);
                std::fill(gDim.begin(), gDim.end(), 0.0);
                const double* urow = &upstream.at(t, k, p, 0);
                std::copy(urow, urow + R, gDre.begin() + (M_ - R));
                dft_inplace(gDre.data(), gDim.data(), M_, false);
                for (std::size_t m = 0; m < M_; ++m) {
                    gDre[m] *= invM;
                    gDim[m] *= invM;
                }
                for (std::size_t i = 0; i < I_; ++i) {
                    const double* xr = Xre.data() + i * M_;
                    const double* xi = Xim.data() + i * M_;
                    const double* wr = &cw[sidx(kap, i, p, 0)];
                    const double* wi = &cw[plane() + sidx(kap, i, p, 0)];
                    double* gwr = &gw[sidx(kap, i, p, 0)];
                    double* gwi = &gw[plane() + sidx(kap, i, p, 0)];
                    double* gxr = gXacc_re.data() + i * M_;
                    double* gxi = gXacc_im.data() + i * M_;
                    for (std::size_t m = 0; m < M_; ++m) {
                        // grad_W = conj(X) * grad_D, grad_X = conj(W) * grad_D
                        gwr[m] += xr[m] * gDre[m] + xi[m] * gDim[m];
                        gwi[m] += -xi[m] * gDre[m] + xr[m] * gDim[m];
                        gxr[m] += wr[m] * gDre[m] + wi[m] * gDim[m];
                        gxi[m] += -wi[m] * gDre[m] + wr[m] * gDim[m];
                    }
                }
            }
            for (std::size_t i = 0; i < I_; ++i) {
                std::copy(gXacc_re.begin() + i * M_, gXacc_re.begin() + (i + 1) * M_, gXre.begin());
                std::copy(gXacc_im.begin() + i * M_, gXacc_im.begin() + (i + 1) * M_, gXim.begin());
                dft_inplace(gXre.data(), gXim.data(), M_, true);
                double* gxrow = &gx.at(t, k, i, 0);
                for (std::size_t m = 0; m < M_; ++m)
                    gxrow[m] += gXre[m] * static_cast<double>(M_);
            }
        }
    // the constraint projection is self-adjoint, so the raw-parameter
    // gradient is the projected spectral gradient
    const std::vector<double> gproj = constrained(gw);
    for (std::size_t i = 0; i < gproj.size(); ++i) grad_params[i] += gproj[i];
    return gx;
}

// -------------------------------------------------------- ComplexFirBlock

ComplexFirBlock::ComplexFirBlock(std::size_t L, std::size_t K, std::size_t I,
                                 std::size_t P, KernelMode mode)
    : L_(L), Kk_(mode == KernelMode::SingleKernel ? 1 : K), I_(I), P_(P), mode_(mode) {
    if (L_ < 1) throw std::invalid_argument("ComplexFirBlock: L must be >= 1");
    params_.assign(2 * plane(), 0.0);  // re kernel then im kernel
}

void ComplexFirBlock::init(Rng rng) {
    const double sd = 1.0 / std::sqrt(static_cast<double>(2 * L_ * I_));
    for (double& v : params_) v = sd * rng.normal();
}

Shape4 ComplexFirBlock::output_shape(const Shape4& in) const {
    if (in.m < L_)
        throw ShapeError("cFIR forward: frame length " + std::to_string(in.m) +
                         " < kernel length " + std::to_string(L_));
    return {in.t, in.k, P_, in.m - L_ + 1};
}

CTensor ComplexFirBlock::forward(const CTensor& x) const {
    const Shape4 s = x.shape();
    if (s.c != I_) throw ShapeError("cFIR forward: input channel mismatch");
    if (mode_ == KernelMode::Multikernel && s.k != Kk_)
        throw ShapeError("cFIR forward: multikernel plant axis mismatch");
    const std::size_t Mv = s.m - L_ + 1;
    CTensor out(output_shape(s));
    for (std::size_t t = 0; t < s.t; ++t)
        for (std::size_t k = 0; k < s.k; ++k) {
            const std::size_t kap = (mode_ == KernelMode::Multikernel) ? k : 0;
            for (std::size_t p = 0; p < P_; ++p) {
                double* ore = &out.re(t, k, p, 0);
                double* oim = &out.im(t, k, p, 0);
                for (std::size_t i = 0; i < I_; ++i) {
                    const double* xre = &x.re(t, k, i, 0);
                    const double* xim = &x.im(t, k, i, 0);
                    const double* wre = &params_[widx(0, kap, i, p)];
                    const double* wim = &params_[plane() + widx(0, kap, i, p)];
                    // lag-outer order keeps both streams contiguous for SIMD
                    for (std::size_t l = 0; l < L_; ++l) {
                        const double wr = wre[l], wi = wim[l];
                        const double* xr = xre + (L_ - 1 - l);
                        const double* xi = xim + (L_ - 1 - l);
                        for (std::size_t m = 0; m < Mv; ++m) {
                            ore[m] += xr[m] * wr - xi[m] * wi;
                            oim[m] += xr[m] * wi + xi[m] * wr;
                        }
                    }
                }
            }
        }
    return out;
}

CTensor ComplexFirBlock::backward(const CTensor& x, const CTensor& upstream,
                                  std::vector<double>& grad_params) const {
    const Shape4 s = x.shape();
    require_shape(upstream.shape(), output_shape(s), "cFIR backward");
    if (grad_params.size() != params_.size())
        throw ShapeError("cFIR backward: grad_params length mismatch");
    const std::size_t Mv = s.m - L_ + 1;
    CTensor gx(s);
    for (std::size_t t = 0; t < s.t; ++t)
        for (std::size_t k = 0; k < s.k; ++k) {
            const std::size_t kap = (mode_ == KernelMode::Multikernel) ? k : 0;
            for (std::size_t p = 0; p < P_; ++p) {
                const double* ure = &upstream.re(t, k, p, 0);
                const double* uim = &upstream.im(t, k, p, 0);
                for (std::size_t i = 0; i < I_; ++i) {
                    const double* xre = &x.re(t, k, i, 0);
                    const double* xim = &x.im(t, k, i, 0);
                    double* gxre = &gx.re(t, k, i, 0);
                    double* gxim = &gx.im(t, k, i, 0);
                    double* gwre = &grad_params[widx(0, kap, i, p)];
                    double* gwim = &grad_params[plane() + widx(0, kap, i, p)];
                    const double* wre = &params_[widx(0, kap, i, p)];
                    const double* wim = &params_[plane() + widx(0, kap, i, p)];
                    for (std::size_t l = 0; l < L_; ++l) {
                        const double wr = wre[l], wi = wim[l];
                        const double* xr = xre + (L_ - 1 - l);
                        const double* xi = xim + (L_ - 1 - l);
                        double* gr = gxre + (L_ - 1 - l);
                        double* gi = gxim + (L_ - 1 - l);
                        double awr = 0.0, awi = 0.0;
                        for (std::size_t m = 0; m < Mv; ++m) {
                            const double ur = ure[m], ui = uim[m];
                            awr += xr[m] * ur + xi[m] * ui;
                            awi += -xi[m] * ur + xr[m] * ui;
                            gr[m] += wr * ur + wi * ui;
                            gi[m] += -wi * ur + wr * ui;
                        }
                        gwre[l] += awr;
                        gwim[l] += awi;
                    }
                }
            }
        }
    return gx;
}

// --------------------------------------------------------- ComplexNlBlock

ComplexNlBlock::ComplexNlBlock(std::vector<std::size_t> hidden, bool with_bias) {
    core_.in = 1;
    core_.hidden = std::move(hidden);
    core_.out = 1;
    core_.with_bias = with_bias;
    core_.finalize();
    params_.assign(core_.param_count(), 0.0);
}

CTensor ComplexNlBlock::forward(const CTensor& z) const {
    const Shape4 s = z.shape();
    if (s.c != 1) throw ShapeError("cNL forward: expects a single channel");
    CTensor out(s);
    const std::size_t W = core_.max_width();
    std::vector<double> acts((core_.depth() + 2) * W);
    const double* p = params_.data();
    const std::size_t n = s.numel();
    const double* zre = z.re_raw().data();
    const double* zim = z.im_raw().data();
    double* ore = out.re_raw().data();
    double* oim = out.im_raw().data();
    for (std::size_t idx = 0; idx < n; ++idx) {
        const double r = std::hypot(zre[idx], zim[idx]);
        if (r < kMagEps) continue;  // exact zero output
        core_.forward_sample(p, &r, acts.data());
        const double g = acts[W * (core_.depth() + 1)];
        ore[idx] = g * zre[idx] / r;
        oim[idx] = g * zim[idx] / r;
    }
    return out;
}

CTensor ComplexNlBlock::backward(const CTensor& z, const CTensor& upstream,
                                 std::vector<double>& grad_params) const {
    const Shape4 s = z.shape();
    require_shape(upstream.shape(), s, "cNL backward");
    if (grad_params.size() != params_.size())
        throw ShapeError("cNL backward: grad_params length mismatch");
    CTensor gz(s);
    const std::size_t W = core_.max_width();
    std::vector<double> acts((core_.depth() + 2) * W), scratch(2 * W);
    const double* p = params_.data();
    const std::size_t n = s.numel();
    const double* zre = z.re_raw().data();
    const double* zim = z.im_raw().data();
    const double* ure = upstream.re_raw().data();
    const double* uim = upstream.im_raw().data();
    double* gre = gz.re_raw().data();
    double* gim = gz.im_raw().data();
    for (std::size_t idx = 0; idx < n; ++idx) {
        double r = std::hypot(zre[idx], zim[idx]);
        if (r < kMagEps) continue;
        const double c = zre[idx] / r, sn = zim[idx] / r;
        core_.forward_sample(p, &r, acts.data());
        const double g = acts[W * (core_.depth() + 1)];
        // radial component through the NL block, tangential from the phase
        const double ubar = ure[idx] * c + uim[idx] * sn;
        double gin = 0.0;
        core_.backward_sample(p, acts.data(), &ubar, grad_params.data(), &gin, scratch.data());
        const double tang = (g / r) * (uim[idx] * c - ure[idx] * sn);
        gre[idx] = gin * c - tang * sn;
        gim[idx] = gin * sn + tang * c;
    }
    return gz;
}

}  // namespace mkid
