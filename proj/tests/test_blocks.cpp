#include <cmath>
#include <complex>
#include <vector>

#include "doctest.h"
#include "mkid/blocks.hpp"
#include "mkid/dft.hpp"
#include "mkid/gradcheck.hpp"
#include "mkid/rng.hpp"

using namespace mkid;

namespace {

Tensor4 random_tensor(Shape4 s, Rng& rng) {
    Tensor4 x(s);
    for (auto& v : x.raw()) v = rng.normal();
    return x;
}

CTensor random_ctensor(Shape4 s, Rng& rng) {
    CTensor x(s);
    for (auto& v : x.re_raw()) v = rng.normal();
    for (auto& v : x.im_raw()) v = rng.normal();
    return x;
}

// Per-sample MLP evaluation with plain nested loops, independent of NlCore.
std::vector<double> mlp_reference(const std::vector<double>& params, std::size_t in,
                                  const std::vector<std::size_t>& hidden, std::size_t out,
                                  const std::vector<double>& x) {
    std::vector<double> cur(x);
    std::size_t off = 0, prev = in;
    for (std::size_t h : hidden) {
        std::vector<double> nxt(h);
        for (std::size_t r = 0; r < h; ++r) {
            double acc = 0.0;
            for (std::size_t c = 0; c < prev; ++c) acc += params[off + r * prev + c] * cur[c];
            nxt[r] = std::tanh(acc);
        }
        off += h * prev;
        prev = h;
        cur = nxt;
    }
    std::vector<double> y(out);
    for (std::size_t r = 0; r < out; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < prev; ++c) acc += params[off + r * prev + c] * cur[c];
        y[r] = acc;
    }
    return y;
}

}  // namespace

TEST_CASE("NL block with zero weights outputs zero") {
    NlBlock nl(2, {4, 4}, 3);
    std::fill(nl.params().begin(), nl.params().end(), 0.0);
    Rng rng(1);
    Tensor4 x = random_tensor({2, 2, 2, 8}, rng);
    Tensor4 y = nl.forward(x);
    for (double v : y.raw()) CHECK(v == 0.0);
}

TEST_CASE("scalar NL evaluates a*tanh(b*x) directly") {
    NlBlock nl(1, {1}, 1);
    nl.params() = {0.5, 2.0};  // hidden weight b, output weight a
    Tensor4 x({1, 1, 1, 1});
    x.at(0, 0, 0, 0) = 1.0;
    Tensor4 y = nl.forward(x);
    CHECK(y.at(0, 0, 0, 0) == doctest::Approx(2.0 * std::tanh(0.5)).epsilon(1e-12));
    CHECK(y.at(0, 0, 0, 0) == doctest::Approx(0.924234).epsilon(1e-6));

    // closed-form derivative w.r.t. the hidden weight with unit upstream
    Tensor4 up({1, 1, 1, 1});
    up.at(0, 0, 0, 0) = 1.0;
    std::vector<double> gp(2, 0.0);
    nl.backward(x, up, gp);
    const double th = std::tanh(0.5);
    CHECK(gp[0] == doctest::Approx(2.0 * 1.0 * (1.0 - th * th)).epsilon(1e-12));
    CHECK(gp[0] == doctest::Approx(1.572895).epsilon(1e-6));
}

TEST_CASE("NL block matches a scalar loop-nest reference") {
    NlBlock nl(2, {5, 4, 3}, 2);
    Rng rng(11);
    nl.init(rng.split("w"));
    Tensor4 x = random_tensor({2, 2, 2, 6}, rng);
    Tensor4 y = nl.forward(x);
    for (std::size_t t = 0; t < 2; ++t)
        for (std::size_t k = 0; k < 2; ++k)
            for (std::size_t m = 0; m < 6; ++m) {
                std::vector<double> xi = {x.at(t, k, 0, m), x.at(t, k, 1, m)};
                auto yi = mlp_reference(nl.params(), 2, {5, 4, 3}, 2, xi);
                CHECK(y.at(t, k, 0, m) == doctest::Approx(yi[0]).epsilon(1e-12));
                CHECK(y.at(t, k, 1, m) == doctest::Approx(yi[1]).epsilon(1e-12));
            }
}

TEST_CASE("NL parameter count for the standard 5x6 configuration") {
    NlBlock nl(1, {6, 6, 6, 6, 6}, 6);
    CHECK(nl.params().size() == 186);  // 1*6 + 4*36 + 36
}

TEST_CASE("NL output bounded by the output-weight row sum") {
    NlBlock nl(1, {6}, 1);
    Rng rng(5);
    nl.init(rng.split("w"));
    double rowsum = 0.0;
    for (std::size_t i = 6; i < 12; ++i) rowsum += std::abs(nl.params()[i]);
    Tensor4 x = random_tensor({1, 1, 1, 256}, rng);
    for (auto& v : x.raw()) v *= 50.0;  // drive tanh into saturation
    Tensor4 y = nl.forward(x);
    for (double v : y.raw()) CHECK(std::abs(v) <= rowsum + 1e-12);
}

TEST_CASE("time FIR computes a first difference") {
    FirTimeBlock fir(2, 1, 1, 1, KernelMode::Multikernel);
    fir.w(0, 0, 0, 0) = 1.0;
    fir.w(1, 0, 0, 0) = -1.0;
    Tensor4 x({1, 1, 1, 4});
    for (std::size_t m = 0; m < 4; ++m) x.at(0, 0, 0, m) = static_cast<double>(m + 1);
    Tensor4 y = fir.forward(x);
    CHECK(y.shape() == Shape4{1, 1, 1, 3});
    for (std::size_t m = 0; m < 3; ++m) CHECK(y.at(0, 0, 0, m) == doctest::Approx(1.0));
}

TEST_CASE("multikernel FIR applies per-plant kernels") {
    FirTimeBlock fir(2, 2, 1, 1, KernelMode::Multikernel);
    fir.w(0, 0, 0, 0) = 1.0;  // plant 0: identity
    fir.w(1, 1, 0, 0) = 1.0;  // plant 1: unit delay
    Tensor4 x({1, 2, 1, 4});
    for (std::size_t k = 0; k < 2; ++k)
        for (std::size_t m = 0; m < 4; ++m) x.at(0, k, 0, m) = static_cast<double>(m + 1);
    Tensor4 y = fir.forward(x);
    const double p0[] = {2, 3, 4}, p1[] = {1, 2, 3};
    for (std::size_t m = 0; m < 3; ++m) {
        CHECK(y.at(0, 0, 0, m) == doctest::Approx(p0[m]));
        CHECK(y.at(0, 1, 0, m) == doctest::Approx(p1[m]));
    }
}

TEST_CASE("time FIR matches a five-deep loop nest") {
    const std::size_t T = 2, K = 3, I = 2, P = 2, M = 32, L = 5;
    FirTimeBlock fir(L, K, I, P, KernelMode::Multikernel);
    Rng rng(17);
    fir.init(rng.split("w"));
    Tensor4 x = random_tensor({T, K, I, M}, rng);
    Tensor4 y = fir.forward(x);
    REQUIRE(y.shape() == Shape4{T, K, P, M - L + 1});
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t p = 0; p < P; ++p)
                for (std::size_t m = L - 1; m < M; ++m) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < I; ++i)
                        for (std::size_t l = 0; l < L; ++l)
                            acc += x.at(t, k, i, m - l) * fir.params()[fir.widx(l, k, i, p)];
                    CHECK(y.at(t, k, p, m - (L - 1)) == doctest::Approx(acc).epsilon(1e-12));
                }
}

TEST_CASE("FIR forward is linear in its input") {
    FirTimeBlock fir(4, 2, 1, 1, KernelMode::Multikernel);
    Rng rng(23);
    fir.init(rng.split("w"));
    Tensor4 x1 = random_tensor({2, 2, 1, 16}, rng);
    Tensor4 x2 = random_tensor({2, 2, 1, 16}, rng);
    const double a = 1.7, b = -0.3;
    Tensor4 xc({2, 2, 1, 16});
    for (std::size_t i = 0; i < xc.raw().size(); ++i)
        xc.raw()[i] = a * x1.raw()[i] + b * x2.raw()[i];
    Tensor4 y1 = fir.forward(x1), y2 = fir.forward(x2), yc = fir.forward(xc);
    for (std::size_t i = 0; i < yc.raw().size(); ++i)
        CHECK(yc.raw()[i] == doctest::Approx(a * y1.raw()[i] + b * y2.raw()[i]).epsilon(1e-10));
}

TEST_CASE("multikernel plant isolation is exact") {
    FirTimeBlock fir(3, 3, 1, 1, KernelMode::Multikernel);
    Rng rng(31);
    fir.init(rng.split("w"));
    Tensor4 x = random_tensor({2, 3, 1, 12}, rng);
    Tensor4 y0 = fir.forward(x);
    fir.w(1, 1, 0, 0) += 0.5;  // perturb plant 1 only
    Tensor4 y1 = fir.forward(x);
    for (std::size_t t = 0; t < 2; ++t)
        for (std::size_t k = 0; k < 3; ++k)
            for (std::size_t m = 0; m < 10; ++m) {
                if (k == 1)
                    CHECK(y0.at(t, k, 0, m) != y1.at(t, k, 0, m));
                else
                    CHECK(y0.at(t, k, 0, m) == y1.at(t, k, 0, m));
            }
}

TEST_CASE("single-kernel mode stores one kernel and broadcasts it") {
    FirTimeBlock fir(4, 1, 1, 1, KernelMode::SingleKernel);
    Rng rng(37);
    fir.init(rng.split("w"));
    CHECK(fir.params().size() == 4);
    Tensor4 x = random_tensor({1, 3, 1, 10}, rng);
    Tensor4 y = fir.forward(x);
    // every plant sees the same kernel: recompute plant 2 with plant 0's weights
    for (std::size_t m = 0; m < 7; ++m) {
        double acc = 0.0;
        for (std::size_t l = 0; l < 4; ++l)
            acc += x.at(0, 2, 0, m + 3 - l) * fir.params()[fir.widx(l, 0, 0, 0)];
        CHECK(y.at(0, 2, 0, m) == doctest::Approx(acc).epsilon(1e-12));
    }
}

TEST_CASE("frequency-kernel constraint is idempotent and fixes compliant kernels") {
    const std::size_t L = 5, M = 8;
    FirFreqBlock fir(L, M, 1, 1, 1, KernelMode::Multikernel);

    SUBCASE("random spectrum: projecting twice equals projecting once") {
        Rng rng(41);
        std::vector<double> raw(fir.params().size());
        for (auto& v : raw) v = rng.normal();
        auto once = fir.constrained(raw);
        auto twice = fir.constrained(once);
        for (std::size_t i = 0; i < raw.size(); ++i)
            CHECK(std::abs(once[i] - twice[i]) < 1e-12);
    }

    SUBCASE("spectrum of an L-tap kernel is unchanged") {
        std::vector<std::complex<double>> w(M, 0.0);
        Rng rng(43);
        for (std::size_t l = 0; l < L; ++l) w[l] = rng.normal();
        auto W = dft_forward(w);
        std::vector<double> raw(fir.params().size(), 0.0);
        for (std::size_t m = 0; m < M; ++m) {
            raw[fir.sidx(0, 0, 0, m)] = W[m].real();
            raw[fir.plane() + fir.sidx(0, 0, 0, m)] = W[m].imag();
        }
        auto proj = fir.constrained(raw);
        for (std::size_t i = 0; i < raw.size(); ++i) CHECK(std::abs(proj[i] - raw[i]) < 1e-12);
    }

    SUBCASE("all-ones spectrum (time impulse) is unchanged") {
        std::vector<double> raw(fir.params().size(), 0.0);
        for (std::size_t m = 0; m < M; ++m) raw[fir.sidx(0, 0, 0, m)] = 1.0;
        auto proj = fir.constrained(raw);
        for (std::size_t i = 0; i < raw.size(); ++i) CHECK(std::abs(proj[i] - raw[i]) < 1e-12);
    }
}

TEST_CASE("frequency FIR with impulse kernel returns the frame tail") {
    const std::size_t L = 9, M = 16, R = M - L + 1;
    FirFreqBlock fir(L, M, 1, 1, 1, KernelMode::Multikernel);
    std::fill(fir.params().begin(), fir.params().end(), 0.0);
    for (std::size_t m = 0; m < M; ++m) fir.params()[fir.sidx(0, 0, 0, m)] = 1.0;
    Rng rng(47);
    Tensor4 x = random_tensor({2, 1, 1, M}, rng);
    Tensor4 y = fir.forward(x);
    REQUIRE(y.shape() == Shape4{2, 1, 1, R});
    for (std::size_t t = 0; t < 2; ++t)
        for (std::size_t m = 0; m < R; ++m)
            CHECK(y.at(t, 0, 0, m) == doctest::Approx(x.at(t, 0, 0, M - R + m)).epsilon(1e-10));
}

TEST_CASE("frequency FIR with zero kernel outputs zero") {
    FirFreqBlock fir(9, 16, 1, 1, 1, KernelMode::Multikernel);
    std::fill(fir.params().begin(), fir.params().end(), 0.0);
    Rng rng(53);
    Tensor4 x = random_tensor({1, 1, 1, 16}, rng);
    Tensor4 y = fir.forward(x);
    for (double v : y.raw()) CHECK(v == 0.0);
}

TEST_CASE("frequency FIR equals the tail of the time-domain convolution") {
    const std::size_t T = 2, K = 2, I = 2, P = 2, L = 9, M = 16, R = M - L + 1;
    FirTimeBlock ft(L, K, I, P, KernelMode::Multikernel);
    Rng rng(59);
    ft.init(rng.split("w"));
    FirFreqBlock ff(L, M, K, I, P, KernelMode::Multikernel);
    std::fill(ff.params().begin(), ff.params().end(), 0.0);
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t i = 0; i < I; ++i)
            for (std::size_t p = 0; p < P; ++p) {
                std::vector<std::complex<double>> w(M, 0.0);
                for (std::size_t l = 0; l < L; ++l) w[l] = ft.params()[ft.widx(l, k, i, p)];
                auto W = dft_forward(w);
                for (std::size_t m = 0; m < M; ++m) {
                    ff.params()[ff.sidx(k, i, p, m)] = W[m].real();
                    ff.params()[ff.plane() + ff.sidx(k, i, p, m)] = W[m].imag();
                }
            }
    Tensor4 x = random_tensor({T, K, I, M}, rng);
    Tensor4 yt = ft.forward(x);
    Tensor4 yf = ff.forward(x);
    REQUIRE(yf.shape() == Shape4{T, K, P, R});
    const std::size_t vt = M - L + 1;  // valid samples in the time-domain output
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t p = 0; p < P; ++p)
                for (std::size_t m = 0; m < R; ++m)
                    CHECK(yf.at(t, k, p, m) ==
                          doctest::Approx(yt.at(t, k, p, vt - R + m)).epsilon(1e-10));
}

TEST_CASE("complex FIR keeps a real case real") {
    ComplexFirBlock fir(3, 1, 1, 1, KernelMode::Multikernel);
    std::fill(fir.params().begin(), fir.params().end(), 0.0);
    Rng rng(61);
    for (std::size_t l = 0; l < 3; ++l) fir.params()[fir.widx(l, 0, 0, 0)] = rng.normal();
    CTensor z({1, 1, 1, 10});
    for (auto& v : z.re_raw()) v = rng.normal();
    CTensor y = fir.forward(z);
    for (double v : y.im_raw()) CHECK(v == 0.0);
}

TEST_CASE("complex FIR kernel j*delta rotates by 90 degrees") {
    ComplexFirBlock fir(1, 1, 1, 1, KernelMode::Multikernel);
    std::fill(fir.params().begin(), fir.params().end(), 0.0);
    fir.params()[fir.plane() + fir.widx(0, 0, 0, 0)] = 1.0;  // imaginary part
    Rng rng(67);
    CTensor z = random_ctensor({1, 1, 1, 8}, rng);
    CTensor y = fir.forward(z);
    for (std::size_t m = 0; m < 8; ++m) {
        CHECK(y.re(0, 0, 0, m) == doctest::Approx(-z.im(0, 0, 0, m)).epsilon(1e-12));
        CHECK(y.im(0, 0, 0, m) == doctest::Approx(z.re(0, 0, 0, m)).epsilon(1e-12));
    }
}

TEST_CASE("complex FIR matches a scalar complex convolution") {
    const std::size_t L = 3, M = 12;
    ComplexFirBlock fir(L, 2, 1, 1, KernelMode::Multikernel);
    Rng rng(71);
    fir.init(rng.split("w"));
    CTensor z = random_ctensor({2, 2, 1, M}, rng);
    CTensor y = fir.forward(z);
    for (std::size_t t = 0; t < 2; ++t)
        for (std::size_t k = 0; k < 2; ++k)
            for (std::size_t m = L - 1; m < M; ++m) {
                std::complex<double> acc = 0.0;
                for (std::size_t l = 0; l < L; ++l) {
                    std::complex<double> w(fir.params()[fir.widx(l, k, 0, 0)],
                                           fir.params()[fir.plane() + fir.widx(l, k, 0, 0)]);
                    std::complex<double> xv(z.re(t, k, 0, m - l), z.im(t, k, 0, m - l));
                    acc += w * xv;
                }
                CHECK(y.re(t, k, 0, m - (L - 1)) == doctest::Approx(acc.real()).epsilon(1e-12));
                CHECK(y.im(t, k, 0, m - (L - 1)) == doctest::Approx(acc.imag()).epsilon(1e-12));
            }
}

TEST_CASE("complex NL preserves phase and processes magnitude") {
    ComplexNlBlock nl({6, 6});
    Rng rng(73);
    nl.init(rng.split("w"));

    SUBCASE("zero weights give exactly zero output") {
        std::fill(nl.params().begin(), nl.params().end(), 0.0);
        CTensor z = random_ctensor({1, 1, 1, 8}, rng);
        CTensor y = nl.forward(z);
        for (double v : y.re_raw()) CHECK(v == 0.0);
        for (double v : y.im_raw()) CHECK(v == 0.0);
    }

    SUBCASE("real positive input stays real") {
        CTensor z({1, 1, 1, 8});
        for (auto& v : z.re_raw()) v = std::abs(rng.normal()) + 0.1;
        CTensor y = nl.forward(z);
        for (double v : y.im_raw()) CHECK(std::abs(v) < 1e-15);
    }

    SUBCASE("polar decomposition matches the real NL on the magnitude") {
        NlBlock ref(1, {6, 6}, 1);
        ref.params() = nl.params();
        CTensor z = random_ctensor({2, 1, 1, 8}, rng);
        CTensor y = nl.forward(z);
        for (std::size_t t = 0; t < 2; ++t)
            for (std::size_t m = 0; m < 8; ++m) {
                const double r = std::hypot(z.re(t, 0, 0, m), z.im(t, 0, 0, m));
                Tensor4 xin({1, 1, 1, 1});
                xin.at(0, 0, 0, 0) = r;
                const double mag = ref.forward(xin).at(0, 0, 0, 0);
                const double phase = std::atan2(z.im(t, 0, 0, m), z.re(t, 0, 0, m));
                CHECK(y.re(t, 0, 0, m) == doctest::Approx(mag * std::cos(phase)).epsilon(1e-12));
                CHECK(y.im(t, 0, 0, m) == doctest::Approx(mag * std::sin(phase)).epsilon(1e-12));
            }
    }
}

TEST_CASE("zero upstream gradient yields zero gradients everywhere") {
    FirTimeBlock fir(4, 2, 1, 1, KernelMode::Multikernel);
    Rng rng(79);
    fir.init(rng.split("w"));
    Tensor4 x = random_tensor({1, 2, 1, 10}, rng);
    Tensor4 up(fir.output_shape(x.shape()));
    std::vector<double> gp(fir.params().size(), 0.0);
    Tensor4 gx = fir.backward(x, up, gp);
    for (double v : gx.raw()) CHECK(v == 0.0);
    for (double v : gp) CHECK(v == 0.0);
}

TEST_CASE("all-zero time FIR has exactly zero input gradient") {
    FirTimeBlock fir(4, 1, 1, 1, KernelMode::Multikernel);
    std::fill(fir.params().begin(), fir.params().end(), 0.0);
    Rng rng(83);
    Tensor4 x = random_tensor({1, 1, 1, 10}, rng);
    Tensor4 up = random_tensor(fir.output_shape(x.shape()), rng);
    std::vector<double> gp(fir.params().size(), 0.0);
    Tensor4 gx = fir.backward(x, up, gp);
    for (double v : gx.raw()) CHECK(v == 0.0);
}

TEST_CASE("finite differences validate every block backward") {
    const double tol = 1e-4;
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        Rng rng(seed);

        NlBlock nl(1, {6, 5}, 2);
        nl.init(rng.split("nl"));
        CHECK(grad_check(nl, random_tensor({1, 1, 1, 16}, rng)).ok(tol));

        FirTimeBlock ft(3, 2, 2, 2, KernelMode::Multikernel);
        ft.init(rng.split("ft"));
        CHECK(grad_check(ft, random_tensor({2, 2, 2, 9}, rng)).ok(tol));

        FirTimeBlock fs(3, 1, 1, 1, KernelMode::SingleKernel);
        fs.init(rng.split("fs"));
        CHECK(grad_check(fs, random_tensor({2, 3, 1, 9}, rng)).ok(tol));

        FirFreqBlock ff(3, 16, 2, 2, 2, KernelMode::Multikernel);
        ff.init(rng.split("ff"));
        CHECK(grad_check(ff, random_tensor({2, 2, 2, 16}, rng)).ok(tol));

        ComplexFirBlock cf(3, 2, 1, 1, KernelMode::Multikernel);
        cf.init(rng.split("cf"));
        CHECK(grad_check(cf, random_ctensor({2, 2, 1, 9}, rng)).ok(tol));

        ComplexNlBlock cn({6, 6});
        cn.init(rng.split("cn"));
        CHECK(grad_check(cn, random_ctensor({1, 1, 1, 12}, rng)).ok(tol));
    }
}
