#include <cmath>
#include <complex>
#include <vector>

#include "doctest.h"
#include "mkid/dft.hpp"
#include "mkid/rng.hpp"

using namespace mkid;
using cvec = std::vector<std::complex<double>>;

namespace {

// O(n^2) reference transform, written independently of the library FFT.
cvec naive_dft(const cvec& x, bool inverse) {
    const std::size_t n = x.size();
    cvec out(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<double> acc = 0.0;
        for (std::size_t m = 0; m < n; ++m) {
            const double ang = 2.0 * M_PI * static_cast<double>(m * k) / static_cast<double>(n);
            const std::complex<double> tw(std::cos(ang), inverse ? std::sin(ang) : -std::sin(ang));
            acc += x[m] * tw;
        }
        out[k] = inverse ? acc / static_cast<double>(n) : acc;
    }
    return out;
}

cvec random_signal(std::size_t n, Rng& rng) {
    cvec x(n);
    for (auto& v : x) v = {rng.normal(), rng.normal()};
    return x;
}

}  // namespace

TEST_CASE("forward transform of an impulse is all ones") {
    cvec x = {1.0, 0.0, 0.0, 0.0};
    cvec X = dft_forward(x);
    for (auto v : X) CHECK(std::abs(v - 1.0) < 1e-14);
}

TEST_CASE("forward transform of a constant concentrates at DC") {
    cvec x = {1.0, 1.0, 1.0, 1.0};
    cvec X = dft_forward(x);
    CHECK(std::abs(X[0] - 4.0) < 1e-14);
    for (std::size_t k = 1; k < 4; ++k) CHECK(std::abs(X[k]) < 1e-14);
}

TEST_CASE("inverse transform examples") {
    cvec X = {4.0, 0.0, 0.0, 0.0};
    cvec x = dft_inverse(X);
    for (auto v : x) CHECK(std::abs(v - 1.0) < 1e-14);

    cvec Y = {1.0, 1.0, 1.0, 1.0};
    cvec y = dft_inverse(Y);
    CHECK(std::abs(y[0] - 1.0) < 1e-14);
    for (std::size_t k = 1; k < 4; ++k) CHECK(std::abs(y[k]) < 1e-14);
}

TEST_CASE("FFT matches quadratic-time summation") {
    Rng rng(42);
    for (std::size_t n : {8u, 16u, 64u}) {
        cvec x = random_signal(n, rng);
        cvec fast = dft_forward(x);
        cvec slow = naive_dft(x, false);
        for (std::size_t k = 0; k < n; ++k) CHECK(std::abs(fast[k] - slow[k]) < 1e-11);
    }
}

TEST_CASE("non-power-of-two lengths use the direct path and still match") {
    Rng rng(7);
    for (std::size_t n : {3u, 12u, 15u}) {
        cvec x = random_signal(n, rng);
        cvec fast = dft_forward(x);
        cvec slow = naive_dft(x, false);
        for (std::size_t k = 0; k < n; ++k) CHECK(std::abs(fast[k] - slow[k]) < 1e-11);
        cvec back = dft_inverse(fast);
        for (std::size_t m = 0; m < n; ++m) CHECK(std::abs(back[m] - x[m]) < 1e-11);
    }
}

TEST_CASE("roundtrip is the identity") {
    Rng rng(3);
    cvec x = random_signal(16, rng);
    cvec back = dft_inverse(dft_forward(x));
    for (std::size_t m = 0; m < 16; ++m) CHECK(std::abs(back[m] - x[m]) < 1e-12);
}

TEST_CASE("Parseval identity") {
    Rng rng(99);
    for (std::size_t n : {2u, 4u, 8u, 16u, 64u}) {
        cvec x = random_signal(n, rng);
        cvec X = dft_forward(x);
        double et = 0.0, ef = 0.0;
        for (auto v : x) et += std::norm(v);
        for (auto v : X) ef += std::norm(v);
        ef /= static_cast<double>(n);
        CHECK(std::abs(et - ef) / et < 1e-10);
    }
}

TEST_CASE("empty sequence is rejected") {
    CHECK_THROWS(dft_forward(cvec{}));
    CHECK_THROWS(dft_inverse(cvec{}));
}
