#include "mkid/dft.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace mkid {

namespace {

struct Twiddles {
    std::vector<double> cos_, sin_;  // sin stored for the forward (negative) direction
};

const Twiddles& twiddles_for(std::size_t n) {
    thread_local std::map<std::size_t, Twiddles> cache;
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    Twiddles tw;
    tw.cos_.resize(n / 2);
    tw.sin_.resize(n / 2);
    for (std::size_t i = 0; i < n / 2; ++i) {
        const double a = -2.0 * M_PI * static_cast<double>(i) / static_cast<double>(n);
        tw.cos_[i] = std::cos(a);
        tw.sin_[i] = std::sin(a);
    }
    return cache.emplace(n, std::move(tw)).first->second;
}

void fft_radix2(double* re, double* im, std::size_t n, bool inverse) {
    // bit-reversal permutation
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) {
            std::swap(re[i], re[j]);
            std::swap(im[i], im[j]);
        }
    }
    const Twiddles& tw = twiddles_for(n);
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t step = n / len;
        for (std::size_t i = 0; i < n; i += len) {
            for (std::size_t k = 0; k < len / 2; ++k) {
                const double wr = tw.cos_[k * step];
                const double wi = inverse ? -tw.sin_[k * step] : tw.sin_[k * step];
                const std::size_t a = i + k, b = i + k + len / 2;
                const double xr = re[b] * wr - im[b] * wi;
                const double xi = re[b] * wi + im[b] * wr;
                re[b] = re[a] - xr;
                im[b] = im[a] - xi;
                re[a] += xr;
                im[a] += xi;
            }
        }
    }
    if (inverse) {
        const double s = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            re[i] *= s;
            im[i] *= s;
        }
    }
}

void dft_naive(double* re, double* im, std::size_t n, bool inverse) {
    std::vector<double> or_(n), oi(n);
    const double sign = inverse ? 1.0 : -1.0;
    for (std::size_t k = 0; k < n; ++k) {
        double sr = 0.0, si = 0.0;
        for (std::size_t m = 0; m < n; ++m) {
            const double a = sign * 2.0 * M_PI * static_cast<double>(m * k % n) / static_cast<double>(n);
            const double c = std::cos(a), s = std::sin(a);
            sr += re[m] * c - im[m] * s;
            si += re[m] * s + im[m] * c;
        }
        or_[k] = sr;
        oi[k] = si;
    }
    const double scale = inverse ? 1.0 / static_cast<double>(n) : 1.0;
    for (std::size_t k = 0; k < n; ++k) {
        re[k] = or_[k] * scale;
        im[k] = oi[k] * scale;
    }
}

}  // namespace

void dft_inplace(double* re, double* im, std::size_t n, bool inverse) {
    if (n == 0) throw std::invalid_argument("dft: empty sequence");
    if (is_pow2(n))
        fft_radix2(re, im, n, inverse);
    else
        dft_naive(re, im, n, inverse);
}

std::vector<std::complex<double>> dft_forward(const std::vector<std::complex<double>>& x) {
    std::vector<double> re(x.size()), im(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        re[i] = x[i].real();
        im[i] = x[i].imag();
    }
    dft_inplace(re.data(), im.data(), x.size(), false);
    std::vector<std::complex<double>> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = {re[i], im[i]};
    return out;
}

std::vector<std::complex<double>> dft_inverse(const std::vector<std::complex<double>>& X) {
    std::vector<double> re(X.size()), im(X.size());
    for (std::size_t i = 0; i < X.size(); ++i) {
        re[i] = X[i].real();
        im[i] = X[i].imag();
    }
    dft_inplace(re.data(), im.data(), X.size(), true);
    std::vector<std::complex<double>> out(X.size());
    for (std::size_t i = 0; i < X.size(); ++i) out[i] = {re[i], im[i]};
    return out;
}

}  // namespace mkid
