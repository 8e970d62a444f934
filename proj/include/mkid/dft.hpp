#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace mkid {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Unnormalized forward transform X[k] = sum_m x[m] exp(-j2pi mk/M).
// The inverse carries the 1/M factor. Radix-2 FFT for power-of-two
// lengths, direct summation otherwise.
void dft_inplace(double* re, double* im, std::size_t n, bool inverse);

std::vector<std::complex<double>> dft_forward(const std::vector<std::complex<double>>& x);
std::vector<std::complex<double>> dft_inverse(const std::vector<std::complex<double>>& X);

}  // namespace mkid
