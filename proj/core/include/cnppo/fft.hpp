#pragma once

#include <complex>
#include <vector>

namespace cnppo::fft {

// In-place complex transform of arbitrary length: iterative radix-2 for
// powers of two, Bluestein's chirp-z otherwise. inverse=true applies the
// conventional 1/n factor.
void fft(std::vector<std::complex<double>>& a, bool inverse);

// Real input -> n/2 + 1 Hermitian bins (no normalization).
std::vector<std::complex<double>> rfft(const std::vector<double>& x);

// Hermitian half-spectrum (n/2 + 1 bins) -> length-n real signal with the
// 1/n factor, inverse of rfft.
std::vector<double> irfft(const std::vector<std::complex<double>>& half, int n);

}  // namespace cnppo::fft
