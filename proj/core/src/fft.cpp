#include "cnppo/fft.hpp"

#include <cmath>
#include <numbers>

#include "cnppo/errors.hpp"

namespace cnppo::fft {

namespace {

constexpr double kPi = std::numbers::pi;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// iterative Cooley-Tukey, n must be a power of two
void fft_pow2(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * kPi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        const std::complex<double> u = a[i + j];
        const std::complex<double> v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    for (auto& x : a) x /= static_cast<double>(n);
  }
}

// Bluestein chirp-z for arbitrary n, forward transform only
void fft_bluestein(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  const std::size_t m = next_pow2(2 * n - 1);
  // chirp exponents are taken mod 2n: exp(-i pi k^2 / n) has period 2n in k^2
  std::vector<std::complex<double>> chirp(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::uint64_t k2 = (static_cast<std::uint64_t>(k) * k) % (2 * n);
    const double ang = -kPi * static_cast<double>(k2) / static_cast<double>(n);
    chirp[k] = std::complex<double>(std::cos(ang), std::sin(ang));
  }
  std::vector<std::complex<double>> fa(m, {0.0, 0.0});
  std::vector<std::complex<double>> fb(m, {0.0, 0.0});
  for (std::size_t k = 0; k < n; ++k) fa[k] = a[k] * chirp[k];
  fb[0] = std::conj(chirp[0]);
  for (std::size_t k = 1; k < n; ++k) {
    fb[k] = std::conj(chirp[k]);
    fb[m - k] = fb[k];
  }
  fft_pow2(fa, false);
  fft_pow2(fb, false);
  for (std::size_t k = 0; k < m; ++k) fa[k] *= fb[k];
  fft_pow2(fa, true);
  for (std::size_t k = 0; k < n; ++k) a[k] = fa[k] * chirp[k];
}

}  // namespace

void fft(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  if (n <= 1) return;
  if (is_pow2(n)) {
    fft_pow2(a, inverse);
    return;
  }
  if (!inverse) {
    fft_bluestein(a);
    return;
  }
  for (auto& x : a) x = std::conj(x);
  fft_bluestein(a);
  for (auto& x : a) x = std::conj(x) / static_cast<double>(n);
}

std::vector<std::complex<double>> rfft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> a(n);
  for (std::size_t i = 0; i < n; ++i) a[i] = {x[i], 0.0};
  fft(a, false);
  a.resize(n / 2 + 1);
  return a;
}

std::vector<double> irfft(const std::vector<std::complex<double>>& half, int n) {
  if (n < 1) throw InvalidArgument("irfft: n must be positive");
  const std::size_t h = static_cast<std::size_t>(n) / 2 + 1;
  if (half.size() != h) throw ShapeError("irfft: expected n/2 + 1 spectrum bins");
  std::vector<std::complex<double>> full(static_cast<std::size_t>(n));
  for (std::size_t k = 0; k < h; ++k) full[k] = half[k];
  for (std::size_t k = h; k < full.size(); ++k) full[k] = std::conj(full[full.size() - k]);
  fft(full, true);
  std::vector<double> out(full.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = full[i].real();
  return out;
}

}  // namespace cnppo::fft
