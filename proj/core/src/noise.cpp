#include "cnppo/noise.hpp"

#include <cmath>
#include <complex>

#include "cnppo/errors.hpp"
#include "cnppo/fft.hpp"

namespace cnppo {

NoiseColor::NoiseColor(double b) : beta(b) {
  if (!std::isfinite(b) || b < 0.0)
    throw InvalidArgument("noise color beta must be finite and >= 0");
}

NoiseSequence generate_colored_noise(int n, NoiseColor color, Rng& rng) {
  if (n < 2) throw InvalidArgument("colored noise length must be >= 2");
  const int h = n / 2 + 1;  // rfft bins, f_k = k/n
  const bool even = n % 2 == 0;

  std::vector<double> scale(static_cast<std::size_t>(h));
  for (int k = 1; k < h; ++k) {
    const double f = static_cast<double>(k) / static_cast<double>(n);
    scale[static_cast<std::size_t>(k)] = std::pow(f, -color.beta / 2.0);
  }
  scale[0] = scale[1];  // DC reuses the lowest nonzero frequency's scale

  // Exact standard deviation of the inverse transform below. Middle bins
  // enter the real signal twice (conjugate pair), DC once with variance
  // doubled by the sqrt(2) fix, and for even n the Nyquist bin likewise.
  double var_num = 2.0 * scale[0] * scale[0];
  const int mid_end = even ? h - 1 : h;
  for (int k = 1; k < mid_end; ++k)
    var_num += 4.0 * scale[static_cast<std::size_t>(k)] * scale[static_cast<std::size_t>(k)];
  if (even) var_num += 2.0 * scale[static_cast<std::size_t>(h - 1)] * scale[static_cast<std::size_t>(h - 1)];
  const double sigma = std::sqrt(var_num) / static_cast<double>(n);

  std::vector<std::complex<double>> spectrum(static_cast<std::size_t>(h));
  const double sqrt2 = std::sqrt(2.0);
  for (int k = 0; k < h; ++k) {
    double re = rng.normal() * scale[static_cast<std::size_t>(k)];
    double im = rng.normal() * scale[static_cast<std::size_t>(k)];
    if (k == 0 || (even && k == h - 1)) {
      re *= sqrt2;  // real-signal symmetry: these bins carry no imaginary part
      im = 0.0;
    }
    spectrum[static_cast<std::size_t>(k)] = {re, im};
  }

  NoiseSequence seq;
  seq.color = color;
  seq.samples = fft::irfft(spectrum, n);
  for (double& v : seq.samples) v /= sigma;
  return seq;
}

ColoredNoiseBank::ColoredNoiseBank(int n_envs, int action_dim, NoiseColor color,
                                   int chunk_length, const Rng& base)
    : n_envs_(n_envs),
      action_dim_(action_dim),
      chunk_length_(chunk_length),
      color_(color) {
  if (n_envs < 1 || action_dim < 1)
    throw InvalidArgument("noise bank needs n_envs >= 1 and action_dim >= 1");
  if (chunk_length < 2) throw InvalidArgument("noise bank chunk_length must be >= 2");
  streams_.reserve(static_cast<std::size_t>(n_envs) * static_cast<std::size_t>(action_dim));
  for (int e = 0; e < n_envs; ++e) {
    for (int d = 0; d < action_dim; ++d) {
      Stream s{NoiseSequence{}, 0,
               base.fork(static_cast<std::uint64_t>(e) * static_cast<std::uint64_t>(action_dim) +
                         static_cast<std::uint64_t>(d))};
      s.sequence = generate_colored_noise(chunk_length_, color_, s.rng);
      streams_.push_back(std::move(s));
    }
  }
}

ColoredNoiseBank::Stream& ColoredNoiseBank::stream_at(int env_index, int dim_index) {
  if (env_index < 0 || env_index >= n_envs_ || dim_index < 0 || dim_index >= action_dim_)
    throw InvalidArgument("noise bank stream index out of range");
  return streams_[static_cast<std::size_t>(env_index) * static_cast<std::size_t>(action_dim_) +
                  static_cast<std::size_t>(dim_index)];
}

double ColoredNoiseBank::next_noise(int env_index, int dim_index) {
  Stream& s = stream_at(env_index, dim_index);
  if (s.cursor == chunk_length_) {
    s.sequence = generate_colored_noise(chunk_length_, color_, s.rng);
    s.cursor = 0;
  }
  return s.sequence.samples[static_cast<std::size_t>(s.cursor++)];
}

void ColoredNoiseBank::reset_stream(int env_index, int dim_index) {
  Stream& s = stream_at(env_index, dim_index);
  s.sequence = generate_colored_noise(chunk_length_, color_, s.rng);
  s.cursor = 0;
}

PsdEstimate estimate_psd(const std::vector<NoiseSequence>& sequences) {
  if (sequences.size() < 2)
    throw InvalidArgument("estimate_psd needs at least 2 sequences");
  const int n = sequences.front().length();
  for (const auto& s : sequences)
    if (s.length() != n) throw ShapeError("estimate_psd: sequences must share one length");
  if (n < 4) throw InvalidArgument("estimate_psd: sequences too short");

  const int h = n / 2 + 1;
  PsdEstimate est;
  est.n_sequences_averaged = static_cast<int>(sequences.size());
  est.frequencies.resize(static_cast<std::size_t>(h - 1));
  est.power.assign(static_cast<std::size_t>(h - 1), 0.0);
  for (int k = 1; k < h; ++k)
    est.frequencies[static_cast<std::size_t>(k - 1)] =
        static_cast<double>(k) / static_cast<double>(n);

  for (const auto& s : sequences) {
    const auto spec = fft::rfft(s.samples);
    for (int k = 1; k < h; ++k)
      est.power[static_cast<std::size_t>(k - 1)] += std::norm(spec[static_cast<std::size_t>(k)]);
  }
  for (double& p : est.power) p /= static_cast<double>(sequences.size());
  return est;
}

double fit_psd_slope(const PsdEstimate& psd, double f_min, double f_max) {
  if (!(f_min < f_max)) throw InvalidArgument("fit_psd_slope: need f_min < f_max");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int m = 0;
  for (std::size_t i = 0; i < psd.frequencies.size(); ++i) {
    const double f = psd.frequencies[i];
    if (f < f_min || f > f_max) continue;
    if (!(psd.power[i] > 0.0))
      throw InvalidArgument("fit_psd_slope: nonpositive power in fitting band");
    const double x = std::log10(f);
    const double y = std::log10(psd.power[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++m;
  }
  if (m < 8) throw InvalidArgument("fit_psd_slope: fewer than 8 bins in band");
  const double denom = static_cast<double>(m) * sxx - sx * sx;
  return (static_cast<double>(m) * sxy - sx * sy) / denom;
}

BiasStats bias_statistics(NoiseColor color, int sequence_length, int n_sequences,
                          Rng& rng, int pool_n) {
  if (n_sequences < 100)
    throw InvalidArgument("bias_statistics needs n_sequences >= 100");
  if (pool_n < 1) throw InvalidArgument("bias_statistics: pool_n must be >= 1");

  BiasStats stats;
  stats.color = color;
  stats.biases.resize(static_cast<std::size_t>(n_sequences));
  for (int i = 0; i < n_sequences; ++i) {
    double pooled = 0.0;
    for (int p = 0; p < pool_n; ++p) {
      const NoiseSequence seq = generate_colored_noise(sequence_length, color, rng);
      double mean = 0.0;
      for (double v : seq.samples) mean += v;
      pooled += mean / static_cast<double>(sequence_length);
    }
    stats.biases[static_cast<std::size_t>(i)] = pooled / static_cast<double>(pool_n);
  }

  double mean = 0.0;
  for (double b : stats.biases) mean += b;
  mean /= static_cast<double>(n_sequences);
  double ss = 0.0;
  for (double b : stats.biases) ss += (b - mean) * (b - mean);
  stats.std_of_bias = std::sqrt(ss / static_cast<double>(n_sequences - 1));
  return stats;
}

std::vector<WalkPoint> integrate_random_walk(const NoiseSequence& noise_x,
                                             const NoiseSequence& noise_y) {
  if (noise_x.length() != noise_y.length())
    throw ShapeError("integrate_random_walk: axis lengths differ");
  std::vector<WalkPoint> pts(static_cast<std::size_t>(noise_x.length()));
  double x = 0.0, y = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    x += noise_x.samples[i];
    y += noise_y.samples[i];
    pts[i] = {x, y};
  }
  return pts;
}

}  // namespace cnppo
