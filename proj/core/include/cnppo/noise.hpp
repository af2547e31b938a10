#pragma once

#include <vector>

#include "cnppo/rng.hpp"

namespace cnppo {

// Spectral exponent: PSD of the generated noise is proportional to 1/f^beta.
// 0 = white, 1 = pink, 2 = red.
struct NoiseColor {
  double beta = 0.0;

  NoiseColor() = default;
  explicit NoiseColor(double b);
};

struct NoiseSequence {
  std::vector<double> samples;
  NoiseColor color;

  int length() const { return static_cast<int>(samples.size()); }
};

// Inverse-FFT synthesis: Gaussian spectral coefficients scaled by f^(-beta/2),
// DC reusing the lowest nonzero frequency's scale, real-signal symmetry on DC
// and (even n) Nyquist bins, then an inverse real FFT. The result is divided
// by the exact standard deviation of that transform, so the marginal
// distribution is standard normal for every beta.
NoiseSequence generate_colored_noise(int n, NoiseColor color, Rng& rng);

// One independent noise stream per (env, action dimension). Each stream owns
// a seeded sub-generator and a pre-generated sequence of chunk_length samples
// consumed one at a time; exhausting a sequence triggers regeneration, never
// reuse. Streams share no mutable state, so distinct streams may be advanced
// from different threads.
class ColoredNoiseBank {
 public:
  static constexpr int kDefaultChunkLength = 1000;

  ColoredNoiseBank(int n_envs, int action_dim, NoiseColor color,
                   int chunk_length, const Rng& base);

  double next_noise(int env_index, int dim_index);

  // Discards the remainder of the stream's current sequence and generates a
  // fresh one (used by the optional episode-boundary reset mode).
  void reset_stream(int env_index, int dim_index);

  int n_envs() const { return n_envs_; }
  int action_dim() const { return action_dim_; }
  int chunk_length() const { return chunk_length_; }
  NoiseColor color() const { return color_; }

 private:
  struct Stream {
    NoiseSequence sequence;
    int cursor = 0;
    Rng rng;
  };

  Stream& stream_at(int env_index, int dim_index);

  int n_envs_;
  int action_dim_;
  int chunk_length_;
  NoiseColor color_;
  std::vector<Stream> streams_;
};

struct PsdEstimate {
  std::vector<double> frequencies;  // cycles/step, strictly increasing in (0, 0.5]
  std::vector<double> power;        // mean squared Fourier magnitude per bin
  int n_sequences_averaged = 0;
};

// Mean squared Fourier magnitude per positive frequency (DC excluded), no
// window, no detrending.
PsdEstimate estimate_psd(const std::vector<NoiseSequence>& sequences);

// OLS slope of log10(power) vs log10(frequency) restricted to [f_min, f_max].
// Needs at least 8 bins in band.
double fit_psd_slope(const PsdEstimate& psd, double f_min, double f_max);

struct BiasStats {
  NoiseColor color;
  std::vector<double> biases;  // per-sequence (or per-pool) means
  double std_of_bias = 0.0;    // sample standard deviation of biases
};

// Spread of the per-sequence mean. pool_n > 1 averages that many independent
// sequences per bias estimate, which shrinks the spread by 1/sqrt(pool_n).
BiasStats bias_statistics(NoiseColor color, int sequence_length, int n_sequences,
                          Rng& rng, int pool_n = 1);

struct WalkPoint {
  double x = 0.0;
  double y = 0.0;
};

// Cumulative sum per axis starting from the origin.
std::vector<WalkPoint> integrate_random_walk(const NoiseSequence& noise_x,
                                             const NoiseSequence& noise_y);

}  // namespace cnppo
