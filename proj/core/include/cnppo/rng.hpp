#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace cnppo {

// Deterministic seeded generator. The engine is std::mt19937_64 (bit-stable
// across platforms); all value mappings are implemented here instead of
// <random> distributions so that identical seeds give identical streams on
// any standard library.
//
// Streams are split with fork(key): every component (env i, noise stream j,
// parameter init, shuffling, ...) gets its own child so adding a consumer
// never perturbs the draws seen by another.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // uniform in [0, 1)
  double uniform();
  double uniform(double lo, double hi);

  // uniform integer in [0, n), rejection sampled (no modulo bias)
  std::uint64_t uniform_int(std::uint64_t n);

  // standard normal via Box-Muller; pairs are cached
  double normal();
  double normal(double mean, double stddev);

  // independent child stream; same (seed, key) always gives the same child
  Rng fork(std::uint64_t key) const;

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

// SplitMix64 step, used for seed derivation.
std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace cnppo
