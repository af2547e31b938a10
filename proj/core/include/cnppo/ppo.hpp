#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cnppo/envs.hpp"
#include "cnppo/evalstats.hpp"
#include "cnppo/net.hpp"
#include "cnppo/noise.hpp"
#include "cnppo/rng.hpp"

namespace cnppo {

struct PpoConfig {
  int n_envs = 4;
  int n_steps = 2048;
  int n_epochs = 10;
  int minibatch_size = 64;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_range = 0.2;
  double ent_coef = 0.0;
  double vf_coef = 0.5;
  double max_grad_norm = 0.5;
  double learning_rate = 3e-4;
  long long total_timesteps = 204800;
  double noise_beta = 0.0;
  std::uint64_t seed = 0;

  // Behavioral flags; defaults match the plain reference setup.
  int noise_chunk_length = ColoredNoiseBank::kDefaultChunkLength;
  std::vector<int> hidden_sizes{64, 64};
  bool clip_value_function = false;
  bool normalize_observations = false;

  // Evaluation schedule during training.
  long long eval_every = 5120;
  int n_eval_episodes = 20;
  bool eval_stochastic = false;

  void validate() const;  // throws InvalidArgument naming the offending field
  long long update_size() const {
    return static_cast<long long>(n_envs) * n_steps;
  }
  // total_timesteps is consumed in whole updates
  long long n_updates() const {
    return (total_timesteps + update_size() - 1) / update_size();
  }
};

// One update's worth of transitions. Scalar series are [n_steps, n_envs]
// matrices; vector series are [dim, n_steps*n_envs] with column t*n_envs + i.
struct RolloutBatch {
  int n_steps = 0;
  int n_envs = 0;
  Matrix observations;  // as the policy saw them (post-normalization if any)
  Matrix actions;       // pre-clip actions the log-probs refer to
  Matrix epsilons;
  Matrix log_probs;
  Matrix rewards;  // time-limit bootstrap folded in at truncation steps
  Matrix values;
  Matrix advantages;
  Matrix returns;
  Matrix episode_starts;  // [n_steps+1, n_envs]; row n_steps covers the post-batch state
  Vector last_values;     // [n_envs] value of the post-batch observation
  std::vector<double> completed_episode_returns;

  int flat_index(int t, int i) const { return t * n_envs + i; }
};

// Carries the live observation per env (and whether it begins an episode)
// across rollout boundaries, so episodes can straddle updates.
struct RolloutState {
  std::vector<Vector> obs;
  std::vector<std::uint8_t> episode_start;

  static RolloutState init(VecEnv& vec, ObsNormalizer* normalizer = nullptr);
};

// Optional replacement for the noise bank: one standard-normal draw per
// (env, action dim) per step. Lets callers plug an alternative exploration
// process (e.g. plain i.i.d. sampling) without touching the rollout loop.
using EpsilonSource = std::function<double(int env, int dim)>;

RolloutBatch collect_rollout(const GaussianPolicy& policy, VecEnv& vec,
                             ColoredNoiseBank& bank, int n_steps, double gamma,
                             RolloutState& state, ObsNormalizer* normalizer = nullptr,
                             const EpsilonSource& epsilon_override = {});

struct GaeResult {
  Matrix advantages;
  Matrix returns;
};

// delta_t = r_t + gamma*V_{t+1}*(1-boundary) - V_t, accumulated with
// gamma*lambda decay; any episode boundary (terminal or truncation) cuts both
// the bootstrap and the advantage chain, and last_values stands in for
// V_{T} where the batch simply ran out of window.
GaeResult compute_gae(const Matrix& rewards, const Matrix& values,
                      const Matrix& episode_starts, const Vector& last_values,
                      double gamma, double gae_lambda);

struct Minibatch {
  Matrix observations;   // [obs_dim, B]
  Matrix actions;        // [act_dim, B]
  Vector old_log_probs;  // [B]
  Vector advantages;     // [B], normalized by the caller
  Vector returns;        // [B]
  Vector old_values;     // [B], consulted when value clipping is on
};

// In-place (x - mean)/(std + 1e-8) with the sample std; single-element
// batches become zero.
void normalize_advantages(Vector& advantages);

struct PpoLossOptions {
  double clip_range = 0.2;
  double ent_coef = 0.0;
  double vf_coef = 0.5;
  bool clip_value_function = false;
};

struct PpoLossResult {
  double loss = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
};

// Clipped-surrogate loss; when grad is non-null it receives d(loss)/d(params)
// in the flat policy layout.
PpoLossResult ppo_loss(const GaussianPolicy& policy, const Minibatch& minibatch,
                       const PpoLossOptions& options, Vector* grad = nullptr);

struct TrainLogRecord {
  int update_index = 0;
  long long global_step = 0;
  double mean_episode_return = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
};

struct TrainHooks {
  std::function<void(const TrainLogRecord&)> on_update;
  std::function<void(const EvalPoint&)> on_eval;
  EpsilonSource epsilon_source;  // when set, used instead of the noise bank
};

struct TrainResult {
  GaussianPolicy policy;
  EvalCurve eval_curve;
  std::vector<TrainLogRecord> log;
  long long global_steps = 0;
  ObsNormalizer normalizer{1};
  bool normalizer_active = false;
};

TrainResult train(const PpoConfig& config, const std::string& env_name,
                  const TrainHooks& hooks = {});

}  // namespace cnppo
