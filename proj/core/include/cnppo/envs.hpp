#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <vector>

#include "cnppo/rng.hpp"

namespace cnppo {

using Vector = Eigen::VectorXd;

enum class RewardStructure { kDense, kSparse };

struct EnvSpec {
  std::string name;
  int obs_dim = 0;
  int action_dim = 0;
  Vector action_low;
  Vector action_high;
  int max_episode_steps = 0;
  RewardStructure reward_structure = RewardStructure::kDense;
};

// Single closed-form environment. Actions arriving at step() are already
// clipped to the spec's bounds; termination here means a true terminal state,
// time limits are handled by VecEnv.
class Env {
 public:
  virtual ~Env() = default;
  virtual const EnvSpec& spec() const = 0;
  virtual Vector reset(Rng& rng) = 0;
  virtual void step(const Vector& action, Vector& obs, double& reward,
                    bool& terminated) = 0;
};

std::unique_ptr<Env> make_env(const std::string& name);
std::vector<std::string> builtin_env_names();

struct StepRecord {
  Vector obs;       // next observation; post-reset when the episode ended
  double reward = 0.0;
  bool terminated = false;  // true terminal state (bootstrap value 0)
  bool truncated = false;   // episode cut by the step limit
  Vector final_obs;         // the pre-reset observation when terminated or truncated
  double final_episode_return = 0.0;  // total return of the episode that just ended
};

// N copies of one environment with per-instance rng streams. Episodes
// auto-reset: after a terminal or truncated step the returned observation is
// the next episode's first one and the true final observation rides along.
class VecEnv {
 public:
  VecEnv(const std::string& env_name, int n_envs, const Rng& base_rng);

  const EnvSpec& spec() const { return envs_.front()->spec(); }
  int n_envs() const { return static_cast<int>(envs_.size()); }
  int episode_step_count(int env_index) const;
  double episode_return(int env_index) const;

  Vector reset(int env_index);
  std::vector<Vector> reset_all();

  // Clips actions to the spec bounds internally; throws on non-finite input.
  std::vector<StepRecord> step_all(const std::vector<Vector>& actions);

 private:
  std::vector<std::unique_ptr<Env>> envs_;
  std::vector<Rng> rngs_;
  std::vector<int> step_counts_;
  std::vector<double> returns_;
};

}  // namespace cnppo
