#include "cnppo/envs.hpp"

#include <algorithm>
#include <cmath>

#include "cnppo/errors.hpp"

namespace cnppo {

namespace {

// Torque-limited pendulum, angle measured from upright. Dense reward
// (1 + cos theta) / 2 in [0, 1], maximal when balanced.
class PendulumSwingup final : public Env {
 public:
  PendulumSwingup() {
    spec_.name = "pendulum-swingup";
    spec_.obs_dim = 3;
    spec_.action_dim = 1;
    spec_.action_low = Vector::Constant(1, -kMaxTorque);
    spec_.action_high = Vector::Constant(1, kMaxTorque);
    spec_.max_episode_steps = 200;
    spec_.reward_structure = RewardStructure::kDense;
  }

  const EnvSpec& spec() const override { return spec_; }

  Vector reset(Rng& rng) override {
    theta_ = kPi + rng.uniform(-0.1, 0.1);
    theta_dot_ = rng.uniform(-0.1, 0.1);
    return observation();
  }

  void step(const Vector& action, Vector& obs, double& reward, bool& terminated) override {
    const double u = action(0);
    theta_dot_ += (3.0 * kGravity / (2.0 * kLength) * std::sin(theta_) +
                   3.0 / (kMass * kLength * kLength) * u) *
                  kDt;
    theta_dot_ = std::clamp(theta_dot_, -kMaxSpeed, kMaxSpeed);
    theta_ += theta_dot_ * kDt;
    obs = observation();
    reward = (1.0 + std::cos(theta_)) / 2.0;
    terminated = false;
  }

 private:
  Vector observation() const {
    Vector obs(3);
    obs << std::cos(theta_), std::sin(theta_), theta_dot_ / kMaxSpeed;
    return obs;
  }

  static constexpr double kPi = 3.14159265358979323846;
  static constexpr double kGravity = 10.0;
  static constexpr double kMass = 1.0;
  static constexpr double kLength = 1.0;
  static constexpr double kDt = 0.05;
  static constexpr double kMaxTorque = 2.0;
  static constexpr double kMaxSpeed = 8.0;

  EnvSpec spec_;
  double theta_ = 0.0;
  double theta_dot_ = 0.0;
};

// Underpowered car in a valley: the engine alone cannot climb the right
// slope, so the car must rock back and forth to build momentum. Reward is a
// quadratic action cost plus a one-time goal bonus.
class ContinuousMountainCar final : public Env {
 public:
  ContinuousMountainCar() {
    spec_.name = "continuous-mountain-car";
    spec_.obs_dim = 2;
    spec_.action_dim = 1;
    spec_.action_low = Vector::Constant(1, -1.0);
    spec_.action_high = Vector::Constant(1, 1.0);
    spec_.max_episode_steps = 500;
    spec_.reward_structure = RewardStructure::kSparse;
  }

  const EnvSpec& spec() const override { return spec_; }

  Vector reset(Rng& rng) override {
    position_ = rng.uniform(-0.6, -0.4);
    velocity_ = 0.0;
    return observation();
  }

  void step(const Vector& action, Vector& obs, double& reward, bool& terminated) override {
    const double a = action(0);
    velocity_ += a * kPower - 0.0025 * std::cos(3.0 * position_);
    velocity_ = std::clamp(velocity_, -kMaxSpeed, kMaxSpeed);
    position_ += velocity_;
    if (position_ < kMinPosition) {
      position_ = kMinPosition;
      velocity_ = 0.0;
    }
    position_ = std::min(position_, kMaxPosition);
    terminated = position_ >= kGoalPosition;
    reward = -0.1 * a * a + (terminated ? 100.0 : 0.0);
    obs = observation();
  }

 private:
  Vector observation() const {
    Vector obs(2);
    obs << position_, velocity_;
    return obs;
  }

  static constexpr double kMinPosition = -1.2;
  static constexpr double kMaxPosition = 0.6;
  static constexpr double kMaxSpeed = 0.07;
  static constexpr double kGoalPosition = 0.45;
  static constexpr double kPower = 0.0015;

  EnvSpec spec_;
  double position_ = 0.0;
  double velocity_ = 0.0;
};

// Velocity-controlled point in a 3x3 box with a horizontal wall attached to
// the left edge; the goal sits on the other side of the wall, so the agent
// must travel around its free right end. Reward 1 only inside the goal
// radius, which ends the episode.
class SparsePointMaze final : public Env {
 public:
  SparsePointMaze() {
    spec_.name = "sparse-point-maze";
    spec_.obs_dim = 2;
    spec_.action_dim = 2;
    spec_.action_low = Vector::Constant(2, -1.0);
    spec_.action_high = Vector::Constant(2, 1.0);
    spec_.max_episode_steps = 250;
    spec_.reward_structure = RewardStructure::kSparse;
  }

  const EnvSpec& spec() const override { return spec_; }

  Vector reset(Rng& rng) override {
    x_ = kStartX + rng.uniform(-0.1, 0.1);
    y_ = kStartY + rng.uniform(-0.1, 0.1);
    return observation();
  }

  void step(const Vector& action, Vector& obs, double& reward, bool& terminated) override {
    double nx = x_ + action(0) * kDt;
    double ny = y_ + action(1) * kDt;
    // Axis-separated collision: a move is cancelled on the axis where it
    // would leave the box or enter the wall slab.
    if (nx < 0.0 || nx > kBoxSize || (nx <= kWallX && y_ >= kWallY0 && y_ <= kWallY1))
      nx = x_;
    if (ny < 0.0 || ny > kBoxSize || (nx <= kWallX && ny >= kWallY0 && ny <= kWallY1))
      ny = y_;
    x_ = nx;
    y_ = ny;
    const double dx = x_ - kGoalX;
    const double dy = y_ - kGoalY;
    terminated = dx * dx + dy * dy <= kGoalRadius * kGoalRadius;
    reward = terminated ? 1.0 : 0.0;
    obs = observation();
  }

 private:
  Vector observation() const {
    Vector obs(2);
    obs << x_ / (kBoxSize / 2.0) - 1.0, y_ / (kBoxSize / 2.0) - 1.0;
    return obs;
  }

  static constexpr double kBoxSize = 3.0;
  static constexpr double kDt = 0.12;
  static constexpr double kWallX = 2.0;   // wall spans x in [0, kWallX]
  static constexpr double kWallY0 = 1.35;
  static constexpr double kWallY1 = 1.65;
  static constexpr double kStartX = 0.5;
  static constexpr double kStartY = 0.5;
  static constexpr double kGoalX = 0.5;
  static constexpr double kGoalY = 2.5;
  static constexpr double kGoalRadius = 0.3;

  EnvSpec spec_;
  double x_ = 0.0;
  double y_ = 0.0;
};

}  // namespace

std::unique_ptr<Env> make_env(const std::string& name) {
  if (name == "pendulum-swingup") return std::make_unique<PendulumSwingup>();
  if (name == "continuous-mountain-car") return std::make_unique<ContinuousMountainCar>();
  if (name == "sparse-point-maze") return std::make_unique<SparsePointMaze>();
  throw InvalidArgument("unknown environment: " + name);
}

std::vector<std::string> builtin_env_names() {
  return {"pendulum-swingup", "continuous-mountain-car", "sparse-point-maze"};
}

VecEnv::VecEnv(const std::string& env_name, int n_envs, const Rng& base_rng) {
  if (n_envs <= 0) throw InvalidArgument("VecEnv: n_envs must be positive");
  for (int i = 0; i < n_envs; ++i) {
    envs_.push_back(make_env(env_name));
    rngs_.push_back(base_rng.fork(static_cast<std::uint64_t>(i)));
    step_counts_.push_back(0);
    returns_.push_back(0.0);
  }
}

int VecEnv::episode_step_count(int env_index) const {
  return step_counts_.at(env_index);
}

double VecEnv::episode_return(int env_index) const {
  return returns_.at(env_index);
}

Vector VecEnv::reset(int env_index) {
  if (env_index < 0 || env_index >= n_envs())
    throw InvalidArgument("VecEnv::reset: index out of range");
  step_counts_[env_index] = 0;
  returns_[env_index] = 0.0;
  return envs_[env_index]->reset(rngs_[env_index]);
}

std::vector<Vector> VecEnv::reset_all() {
  std::vector<Vector> obs;
  obs.reserve(envs_.size());
  for (int i = 0; i < n_envs(); ++i) obs.push_back(reset(i));
  return obs;
}

std::vector<StepRecord> VecEnv::step_all(const std::vector<Vector>& actions) {
  if (static_cast<int>(actions.size()) != n_envs())
    throw ShapeError("VecEnv::step_all: need one action per environment");
  const EnvSpec& sp = spec();
  std::vector<StepRecord> records(envs_.size());
  for (int i = 0; i < n_envs(); ++i) {
    const Vector& raw = actions[i];
    if (raw.size() != sp.action_dim)
      throw ShapeError("VecEnv::step_all: action has wrong dimension");
    if (!raw.allFinite())
      throw InvalidArgument("VecEnv::step_all: non-finite action");
    const Vector clipped = raw.cwiseMax(sp.action_low).cwiseMin(sp.action_high);
    StepRecord& rec = records[i];
    envs_[i]->step(clipped, rec.obs, rec.reward, rec.terminated);
    step_counts_[i] += 1;
    returns_[i] += rec.reward;
    rec.truncated = !rec.terminated && step_counts_[i] >= sp.max_episode_steps;
    if (rec.terminated || rec.truncated) {
      rec.final_obs = rec.obs;
      rec.final_episode_return = returns_[i];
      rec.obs = reset(i);
    }
  }
  return records;
}

}  // namespace cnppo
