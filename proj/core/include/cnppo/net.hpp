#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "cnppo/rng.hpp"

namespace cnppo {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Dense network with tanh hidden activations and a linear output layer.
// Batches are column-major: x is [input_dim, batch].
struct MlpCache {
  Matrix input;
  std::vector<Matrix> hidden;  // post-tanh activation per hidden layer
};

struct MlpGrad {
  std::vector<Matrix> d_weights;
  std::vector<Vector> d_biases;
};

struct Mlp {
  std::vector<Matrix> weights;  // weights[l] is [sizes[l+1], sizes[l]]
  std::vector<Vector> biases;

  // Orthogonal init, gain sqrt(2) on hidden layers and final_gain on the
  // output layer; biases start at zero.
  static Mlp create(const std::vector<int>& layer_sizes, Rng& rng, double final_gain);

  Matrix forward(const Matrix& x, MlpCache* cache = nullptr) const;
  Vector forward1(const Vector& x) const;

  // Reverse pass for d(loss)/d(output) = dy, filling parameter gradients.
  MlpGrad backward(const MlpCache& cache, const Matrix& dy) const;

  int input_dim() const { return static_cast<int>(weights.front().cols()); }
  int output_dim() const { return static_cast<int>(weights.back().rows()); }
  int n_layers() const { return static_cast<int>(weights.size()); }
  int param_count() const;
};

// Diagonal-Gaussian actor plus value critic. log_std is a free parameter
// vector (state independent).
struct GaussianPolicy {
  Mlp mean_net;
  Vector log_std;
  Mlp value_net;

  static GaussianPolicy create(int obs_dim, int action_dim,
                               const std::vector<int>& hidden_sizes, Rng& rng);

  int obs_dim() const { return mean_net.input_dim(); }
  int action_dim() const { return mean_net.output_dim(); }

  // mu = mean_net(obs), sigma = exp(log_std), value = value_net(obs)
  void forward(const Vector& obs, Vector& mu, Vector& sigma, double& value) const;
  Vector sigma() const;
};

struct ActionSample {
  Vector action;
  double log_prob = 0.0;
};

// action = mu + epsilon .* sigma; log_prob is the per-step diagonal Gaussian
// density of that action (temporal correlation of epsilon is deliberately
// ignored).
ActionSample sample_action(const Vector& mu, const Vector& sigma, const Vector& epsilon);

double gaussian_log_prob(const Vector& action, const Vector& mu, const Vector& sigma);

// sum_d [0.5 + 0.5 log(2 pi) + log sigma_d]
double gaussian_entropy(const Vector& sigma);

// Flat parameter plumbing: all parameters of a policy concatenated in a fixed
// order (mean_net layer by layer, weights row-major then bias; log_std;
// value_net likewise). The optimizer and checkpoints work on this vector.
int policy_param_count(const GaussianPolicy& p);
Vector policy_get_params(const GaussianPolicy& p);
void policy_set_params(GaussianPolicy& p, const Vector& flat);

// Running per-element observation whitening (Welford). Off by default in
// training; when enabled its state travels with the checkpoint metadata so
// evaluation sees the same inputs.
struct ObsNormalizer {
  Vector mean;
  Vector m2;
  long long count = 0;

  explicit ObsNormalizer(int dim)
      : mean(Vector::Zero(dim)), m2(Vector::Zero(dim)) {}

  void update(const Vector& x);
  Vector normalize(const Vector& x) const;  // clipped to +-10
  Vector variance() const;
};

// Adam with global gradient-norm clipping applied before the moment update.
struct OptimizerState {
  Vector first_moment;
  Vector second_moment;
  long long step_count = 0;
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static OptimizerState create(int n_params, double learning_rate);
};

void optimizer_step(OptimizerState& state, Vector& params, Vector gradients,
                    double max_grad_norm);

// Plain-text JSON checkpoint with a format-version header; layout documented
// in the repository README. metadata carries free-form key/value strings
// (env name, noise color, normalizer state, ...).
void save_checkpoint(const std::string& path, const GaussianPolicy& policy,
                     const std::map<std::string, std::string>& metadata);
GaussianPolicy load_checkpoint(const std::string& path,
                               std::map<std::string, std::string>* metadata = nullptr);

}  // namespace cnppo
