#include "cnppo/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cnppo/errors.hpp"

namespace cnppo {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void require(bool ok, const char* message) {
  if (!ok) throw InvalidArgument(message);
}

}  // namespace

void PpoConfig::validate() const {
  require(n_envs > 0, "PpoConfig.n_envs must be positive");
  require(n_steps > 0, "PpoConfig.n_steps must be positive");
  require(n_epochs > 0, "PpoConfig.n_epochs must be positive");
  require(minibatch_size > 0, "PpoConfig.minibatch_size must be positive");
  require(minibatch_size <= n_envs * n_steps,
          "PpoConfig.minibatch_size must not exceed the update size");
  require(gamma > 0.0 && gamma <= 1.0, "PpoConfig.gamma must be in (0,1]");
  require(gae_lambda >= 0.0 && gae_lambda <= 1.0,
          "PpoConfig.gae_lambda must be in [0,1]");
  require(clip_range > 0.0, "PpoConfig.clip_range must be positive");
  require(ent_coef >= 0.0, "PpoConfig.ent_coef must be nonnegative");
  require(vf_coef >= 0.0, "PpoConfig.vf_coef must be nonnegative");
  require(max_grad_norm > 0.0, "PpoConfig.max_grad_norm must be positive");
  require(learning_rate > 0.0, "PpoConfig.learning_rate must be positive");
  require(total_timesteps > 0, "PpoConfig.total_timesteps must be positive");
  require(std::isfinite(noise_beta) && noise_beta >= 0.0,
          "PpoConfig.noise_beta must be finite and nonnegative");
  require(noise_chunk_length >= 2, "PpoConfig.noise_chunk_length must be at least 2");
  require(!hidden_sizes.empty(), "PpoConfig.hidden_sizes must not be empty");
  for (int h : hidden_sizes)
    require(h > 0, "PpoConfig.hidden_sizes entries must be positive");
  require(eval_every > 0, "PpoConfig.eval_every must be positive");
  require(n_eval_episodes > 0, "PpoConfig.n_eval_episodes must be positive");
}

RolloutState RolloutState::init(VecEnv& vec, ObsNormalizer* normalizer) {
  RolloutState state;
  state.obs = vec.reset_all();
  if (normalizer)
    for (const Vector& o : state.obs) normalizer->update(o);
  state.episode_start.assign(state.obs.size(), 1);
  return state;
}

RolloutBatch collect_rollout(const GaussianPolicy& policy, VecEnv& vec,
                             ColoredNoiseBank& bank, int n_steps, double gamma,
                             RolloutState& state, ObsNormalizer* normalizer,
                             const EpsilonSource& epsilon_override) {
  require(n_steps > 0, "collect_rollout: n_steps must be positive");
  const int n_envs = vec.n_envs();
  const EnvSpec& sp = vec.spec();
  if (bank.n_envs() != n_envs || bank.action_dim() != sp.action_dim)
    throw ShapeError("collect_rollout: noise bank dimensions do not match the envs");
  if (static_cast<int>(state.obs.size()) != n_envs)
    throw ShapeError("collect_rollout: rollout state does not match the envs");

  RolloutBatch batch;
  batch.n_steps = n_steps;
  batch.n_envs = n_envs;
  const int total = n_steps * n_envs;
  batch.observations.resize(sp.obs_dim, total);
  batch.actions.resize(sp.action_dim, total);
  batch.epsilons.resize(sp.action_dim, total);
  batch.log_probs.resize(n_steps, n_envs);
  batch.rewards.resize(n_steps, n_envs);
  batch.values.resize(n_steps, n_envs);
  batch.episode_starts.resize(n_steps + 1, n_envs);
  batch.last_values.resize(n_envs);

  const Vector sigma = policy.sigma();
  if (!sigma.allFinite())
    throw TrainingAborted("collect_rollout: non-finite policy scale");

  std::vector<Vector> actions(static_cast<size_t>(n_envs));
  for (int t = 0; t < n_steps; ++t) {
    for (int i = 0; i < n_envs; ++i) {
      const Vector x =
          normalizer ? normalizer->normalize(state.obs[static_cast<size_t>(i)])
                     : state.obs[static_cast<size_t>(i)];
      const Vector mu = policy.mean_net.forward1(x);
      const double value = policy.value_net.forward1(x)(0);
      if (!mu.allFinite() || !std::isfinite(value))
        throw TrainingAborted("collect_rollout: non-finite policy output");
      Vector eps(sp.action_dim);
      for (int d = 0; d < sp.action_dim; ++d)
        eps(d) = epsilon_override ? epsilon_override(i, d) : bank.next_noise(i, d);
      const ActionSample sample = sample_action(mu, sigma, eps);

      const int col = batch.flat_index(t, i);
      batch.observations.col(col) = x;
      batch.actions.col(col) = sample.action;
      batch.epsilons.col(col) = eps;
      batch.log_probs(t, i) = sample.log_prob;
      batch.values(t, i) = value;
      batch.episode_starts(t, i) = state.episode_start[static_cast<size_t>(i)] ? 1.0 : 0.0;
      actions[static_cast<size_t>(i)] = sample.action;
    }
    const std::vector<StepRecord> records = vec.step_all(actions);
    for (int i = 0; i < n_envs; ++i) {
      const StepRecord& rec = records[static_cast<size_t>(i)];
      double reward = rec.reward;
      if (rec.truncated) {
        // The episode was cut by the time limit, not by the task: fold the
        // discounted value of the true final state into the reward so GAE
        // can treat the boundary as hard.
        const Vector fx = normalizer ? normalizer->normalize(rec.final_obs) : rec.final_obs;
        reward += gamma * policy.value_net.forward1(fx)(0);
      }
      batch.rewards(t, i) = reward;
      if (rec.terminated || rec.truncated)
        batch.completed_episode_returns.push_back(rec.final_episode_return);
      if (normalizer) normalizer->update(rec.obs);
      state.obs[static_cast<size_t>(i)] = rec.obs;
      state.episode_start[static_cast<size_t>(i)] =
          (rec.terminated || rec.truncated) ? 1 : 0;
    }
  }
  for (int i = 0; i < n_envs; ++i) {
    batch.episode_starts(n_steps, i) =
        state.episode_start[static_cast<size_t>(i)] ? 1.0 : 0.0;
    const Vector x = normalizer ? normalizer->normalize(state.obs[static_cast<size_t>(i)])
                                : state.obs[static_cast<size_t>(i)];
    batch.last_values(i) = policy.value_net.forward1(x)(0);
  }
  return batch;
}

GaeResult compute_gae(const Matrix& rewards, const Matrix& values,
                      const Matrix& episode_starts, const Vector& last_values,
                      double gamma, double gae_lambda) {
  const int n_steps = static_cast<int>(rewards.rows());
  const int n_envs = static_cast<int>(rewards.cols());
  if (values.rows() != n_steps || values.cols() != n_envs)
    throw ShapeError("compute_gae: values shape mismatch");
  if (episode_starts.rows() != n_steps + 1 || episode_starts.cols() != n_envs)
    throw ShapeError("compute_gae: episode_starts must be [n_steps+1, n_envs]");
  if (last_values.size() != n_envs)
    throw ShapeError("compute_gae: last_values length mismatch");

  GaeResult out;
  out.advantages = Matrix::Zero(n_steps, n_envs);
  for (int i = 0; i < n_envs; ++i) {
    double running = 0.0;
    for (int t = n_steps - 1; t >= 0; --t) {
      const double next_non_boundary = 1.0 - episode_starts(t + 1, i);
      const double next_value = (t == n_steps - 1) ? last_values(i) : values(t + 1, i);
      const double delta =
          rewards(t, i) + gamma * next_value * next_non_boundary - values(t, i);
      running = delta + gamma * gae_lambda * next_non_boundary * running;
      out.advantages(t, i) = running;
    }
  }
  out.returns = out.advantages + values;
  return out;
}

void normalize_advantages(Vector& advantages) {
  const auto n = advantages.size();
  if (n == 0) throw ShapeError("normalize_advantages: empty vector");
  const double mean = advantages.mean();
  advantages.array() -= mean;
  if (n == 1) return;
  const double std =
      std::sqrt(advantages.squaredNorm() / static_cast<double>(n - 1));
  advantages /= std + 1e-8;
}

PpoLossResult ppo_loss(const GaussianPolicy& policy, const Minibatch& mb,
                       const PpoLossOptions& opt, Vector* grad) {
  const int batch = static_cast<int>(mb.observations.cols());
  require(batch > 0, "ppo_loss: empty minibatch");
  const int act_dim = policy.action_dim();
  if (mb.actions.cols() != batch || mb.old_log_probs.size() != batch ||
      mb.advantages.size() != batch || mb.returns.size() != batch)
    throw ShapeError("ppo_loss: minibatch arrays disagree on batch size");
  if (mb.actions.rows() != act_dim)
    throw ShapeError("ppo_loss: action dimension mismatch");
  if (opt.clip_value_function && mb.old_values.size() != batch)
    throw ShapeError("ppo_loss: value clipping needs old_values");

  MlpCache mean_cache, value_cache;
  const Matrix mu = policy.mean_net.forward(mb.observations, grad ? &mean_cache : nullptr);
  const Matrix v = policy.value_net.forward(mb.observations, grad ? &value_cache : nullptr);
  const Vector sigma = policy.sigma();
  const double log_sigma_sum = policy.log_std.sum();

  // z-scores, fresh log-probs, ratios
  Matrix z(act_dim, batch);
  for (int j = 0; j < batch; ++j)
    z.col(j) = (mb.actions.col(j) - mu.col(j)).cwiseQuotient(sigma);
  Vector new_log_probs(batch);
  for (int j = 0; j < batch; ++j)
    new_log_probs(j) = -0.5 * (z.col(j).squaredNorm() + act_dim * kLog2Pi) - log_sigma_sum;
  const Vector log_ratio = new_log_probs - mb.old_log_probs;
  const Vector ratio = log_ratio.array().exp();

  PpoLossResult res;
  const double inv_b = 1.0 / batch;
  Vector d_logp = Vector::Zero(batch);  // d(loss)/d(new_log_prob)
  double policy_sum = 0.0, kl_sum = 0.0;
  int clipped_count = 0;
  for (int j = 0; j < batch; ++j) {
    const double a = mb.advantages(j);
    const double r = ratio(j);
    const double clipped_r = std::clamp(r, 1.0 - opt.clip_range, 1.0 + opt.clip_range);
    const double surr1 = r * a;
    const double surr2 = clipped_r * a;
    policy_sum += std::min(surr1, surr2);
    if (surr1 <= surr2) d_logp(j) = -inv_b * a * r;
    kl_sum += (r - 1.0) - log_ratio(j);
    if (std::abs(r - 1.0) > opt.clip_range) ++clipped_count;
  }
  res.policy_loss = -policy_sum * inv_b;
  res.approx_kl = kl_sum * inv_b;
  res.clip_fraction = static_cast<double>(clipped_count) * inv_b;

  Vector v_err(batch);
  Vector v_gate = Vector::Ones(batch);  // 0 where the value clamp is saturated
  for (int j = 0; j < batch; ++j) {
    double pred = v(0, j);
    if (opt.clip_value_function) {
      const double delta = pred - mb.old_values(j);
      if (std::abs(delta) > opt.clip_range) {
        pred = mb.old_values(j) + std::clamp(delta, -opt.clip_range, opt.clip_range);
        v_gate(j) = 0.0;
      }
    }
    v_err(j) = pred - mb.returns(j);
  }
  res.value_loss = v_err.squaredNorm() * inv_b;
  res.entropy = 0.5 * act_dim * (1.0 + kLog2Pi) + log_sigma_sum;
  res.loss = res.policy_loss + opt.vf_coef * res.value_loss - opt.ent_coef * res.entropy;
  if (!std::isfinite(res.loss))
    throw TrainingAborted("ppo_loss: non-finite loss");

  if (grad) {
    // Mean head: d(logp)/d(mu_d) = z_d / sigma_d.
    Matrix d_mu(act_dim, batch);
    for (int j = 0; j < batch; ++j)
      d_mu.col(j) = d_logp(j) * z.col(j).cwiseQuotient(sigma);
    const MlpGrad mean_grad = policy.mean_net.backward(mean_cache, d_mu);

    // log_std: d(logp)/d(log_sigma_d) = z_d^2 - 1, plus the entropy term.
    Vector d_log_std = Vector::Constant(act_dim, -opt.ent_coef);
    for (int j = 0; j < batch; ++j)
      d_log_std += d_logp(j) * (z.col(j).array().square() - 1.0).matrix();

    Matrix d_v(1, batch);
    for (int j = 0; j < batch; ++j)
      d_v(0, j) = 2.0 * opt.vf_coef * v_err(j) * v_gate(j) * inv_b;
    const MlpGrad value_grad = policy.value_net.backward(value_cache, d_v);

    grad->resize(policy_param_count(policy));
    int pos = 0;
    auto pack = [&](const MlpGrad& g) {
      for (size_t l = 0; l < g.d_weights.size(); ++l) {
        const Matrix& w = g.d_weights[l];
        for (int i = 0; i < w.rows(); ++i)
          for (int jj = 0; jj < w.cols(); ++jj) (*grad)(pos++) = w(i, jj);
        for (int i = 0; i < g.d_biases[l].size(); ++i)
          (*grad)(pos++) = g.d_biases[l](i);
      }
    };
    pack(mean_grad);
    for (int d = 0; d < act_dim; ++d) (*grad)(pos++) = d_log_std(d);
    pack(value_grad);
  }
  return res;
}

namespace {

Minibatch gather_minibatch(const RolloutBatch& batch, const std::vector<int>& indices,
                           int begin, int end) {
  const int b = end - begin;
  const int n = batch.n_envs;
  Minibatch mb;
  mb.observations.resize(batch.observations.rows(), b);
  mb.actions.resize(batch.actions.rows(), b);
  mb.old_log_probs.resize(b);
  mb.advantages.resize(b);
  mb.returns.resize(b);
  mb.old_values.resize(b);
  for (int k = 0; k < b; ++k) {
    const int flat = indices[static_cast<size_t>(begin + k)];
    const int t = flat / n;
    const int i = flat % n;
    mb.observations.col(k) = batch.observations.col(flat);
    mb.actions.col(k) = batch.actions.col(flat);
    mb.old_log_probs(k) = batch.log_probs(t, i);
    mb.advantages(k) = batch.advantages(t, i);
    mb.returns(k) = batch.returns(t, i);
    mb.old_values(k) = batch.values(t, i);
  }
  return mb;
}

}  // namespace

TrainResult train(const PpoConfig& config, const std::string& env_name,
                  const TrainHooks& hooks) {
  config.validate();
  const Rng root(config.seed);
  Rng init_rng = root.fork(0);
  const Rng bank_rng = root.fork(1);
  const Rng env_rng = root.fork(2);
  Rng shuffle_rng = root.fork(3);
  const Rng eval_rng = root.fork(4);

  VecEnv vec(env_name, config.n_envs, env_rng);
  const EnvSpec& sp = vec.spec();
  GaussianPolicy policy =
      GaussianPolicy::create(sp.obs_dim, sp.action_dim, config.hidden_sizes, init_rng);
  ColoredNoiseBank bank(config.n_envs, sp.action_dim, NoiseColor(config.noise_beta),
                        config.noise_chunk_length, bank_rng);
  Vector params = policy_get_params(policy);
  OptimizerState optimizer =
      OptimizerState::create(static_cast<int>(params.size()), config.learning_rate);

  TrainResult result;
  result.normalizer = ObsNormalizer(sp.obs_dim);
  result.normalizer_active = config.normalize_observations;
  ObsNormalizer* normalizer = config.normalize_observations ? &result.normalizer : nullptr;

  RolloutState state = RolloutState::init(vec, normalizer);
  const std::unique_ptr<Env> eval_env = make_env(env_name);
  const PpoLossOptions loss_options{config.clip_range, config.ent_coef, config.vf_coef,
                                    config.clip_value_function};

  const long long n_updates = config.n_updates();
  const int total = config.n_steps * config.n_envs;
  std::vector<int> indices(static_cast<size_t>(total));
  long long global_step = 0;
  long long next_eval = config.eval_every;
  double last_mean_return = 0.0;

  for (long long update = 0; update < n_updates; ++update) {
    RolloutBatch batch = collect_rollout(policy, vec, bank, config.n_steps,
                                         config.gamma, state, normalizer,
                                         hooks.epsilon_source);
    const GaeResult gae =
        compute_gae(batch.rewards, batch.values, batch.episode_starts,
                    batch.last_values, config.gamma, config.gae_lambda);
    batch.advantages = gae.advantages;
    batch.returns = gae.returns;

    double policy_loss_sum = 0.0, value_loss_sum = 0.0, entropy_sum = 0.0;
    double kl_sum = 0.0, clip_sum = 0.0;
    int n_minibatches = 0;
    Vector grad;
    for (int epoch = 0; epoch < config.n_epochs; ++epoch) {
      std::iota(indices.begin(), indices.end(), 0);
      shuffle_rng.shuffle(indices);
      for (int begin = 0; begin < total; begin += config.minibatch_size) {
        const int end = std::min(begin + config.minibatch_size, total);
        Minibatch mb = gather_minibatch(batch, indices, begin, end);
        normalize_advantages(mb.advantages);
        const PpoLossResult res = ppo_loss(policy, mb, loss_options, &grad);
        optimizer_step(optimizer, params, grad, config.max_grad_norm);
        policy_set_params(policy, params);
        policy_loss_sum += res.policy_loss;
        value_loss_sum += res.value_loss;
        entropy_sum += res.entropy;
        kl_sum += res.approx_kl;
        clip_sum += res.clip_fraction;
        ++n_minibatches;
      }
    }

    global_step += config.update_size();
    if (!batch.completed_episode_returns.empty()) {
      double s = 0.0;
      for (double r : batch.completed_episode_returns) s += r;
      last_mean_return = s / static_cast<double>(batch.completed_episode_returns.size());
    }
    TrainLogRecord record;
    record.update_index = static_cast<int>(update);
    record.global_step = global_step;
    record.mean_episode_return = last_mean_return;
    record.policy_loss = policy_loss_sum / n_minibatches;
    record.value_loss = value_loss_sum / n_minibatches;
    record.entropy = entropy_sum / n_minibatches;
    record.approx_kl = kl_sum / n_minibatches;
    record.clip_fraction = clip_sum / n_minibatches;
    result.log.push_back(record);
    if (hooks.on_update) hooks.on_update(record);

    if (next_eval <= global_step) {
      // One evaluation per update serves every eval-grid point this update
      // crossed, keeping the grid uniform in steps across n_envs settings.
      Rng point_rng = eval_rng.fork(static_cast<std::uint64_t>(next_eval / config.eval_every));
      const std::vector<double> returns = evaluate_policy(
          policy, *eval_env, config.n_eval_episodes,
          config.eval_stochastic ? EvalMode::kStochastic : EvalMode::kDeterministicMean,
          point_rng, normalizer);
      while (next_eval <= global_step) {
        EvalPoint point;
        point.global_step = next_eval;
        point.episode_returns = returns;
        result.eval_curve.points.push_back(point);
        if (hooks.on_eval) hooks.on_eval(result.eval_curve.points.back());
        next_eval += config.eval_every;
      }
    }
  }
  result.policy = std::move(policy);
  result.global_steps = global_step;
  return result;
}

}  // namespace cnppo
