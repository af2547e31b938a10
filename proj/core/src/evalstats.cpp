#include "cnppo/evalstats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "cnppo/errors.hpp"
#include "cnppo/special.hpp"

namespace cnppo {

namespace {

double mean_of(const std::vector<double>& xs) {
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_variance(const std::vector<double>& xs, double mean) {
  double s = 0.0;
  for (double x : xs) s += (x - mean) * (x - mean);
  return s / static_cast<double>(xs.size() - 1);
}

}  // namespace

double performance(const EvalCurve& curve) {
  if (curve.points.empty()) throw InvalidArgument("performance: empty eval curve");
  double total = 0.0;
  for (const EvalPoint& p : curve.points) {
    if (p.episode_returns.empty())
      throw InvalidArgument("performance: eval point has no episodes");
    total += mean_of(p.episode_returns);
  }
  return total / static_cast<double>(curve.points.size());
}

SweepResult standardize(const std::vector<PerformanceRecord>& records) {
  if (records.empty()) throw InvalidArgument("standardize: no records");
  std::map<std::string, std::vector<double>> by_env;
  for (const PerformanceRecord& r : records) by_env[r.env].push_back(r.performance);
  SweepResult out;
  for (const auto& [env, xs] : by_env) {
    if (xs.size() < 2)
      throw InvalidArgument("standardize: env group '" + env + "' needs at least 2 records");
    const double mean = mean_of(xs);
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= static_cast<double>(xs.size());
    const double sd = std::sqrt(var);
    if (sd == 0.0)
      throw InvalidArgument("standardize: env group '" + env + "' has zero variance");
    out.group_stats[env] = GroupStats{mean, sd};
  }
  out.records = records;
  for (PerformanceRecord& r : out.records) {
    const GroupStats& g = out.group_stats.at(r.env);
    r.standardized_performance = (r.performance - g.mean) / g.stddev;
  }
  return out;
}

namespace {

std::vector<double> bootstrap_means(const std::vector<double>& samples, Rng& rng,
                                    int n_resamples) {
  const int n = static_cast<int>(samples.size());
  std::vector<double> boot(static_cast<size_t>(n_resamples));
  for (int b = 0; b < n_resamples; ++b) {
    double s = 0.0;
    for (int i = 0; i < n; ++i)
      s += samples[static_cast<size_t>(rng.uniform_int(static_cast<std::uint64_t>(n)))];
    boot[static_cast<size_t>(b)] = s / n;
  }
  std::sort(boot.begin(), boot.end());
  return boot;
}

double sorted_quantile(const std::vector<double>& sorted, double level) {
  const auto n = static_cast<long long>(sorted.size());
  long long idx = static_cast<long long>(std::floor(level * static_cast<double>(n)));
  idx = std::clamp(idx, 0LL, n - 1);
  return sorted[static_cast<size_t>(idx)];
}

void check_bootstrap_args(const std::vector<double>& samples, int n_resamples,
                          double confidence) {
  if (samples.size() < 10)
    throw InvalidArgument("bootstrap: need at least 10 samples");
  if (n_resamples < 100) throw InvalidArgument("bootstrap: need at least 100 resamples");
  if (!(confidence > 0.0 && confidence < 1.0))
    throw InvalidArgument("bootstrap: confidence must be in (0,1)");
}

}  // namespace

ConfidenceInterval bootstrap_ci_bca(const std::vector<double>& samples, Rng& rng,
                                    int n_resamples, double confidence) {
  check_bootstrap_args(samples, n_resamples, confidence);
  const int n = static_cast<int>(samples.size());
  const double theta_hat = mean_of(samples);
  const bool all_equal =
      std::all_of(samples.begin(), samples.end(),
                  [&](double x) { return x == samples.front(); });
  if (all_equal) return ConfidenceInterval{theta_hat, theta_hat};

  const std::vector<double> boot = bootstrap_means(samples, rng, n_resamples);

  // Bias correction from the bootstrap distribution's position relative to
  // the point estimate.
  double below = 0.0;
  for (double b : boot)
    if (b < theta_hat) below += 1.0;
  double frac = below / static_cast<double>(n_resamples);
  frac = std::clamp(frac, 0.5 / n_resamples, 1.0 - 0.5 / n_resamples);
  const double z0 = normal_quantile(frac);

  // Acceleration from jackknife skewness.
  const double total = theta_hat * n;
  std::vector<double> jack(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    jack[static_cast<size_t>(i)] = (total - samples[static_cast<size_t>(i)]) / (n - 1);
  const double jack_mean = mean_of(jack);
  double d2 = 0.0, d3 = 0.0;
  for (double j : jack) {
    const double d = jack_mean - j;
    d2 += d * d;
    d3 += d * d * d;
  }
  const double accel = (d2 > 0.0) ? d3 / (6.0 * std::pow(d2, 1.5)) : 0.0;

  const double alpha = 1.0 - confidence;
  auto adjusted_level = [&](double z_alpha) {
    const double znum = z0 + z_alpha;
    const double denom = 1.0 - accel * znum;
    if (denom <= 0.0) return z_alpha < 0.0 ? 0.0 : 1.0;
    return normal_cdf(z0 + znum / denom);
  };
  const double lo_level = adjusted_level(normal_quantile(alpha / 2.0));
  const double hi_level = adjusted_level(normal_quantile(1.0 - alpha / 2.0));
  ConfidenceInterval ci{sorted_quantile(boot, lo_level), sorted_quantile(boot, hi_level)};
  if (ci.low > ci.high) std::swap(ci.low, ci.high);
  return ci;
}

ConfidenceInterval bootstrap_ci_percentile(const std::vector<double>& samples, Rng& rng,
                                           int n_resamples, double confidence) {
  check_bootstrap_args(samples, n_resamples, confidence);
  const std::vector<double> boot = bootstrap_means(samples, rng, n_resamples);
  const double alpha = 1.0 - confidence;
  return ConfidenceInterval{sorted_quantile(boot, alpha / 2.0),
                            sorted_quantile(boot, 1.0 - alpha / 2.0)};
}

WelchResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  const auto na = static_cast<double>(a.size());
  const auto nb = static_cast<double>(b.size());
  if (a.size() < 2 || b.size() < 2)
    throw InvalidArgument("welch_t_test: each group needs at least 2 samples");
  const double ma = mean_of(a);
  const double mb = mean_of(b);
  const double va = sample_variance(a, ma);
  const double vb = sample_variance(b, mb);
  if (va == 0.0 && vb == 0.0) {
    if (ma == mb) return WelchResult{0.0, na + nb - 2.0, 1.0};
    throw InvalidArgument("welch_t_test: both groups have zero variance with unequal means");
  }
  const double sea = va / na;
  const double seb = vb / nb;
  const double se2 = sea + seb;
  const double t = (ma - mb) / std::sqrt(se2);
  const double df = se2 * se2 / (sea * sea / (na - 1.0) + seb * seb / (nb - 1.0));
  return WelchResult{t, df, student_t_two_sided_p(t, df)};
}

namespace {

// env -> beta -> standardized samples (one per seed, pooled over n_envs)
using CellMap = std::map<std::string, std::map<double, std::vector<double>>>;

CellMap cells_by_env_beta(const SweepResult& sweep) {
  CellMap cells;
  for (const PerformanceRecord& r : sweep.records)
    cells[r.env][r.beta].push_back(r.standardized_performance);
  return cells;
}

}  // namespace

std::vector<BestBetaRow> best_beta_table(const SweepResult& sweep,
                                         const std::vector<double>& fixed_betas) {
  const CellMap cells = cells_by_env_beta(sweep);
  if (cells.empty()) throw InvalidArgument("best_beta_table: empty sweep");
  std::vector<std::string> missing;
  for (const auto& [env, by_beta] : cells) {
    for (double fb : fixed_betas)
      if (!by_beta.count(fb))
        missing.push_back(env + ": beta=" + std::to_string(fb) + " absent");
    for (const auto& [beta, xs] : by_beta)
      if (xs.size() < 2)
        missing.push_back(env + ": beta=" + std::to_string(beta) + " has <2 seeds");
  }
  if (!missing.empty()) {
    std::ostringstream msg;
    msg << "best_beta_table: incomplete data:";
    for (const std::string& m : missing) msg << "\n  " << m;
    throw MissingDataError(msg.str());
  }

  std::vector<BestBetaRow> table;
  for (const auto& [env, by_beta] : cells) {
    BestBetaRow row;
    row.env = env;
    double best_mean = -1e300;
    for (const auto& [beta, xs] : by_beta) {  // ascending beta: ties keep the smaller
      const double m = mean_of(xs);
      if (m > best_mean) {
        best_mean = m;
        row.beta_star = beta;
      }
    }
    const std::vector<double>& star = by_beta.at(row.beta_star);
    for (double fb : fixed_betas) {
      BetaComparison cmp;
      cmp.beta = fb;
      if (fb == row.beta_star) {
        cmp.p_value = 1.0;
      } else {
        cmp.p_value = welch_t_test(star, by_beta.at(fb)).p_two_sided;
      }
      cmp.outperformed = cmp.p_value < 0.05;
      row.comparisons.push_back(cmp);
    }
    table.push_back(std::move(row));
  }
  return table;
}

RankTable rank_within_group(const SweepResult& sweep) {
  if (sweep.records.empty()) throw InvalidArgument("rank_within_group: empty sweep");
  std::set<double> beta_set;
  std::set<int> n_set;
  for (const PerformanceRecord& r : sweep.records) {
    beta_set.insert(r.beta);
    n_set.insert(r.n_envs);
  }
  RankTable table;
  table.betas.assign(beta_set.begin(), beta_set.end());
  table.n_envs_list.assign(n_set.begin(), n_set.end());
  const int nb = static_cast<int>(table.betas.size());
  const int nn = static_cast<int>(table.n_envs_list.size());

  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(nb, nn);
  Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(nb, nn);
  for (const PerformanceRecord& r : sweep.records) {
    const int i = static_cast<int>(std::lower_bound(table.betas.begin(), table.betas.end(),
                                                    r.beta) -
                                   table.betas.begin());
    const int j = static_cast<int>(std::lower_bound(table.n_envs_list.begin(),
                                                    table.n_envs_list.end(), r.n_envs) -
                                   table.n_envs_list.begin());
    sums(i, j) += r.standardized_performance;
    counts(i, j) += 1;
  }
  std::vector<std::string> missing;
  for (int i = 0; i < nb; ++i)
    for (int j = 0; j < nn; ++j)
      if (counts(i, j) == 0)
        missing.push_back("beta=" + std::to_string(table.betas[static_cast<size_t>(i)]) +
                          ", n_envs=" +
                          std::to_string(table.n_envs_list[static_cast<size_t>(j)]));
  if (!missing.empty()) {
    std::ostringstream msg;
    msg << "rank_within_group: incomplete grid, missing cells:";
    for (const std::string& m : missing) msg << "\n  " << m;
    throw MissingDataError(msg.str());
  }

  table.mean_performance = sums.cwiseQuotient(counts.cast<double>());
  table.ranks.resize(nb, nn);
  for (int j = 0; j < nn; ++j) {
    std::vector<int> order(static_cast<size_t>(nb));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
      if (table.mean_performance(x, j) != table.mean_performance(y, j))
        return table.mean_performance(x, j) > table.mean_performance(y, j);
      return x < y;  // tie: smaller beta ranks ahead
    });
    for (int r = 0; r < nb; ++r) table.ranks(order[static_cast<size_t>(r)], j) = r + 1;
  }
  return table;
}

EMatrix predicted_best_beta(const std::function<double(double)>& bias_std_fn,
                            const std::vector<int>& n_envs_list,
                            const std::vector<double>& beta_list, double sigma_star) {
  if (n_envs_list.empty() || beta_list.empty())
    throw InvalidArgument("predicted_best_beta: empty grid");
  EMatrix out;
  out.betas = beta_list;
  out.n_envs_list = n_envs_list;
  std::sort(out.betas.begin(), out.betas.end());
  std::sort(out.n_envs_list.begin(), out.n_envs_list.end());
  const int nb = static_cast<int>(out.betas.size());
  const int nn = static_cast<int>(out.n_envs_list.size());
  std::vector<double> sigma(static_cast<size_t>(nb));
  for (int i = 0; i < nb; ++i) {
    sigma[static_cast<size_t>(i)] = bias_std_fn(out.betas[static_cast<size_t>(i)]);
    if (!(sigma[static_cast<size_t>(i)] >= 0.0))
      throw InvalidArgument("predicted_best_beta: bias std must be nonnegative");
  }
  out.degenerate = std::all_of(sigma.begin(), sigma.end(),
                               [&](double s) { return s == sigma.front(); });
  out.e.resize(nb, nn);
  for (int j = 0; j < nn; ++j) {
    const double root_n = std::sqrt(static_cast<double>(out.n_envs_list[static_cast<size_t>(j)]));
    int best = 0;
    for (int i = 0; i < nb; ++i) {
      const double pooled = sigma[static_cast<size_t>(i)] / root_n;
      out.e(i, j) = (sigma_star - pooled) * (sigma_star - pooled);
      if (out.e(i, j) < out.e(best, j)) best = i;
    }
    out.predicted_best_beta.push_back(out.betas[static_cast<size_t>(best)]);
  }
  return out;
}

double estimate_sigma_star(const SweepResult& sweep,
                           const std::function<double(double)>& bias_std_fn) {
  if (sweep.records.empty()) throw InvalidArgument("estimate_sigma_star: empty sweep");
  // n_envs -> beta -> standardized samples
  std::map<int, std::map<double, std::vector<double>>> cells;
  for (const PerformanceRecord& r : sweep.records)
    cells[r.n_envs][r.beta].push_back(r.standardized_performance);
  double total = 0.0;
  for (const auto& [n, by_beta] : cells) {
    double best_beta = 0.0;
    double best_mean = -1e300;
    for (const auto& [beta, xs] : by_beta) {
      const double m = mean_of(xs);
      if (m > best_mean) {
        best_mean = m;
        best_beta = beta;
      }
    }
    total += bias_std_fn(best_beta) / std::sqrt(static_cast<double>(n));
  }
  return total / static_cast<double>(cells.size());
}

std::vector<double> evaluate_policy(const GaussianPolicy& policy, Env& env,
                                    int n_episodes, EvalMode mode, Rng& rng,
                                    const ObsNormalizer* normalizer) {
  if (n_episodes <= 0) throw InvalidArgument("evaluate_policy: n_episodes must be positive");
  const EnvSpec& sp = env.spec();
  const Vector sigma = policy.sigma();
  std::vector<double> returns;
  returns.reserve(static_cast<size_t>(n_episodes));
  for (int ep = 0; ep < n_episodes; ++ep) {
    Vector obs = env.reset(rng);
    double total = 0.0;
    bool terminated = false;
    for (int t = 0; t < sp.max_episode_steps && !terminated; ++t) {
      const Vector x = normalizer ? normalizer->normalize(obs) : obs;
      Vector action = policy.mean_net.forward1(x);
      if (mode == EvalMode::kStochastic)
        for (int d = 0; d < action.size(); ++d) action(d) += sigma(d) * rng.normal();
      if (!action.allFinite())
        throw InvalidArgument("evaluate_policy: policy produced non-finite action");
      const Vector clipped = action.cwiseMax(sp.action_low).cwiseMin(sp.action_high);
      double reward = 0.0;
      env.step(clipped, obs, reward, terminated);
      total += reward;
    }
    returns.push_back(total);
  }
  return returns;
}

double ks_statistic_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty())
    throw InvalidArgument("ks_statistic_two_sample: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

double ks_statistic_uniform(std::vector<double> x) {
  if (x.empty()) throw InvalidArgument("ks_statistic_uniform: empty sample");
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    d = std::max(d, std::abs(x[i] - static_cast<double>(i) / n));
    d = std::max(d, std::abs(x[i] - static_cast<double>(i + 1) / n));
  }
  return d;
}

namespace {

double ks_scale(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw InvalidArgument("ks critical value: alpha must be in (0,1)");
  return std::sqrt(-0.5 * std::log(alpha / 2.0));
}

}  // namespace

double ks_two_sample_critical(std::size_t n, std::size_t m, double alpha) {
  const double dn = static_cast<double>(n);
  const double dm = static_cast<double>(m);
  return ks_scale(alpha) * std::sqrt((dn + dm) / (dn * dm));
}

double ks_one_sample_critical(std::size_t n, double alpha) {
  return ks_scale(alpha) / std::sqrt(static_cast<double>(n));
}

}  // namespace cnppo
