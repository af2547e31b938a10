#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cnppo/envs.hpp"
#include "cnppo/net.hpp"
#include "cnppo/rng.hpp"

namespace cnppo {

struct EvalPoint {
  long long global_step = 0;
  std::vector<double> episode_returns;
};

struct EvalCurve {
  std::vector<EvalPoint> points;
};

// Area under the learning curve on the uniform eval grid: mean over eval
// points of the mean episode return at that point.
double performance(const EvalCurve& curve);

struct PerformanceRecord {
  std::string env;
  double beta = 0.0;
  int n_envs = 0;
  int seed = 0;
  double performance = 0.0;
  double final_return = 0.0;
  double standardized_performance = 0.0;  // filled by standardize
};

struct GroupStats {
  double mean = 0.0;
  double stddev = 0.0;  // population std
};

struct SweepResult {
  std::vector<PerformanceRecord> records;
  std::map<std::string, GroupStats> group_stats;  // keyed by env name
};

// Z-scores performance within each env group (population std) so that
// aggregates across envs weight every env equally.
SweepResult standardize(const std::vector<PerformanceRecord>& records);

struct ConfidenceInterval {
  double low = 0.0;
  double high = 0.0;
};

// Bias-corrected and accelerated bootstrap interval for the mean.
ConfidenceInterval bootstrap_ci_bca(const std::vector<double>& samples, Rng& rng,
                                    int n_resamples = 10000, double confidence = 0.95);

// Plain percentile bootstrap, kept as a cross-check for the BCa variant.
ConfidenceInterval bootstrap_ci_percentile(const std::vector<double>& samples, Rng& rng,
                                           int n_resamples = 10000,
                                           double confidence = 0.95);

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p_two_sided = 1.0;
};

WelchResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b);

struct BetaComparison {
  double beta = 0.0;
  double p_value = 1.0;
  bool outperformed = false;  // beta_star significantly better at the 0.05 level
};

struct BestBetaRow {
  std::string env;
  double beta_star = 0.0;
  std::vector<BetaComparison> comparisons;
};

std::vector<BestBetaRow> best_beta_table(
    const SweepResult& sweep, const std::vector<double>& fixed_betas = {0.0, 0.5, 1.0});

struct RankTable {
  std::vector<double> betas;      // ascending
  std::vector<int> n_envs_list;   // ascending
  Eigen::MatrixXd mean_performance;  // [beta, n_envs] mean standardized performance
  Eigen::MatrixXi ranks;             // [beta, n_envs], 1 = best within the column
};

// Ranks noise colors within each n_envs column by mean standardized
// performance pooled across envs and seeds. Requires a complete grid.
RankTable rank_within_group(const SweepResult& sweep);

struct EMatrix {
  std::vector<double> betas;
  std::vector<int> n_envs_list;
  Eigen::MatrixXd e;                        // (sigma_star - sigma(beta)/sqrt(N))^2
  std::vector<double> predicted_best_beta;  // argmin of each column
  bool degenerate = false;  // sigma(beta) constant: columns carry no ranking signal
};

// Bias-variance model of the optimal noise color: pooled exploration-bias
// spread sigma(beta)/sqrt(N) compared against a target level sigma_star.
EMatrix predicted_best_beta(const std::function<double(double)>& bias_std_fn,
                            const std::vector<int>& n_envs_list,
                            const std::vector<double>& beta_list, double sigma_star);

// Mean of sigma(beta_best(n))/sqrt(n) over the empirically best color per
// n_envs column of the sweep.
double estimate_sigma_star(const SweepResult& sweep,
                           const std::function<double(double)>& bias_std_fn);

enum class EvalMode { kDeterministicMean, kStochastic };

// Runs full episodes; deterministic mode plays the Gaussian mean action.
// Actions are clipped to the env bounds before stepping.
std::vector<double> evaluate_policy(const GaussianPolicy& policy, Env& env,
                                    int n_episodes, EvalMode mode, Rng& rng,
                                    const ObsNormalizer* normalizer = nullptr);

// Kolmogorov-Smirnov helpers used by the statistical self-checks.
double ks_statistic_two_sample(std::vector<double> a, std::vector<double> b);
double ks_statistic_uniform(std::vector<double> x);  // against U[0,1]
double ks_two_sample_critical(std::size_t n, std::size_t m, double alpha);
double ks_one_sample_critical(std::size_t n, double alpha);

}  // namespace cnppo
