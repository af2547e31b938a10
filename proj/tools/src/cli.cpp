#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <CLI11.hpp>

#include "cnppo/csv.hpp"
#include "cnppo/envs.hpp"
#include "cnppo/errors.hpp"
#include "cnppo/evalstats.hpp"
#include "cnppo/net.hpp"
#include "cnppo/noise.hpp"
#include "cnppo/ppo.hpp"
#include "cnppo/rng.hpp"

namespace fs = std::filesystem;

namespace cnppo::cli {

namespace {

std::string output_root() {
  const char* env = std::getenv("CNPPO_OUTPUT_ROOT");
  return env && *env ? std::string(env) : std::string("runs");
}

std::string fmt(double v) { return format_double(v); }
std::string fmt(long long v) { return format_int(v); }
std::string fmt(int v) { return format_int(v); }

std::string json_number(double v) {
  if (!std::isfinite(v)) return "null";
  return format_double(v);
}

std::string join_doubles(const Vector& v) {
  std::string out;
  for (int i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += format_double(v(i));
  }
  return out;
}

Vector parse_double_list(const std::string& text) {
  std::vector<double> values;
  std::string current;
  std::istringstream in(text);
  while (std::getline(in, current, ',')) values.push_back(parse_double(current));
  Vector out(static_cast<int>(values.size()));
  for (size_t i = 0; i < values.size(); ++i) out(static_cast<int>(i)) = values[i];
  return out;
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << content;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string config_echo(const std::string& command, const std::string& env,
                        const PpoConfig& c) {
  std::ostringstream out;
  out << "command=" << command << "\n";
  out << "env=" << env << "\n";
  out << "n_envs=" << fmt(c.n_envs) << "\n";
  out << "n_steps=" << fmt(c.n_steps) << "\n";
  out << "n_epochs=" << fmt(c.n_epochs) << "\n";
  out << "minibatch_size=" << fmt(c.minibatch_size) << "\n";
  out << "gamma=" << fmt(c.gamma) << "\n";
  out << "gae_lambda=" << fmt(c.gae_lambda) << "\n";
  out << "clip_range=" << fmt(c.clip_range) << "\n";
  out << "ent_coef=" << fmt(c.ent_coef) << "\n";
  out << "vf_coef=" << fmt(c.vf_coef) << "\n";
  out << "max_grad_norm=" << fmt(c.max_grad_norm) << "\n";
  out << "learning_rate=" << fmt(c.learning_rate) << "\n";
  out << "total_timesteps=" << fmt(c.total_timesteps) << "\n";
  out << "noise_beta=" << fmt(c.noise_beta) << "\n";
  out << "seed=" << fmt(static_cast<long long>(c.seed)) << "\n";
  out << "noise_chunk_length=" << fmt(c.noise_chunk_length) << "\n";
  out << "hidden_sizes=";
  for (size_t i = 0; i < c.hidden_sizes.size(); ++i) {
    if (i) out << ',';
    out << fmt(c.hidden_sizes[i]);
  }
  out << "\n";
  out << "clip_value_function=" << (c.clip_value_function ? 1 : 0) << "\n";
  out << "normalize_observations=" << (c.normalize_observations ? 1 : 0) << "\n";
  out << "eval_every=" << fmt(c.eval_every) << "\n";
  out << "n_eval_episodes=" << fmt(c.n_eval_episodes) << "\n";
  out << "eval_stochastic=" << (c.eval_stochastic ? 1 : 0) << "\n";
  return out.str();
}

std::string jsonl_line(const TrainLogRecord& r) {
  std::ostringstream out;
  out << "{\"update_index\":" << fmt(r.update_index)
      << ",\"global_step\":" << fmt(r.global_step)
      << ",\"mean_episode_return\":" << json_number(r.mean_episode_return)
      << ",\"policy_loss\":" << json_number(r.policy_loss)
      << ",\"value_loss\":" << json_number(r.value_loss)
      << ",\"entropy\":" << json_number(r.entropy)
      << ",\"approx_kl\":" << json_number(r.approx_kl)
      << ",\"clip_fraction\":" << json_number(r.clip_fraction) << "}";
  return out.str();
}

void write_eval_csv(const fs::path& path, const EvalCurve& curve) {
  CsvTable t;
  t.header = {"global_step", "episode_index", "episode_return"};
  for (const EvalPoint& p : curve.points)
    for (size_t e = 0; e < p.episode_returns.size(); ++e)
      t.rows.push_back({fmt(p.global_step), fmt(static_cast<long long>(e)),
                        fmt(p.episode_returns[e])});
  write_csv(path.string(), t);
}

double final_return_of(const EvalCurve& curve) {
  if (curve.points.empty() || curve.points.back().episode_returns.empty()) return 0.0;
  const auto& r = curve.points.back().episode_returns;
  double acc = 0.0;
  for (double x : r) acc += x;
  return acc / static_cast<double>(r.size());
}

// Runs one training job and writes the full artifact set into dir.
PerformanceRecord run_train_to_dir(const std::string& env, const PpoConfig& cfg,
                                   const fs::path& dir) {
  cfg.validate();
  (void)make_env(env);  // reject unknown env names before any file is touched
  fs::create_directories(dir);
  write_text(dir / "config.txt", config_echo("train", env, cfg));

  std::ofstream log_out(dir / "log.jsonl");
  if (!log_out) throw IoError("cannot open " + (dir / "log.jsonl").string());
  TrainHooks hooks;
  hooks.on_update = [&log_out](const TrainLogRecord& rec) {
    log_out << jsonl_line(rec) << "\n";
  };
  const TrainResult res = train(cfg, env, hooks);
  log_out.close();

  write_eval_csv(dir / "eval.csv", res.eval_curve);

  std::map<std::string, std::string> meta;
  meta["env"] = env;
  meta["noise_beta"] = fmt(cfg.noise_beta);
  meta["seed"] = fmt(static_cast<long long>(cfg.seed));
  meta["n_envs"] = fmt(cfg.n_envs);
  if (res.normalizer_active) {
    meta["obs_norm_count"] = fmt(res.normalizer.count);
    meta["obs_norm_mean"] = join_doubles(res.normalizer.mean);
    meta["obs_norm_m2"] = join_doubles(res.normalizer.m2);
  }
  save_checkpoint((dir / "checkpoint.json").string(), res.policy, meta);

  PerformanceRecord rec;
  rec.env = env;
  rec.beta = cfg.noise_beta;
  rec.n_envs = cfg.n_envs;
  rec.seed = static_cast<int>(cfg.seed);
  rec.performance = performance(res.eval_curve);
  rec.final_return = final_return_of(res.eval_curve);
  return rec;
}

std::vector<std::string> record_row(const PerformanceRecord& r) {
  return {r.env, fmt(r.beta), fmt(r.n_envs), fmt(r.seed), fmt(r.performance),
          fmt(r.final_return)};
}

const std::vector<std::string> kRecordHeader = {"env",  "beta",        "n_envs",
                                                "seed", "performance", "final_return"};

void add_ppo_options(CLI::App* cmd, PpoConfig& cfg) {
  cmd->add_option("--n-steps", cfg.n_steps, "rollout steps per env per update")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--n-epochs", cfg.n_epochs, "optimization epochs per update")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--minibatch-size", cfg.minibatch_size, "minibatch size")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--gamma", cfg.gamma, "discount factor");
  cmd->add_option("--gae-lambda", cfg.gae_lambda, "advantage estimation decay");
  cmd->add_option("--clip-range", cfg.clip_range, "surrogate clip range");
  cmd->add_option("--ent-coef", cfg.ent_coef, "entropy bonus coefficient");
  cmd->add_option("--vf-coef", cfg.vf_coef, "value loss coefficient");
  cmd->add_option("--max-grad-norm", cfg.max_grad_norm, "global gradient norm cap");
  cmd->add_option("--learning-rate", cfg.learning_rate, "optimizer learning rate");
  cmd->add_option("--total-timesteps", cfg.total_timesteps, "total env steps to train");
  cmd->add_option("--chunk-length", cfg.noise_chunk_length,
                  "noise sequence length generated per stream chunk")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--hidden", cfg.hidden_sizes, "hidden layer sizes")
      ->delimiter(',');
  cmd->add_flag("--clip-value-function", cfg.clip_value_function,
                "clip the value prediction around its rollout value");
  cmd->add_flag("--normalize-observations", cfg.normalize_observations,
                "whiten observations with running statistics");
  cmd->add_option("--eval-every", cfg.eval_every, "evaluation period in env steps")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--eval-episodes", cfg.n_eval_episodes, "episodes per evaluation")
      ->check(CLI::PositiveNumber);
  cmd->add_flag("--eval-stochastic", cfg.eval_stochastic,
                "sample actions during evaluation instead of playing the mean");
}

// ---------------------------------------------------------------- train ----

struct TrainArgs {
  std::string env;
  std::string out;
  PpoConfig cfg;
};

int cmd_train(const TrainArgs& a) {
  fs::path dir = a.out.empty()
                     ? fs::path(output_root()) /
                           ("train_" + a.env + "_b" + fmt(a.cfg.noise_beta) + "_n" +
                            fmt(a.cfg.n_envs) + "_s" + fmt(static_cast<long long>(a.cfg.seed)))
                     : fs::path(a.out);
  const PerformanceRecord rec = run_train_to_dir(a.env, a.cfg, dir);
  std::cout << "run_dir=" << dir.string() << "\n"
            << "performance=" << fmt(rec.performance) << "\n"
            << "final_return=" << fmt(rec.final_return) << "\n";
  return 0;
}

// ---------------------------------------------------------------- sweep ----

struct SweepArgs {
  std::vector<std::string> envs;
  std::vector<double> betas;
  std::vector<int> n_envs_list;
  std::vector<int> seeds;
  std::string out;
  int jobs = 1;
  PpoConfig cfg;
};

int cmd_sweep(const SweepArgs& a) {
  if (a.envs.empty()) throw InvalidArgument("sweep: --env list must not be empty");
  if (a.betas.empty()) throw InvalidArgument("sweep: --betas list must not be empty");
  if (a.n_envs_list.empty())
    throw InvalidArgument("sweep: --n-envs-list must not be empty");
  if (a.seeds.empty()) throw InvalidArgument("sweep: --seeds list must not be empty");
  for (const std::string& env : a.envs) (void)make_env(env);
  for (double beta : a.betas)
    if (!(std::isfinite(beta) && beta >= 0.0))
      throw InvalidArgument("sweep: --betas entries must be finite and nonnegative");

  const fs::path root = a.out.empty() ? fs::path(output_root()) / "sweep" : fs::path(a.out);
  fs::create_directories(root);

  struct Cell {
    std::string env;
    double beta;
    int n_envs;
    int seed;
    fs::path dir;
  };
  std::vector<Cell> cells;
  for (const std::string& env : a.envs)
    for (double beta : a.betas)
      for (int n : a.n_envs_list)
        for (int seed : a.seeds) {
          Cell c{env, beta, n, seed,
                 root / (env + "_b" + fmt(beta) + "_n" + fmt(n) + "_s" + fmt(seed))};
          cells.push_back(std::move(c));
        }

  std::vector<std::string> failures(cells.size());
  std::atomic<size_t> next{0};
  std::mutex io_mutex;

  const auto worker = [&]() {
    for (size_t i = next.fetch_add(1); i < cells.size(); i = next.fetch_add(1)) {
      const Cell& cell = cells[i];
      const fs::path marker = cell.dir / "record.csv";
      if (fs::exists(marker)) {
        std::lock_guard<std::mutex> lock(io_mutex);
        std::cout << "skip " << cell.dir.filename().string() << " (already complete)\n";
        continue;
      }
      try {
        PpoConfig cfg = a.cfg;
        cfg.noise_beta = cell.beta;
        cfg.n_envs = cell.n_envs;
        cfg.seed = static_cast<std::uint64_t>(cell.seed);
        const PerformanceRecord rec = run_train_to_dir(cell.env, cfg, cell.dir);
        CsvTable t;
        t.header = kRecordHeader;
        t.rows.push_back(record_row(rec));
        write_csv(marker.string(), t);
        std::lock_guard<std::mutex> lock(io_mutex);
        std::cout << "done " << cell.dir.filename().string()
                  << " performance=" << fmt(rec.performance) << "\n";
      } catch (const std::exception& e) {
        failures[i] = e.what();
        std::error_code ec;
        fs::create_directories(cell.dir, ec);
        try {
          write_text(cell.dir / "error.txt", std::string(e.what()) + "\n");
        } catch (...) {
        }
        std::lock_guard<std::mutex> lock(io_mutex);
        std::cout << "fail " << cell.dir.filename().string() << ": " << e.what() << "\n";
      }
    }
  };

  const int n_workers = std::max(1, std::min<int>(a.jobs, static_cast<int>(cells.size())));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(n_workers));
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  CsvTable table;
  table.header = kRecordHeader;
  bool any_failure = false;
  for (size_t i = 0; i < cells.size(); ++i) {
    const fs::path marker = cells[i].dir / "record.csv";
    if (fs::exists(marker)) {
      const CsvTable cell_table = read_csv(marker.string());
      for (const auto& row : cell_table.rows) table.rows.push_back(row);
    } else {
      any_failure = true;
      table.comments.push_back("# failed " + cells[i].dir.filename().string() + ": " +
                               failures[i]);
    }
  }
  write_csv((root / "performance.csv").string(), table);
  std::cout << "table=" << (root / "performance.csv").string() << " rows="
            << fmt(static_cast<long long>(table.rows.size())) << "\n";
  return any_failure ? 1 : 0;
}

// ---------------------------------------------------------------- noise ----

struct NoisePsdArgs {
  double beta = 1.0;
  int n = 512;
  int reps = 4096;
  std::uint64_t seed = 0;
  double f_min = 0.0;  // 0 means 4/n
  double f_max = 0.25;
  std::string out = "psd.csv";
};

int cmd_noise_psd(const NoisePsdArgs& a) {
  Rng rng(a.seed);
  std::vector<NoiseSequence> seqs;
  seqs.reserve(static_cast<size_t>(a.reps));
  const NoiseColor color(a.beta);
  for (int i = 0; i < a.reps; ++i)
    seqs.push_back(generate_colored_noise(a.n, color, rng));
  const PsdEstimate psd = estimate_psd(seqs);
  const double f_min = a.f_min > 0.0 ? a.f_min : 4.0 / a.n;
  const double slope = fit_psd_slope(psd, f_min, a.f_max);

  CsvTable t;
  t.comments = {"# beta=" + fmt(a.beta), "# n=" + fmt(a.n), "# reps=" + fmt(a.reps),
                "# f_min=" + fmt(f_min), "# f_max=" + fmt(a.f_max),
                "# fitted_slope=" + fmt(slope)};
  t.header = {"frequency", "power"};
  for (size_t i = 0; i < psd.frequencies.size(); ++i)
    t.rows.push_back({fmt(psd.frequencies[i]), fmt(psd.power[i])});
  write_csv(a.out, t);
  std::cout << "fitted_slope=" << fmt(slope) << "\n" << "table=" << a.out << "\n";
  return 0;
}

struct NoiseWalkArgs {
  std::vector<double> betas{0.0, 1.0, 2.0};
  int length = 1000;
  std::uint64_t seed = 0;
  std::string out = "walk.csv";
};

int cmd_noise_walk(const NoiseWalkArgs& a) {
  if (a.betas.empty()) throw InvalidArgument("noise walk: --beta list must not be empty");
  const Rng base(a.seed);
  CsvTable t;
  t.header = {"beta", "t", "x", "y"};
  for (size_t bi = 0; bi < a.betas.size(); ++bi) {
    const NoiseColor color(a.betas[bi]);
    Rng rng = base.fork(bi);
    const NoiseSequence nx = generate_colored_noise(a.length, color, rng);
    const NoiseSequence ny = generate_colored_noise(a.length, color, rng);
    const std::vector<WalkPoint> pts = integrate_random_walk(nx, ny);
    for (size_t k = 0; k < pts.size(); ++k)
      t.rows.push_back({fmt(a.betas[bi]), fmt(static_cast<long long>(k + 1)),
                        fmt(pts[k].x), fmt(pts[k].y)});
  }
  write_csv(a.out, t);
  std::cout << "table=" << a.out << "\n";
  return 0;
}

struct NoiseBiasArgs {
  std::vector<double> betas{0.0, 0.5, 1.0};
  int length = 1000;
  int reps = 10000;
  int pool = 1;
  std::uint64_t seed = 0;
  std::string out = "bias.csv";
};

int cmd_noise_bias(const NoiseBiasArgs& a) {
  if (a.betas.empty()) throw InvalidArgument("noise bias: --betas must not be empty");
  const Rng base(a.seed);
  CsvTable t;
  t.comments = {"# length=" + fmt(a.length), "# reps=" + fmt(a.reps),
                "# pool=" + fmt(a.pool)};
  t.header = {"beta", "std_of_bias"};
  for (size_t bi = 0; bi < a.betas.size(); ++bi) {
    Rng rng = base.fork(bi);
    const BiasStats stats =
        bias_statistics(NoiseColor(a.betas[bi]), a.length, a.reps, rng, a.pool);
    t.rows.push_back({fmt(a.betas[bi]), fmt(stats.std_of_bias)});
  }
  write_csv(a.out, t);
  std::cout << "table=" << a.out << "\n";
  return 0;
}

// -------------------------------------------------------------- analyze ----

struct AnalyzeArgs {
  std::string input;
  std::string out;
  std::uint64_t analysis_seed = 0;
  std::vector<double> fixed_betas{0.0, 0.5, 1.0};
  int bias_length = 1000;
  int bias_reps = 4000;
  double sigma_star_override = std::nan("");
};

std::vector<PerformanceRecord> read_performance_table(const std::string& path) {
  const CsvTable t = read_csv(path);
  for (const char* col : {"env", "beta", "n_envs", "seed", "performance"})
    if (t.column(col) < 0)
      throw InvalidArgument(std::string("analyze: input table is missing column '") +
                            col + "'");
  const int c_env = t.column("env"), c_beta = t.column("beta"),
            c_n = t.column("n_envs"), c_seed = t.column("seed"),
            c_perf = t.column("performance"), c_final = t.column("final_return");
  std::vector<PerformanceRecord> records;
  for (const auto& row : t.rows) {
    PerformanceRecord r;
    r.env = row[static_cast<size_t>(c_env)];
    r.beta = parse_double(row[static_cast<size_t>(c_beta)]);
    r.n_envs = static_cast<int>(parse_int(row[static_cast<size_t>(c_n)]));
    r.seed = static_cast<int>(parse_int(row[static_cast<size_t>(c_seed)]));
    r.performance = parse_double(row[static_cast<size_t>(c_perf)]);
    r.final_return =
        c_final >= 0 ? parse_double(row[static_cast<size_t>(c_final)]) : r.performance;
    records.push_back(std::move(r));
  }
  if (records.empty()) throw InvalidArgument("analyze: input table has no rows");
  return records;
}

void write_insufficient(const fs::path& path, const std::vector<std::string>& header,
                        std::string why) {
  for (char& c : why)
    if (c == '\n') c = ';';
  CsvTable t;
  t.comments = {"# insufficient_data: " + why};
  t.header = header;
  write_csv(path.string(), t);
}

int cmd_analyze(const AnalyzeArgs& a) {
  const std::vector<PerformanceRecord> records = read_performance_table(a.input);
  const SweepResult sweep = standardize(records);
  const fs::path out = a.out.empty() ? fs::path(output_root()) / "analysis" : fs::path(a.out);
  fs::create_directories(out);

  // ----- Best color per env with pairwise tests against the fixed colors.
  {
    std::vector<std::string> header = {"env", "beta_star"};
    for (double b : a.fixed_betas) {
      header.push_back("p_vs_" + fmt(b));
      header.push_back("outperformed_" + fmt(b));
    }
    try {
      const std::vector<BestBetaRow> table = best_beta_table(sweep, a.fixed_betas);
      CsvTable t;
      t.header = header;
      for (const BestBetaRow& row : table) {
        std::vector<std::string> fields = {row.env, fmt(row.beta_star)};
        for (const BetaComparison& cmp : row.comparisons) {
          fields.push_back(fmt(cmp.p_value));
          fields.push_back(cmp.outperformed ? "1" : "0");
        }
        t.rows.push_back(std::move(fields));
      }
      write_csv((out / "table1.csv").string(), t);
    } catch (const MissingDataError& e) {
      write_insufficient(out / "table1.csv", header, e.what());
    }
  }

  // ----- Rank of each color within each n_envs column.
  {
    const std::vector<std::string> header = {"beta", "n_envs",
                                             "mean_standardized_performance", "rank"};
    try {
      const RankTable table = rank_within_group(sweep);
      CsvTable t;
      t.header = header;
      for (size_t j = 0; j < table.n_envs_list.size(); ++j)
        for (size_t b = 0; b < table.betas.size(); ++b)
          t.rows.push_back(
              {fmt(table.betas[b]), fmt(table.n_envs_list[j]),
               fmt(table.mean_performance(static_cast<int>(b), static_cast<int>(j))),
               fmt(table.ranks(static_cast<int>(b), static_cast<int>(j)))});
      write_csv((out / "ranks.csv").string(), t);
    } catch (const MissingDataError& e) {
      write_insufficient(out / "ranks.csv", header, e.what());
    }
  }

  // ----- Bias-variance model of the best color per n_envs.
  {
    const std::vector<std::string> header = {"n_envs", "beta", "e", "predicted_best_beta"};
    std::set<double> beta_set;
    std::set<int> n_set;
    for (const PerformanceRecord& r : sweep.records) {
      beta_set.insert(r.beta);
      n_set.insert(r.n_envs);
    }
    const std::vector<double> betas(beta_set.begin(), beta_set.end());
    const std::vector<int> n_list(n_set.begin(), n_set.end());

    std::map<double, double> bias_cache;
    const Rng bias_base(a.analysis_seed);
    for (size_t i = 0; i < betas.size(); ++i) {
      Rng rng = bias_base.fork(500 + i);
      bias_cache[betas[i]] =
          bias_statistics(NoiseColor(betas[i]), a.bias_length, a.bias_reps, rng)
              .std_of_bias;
    }
    const auto bias_fn = [&bias_cache, &a, &bias_base](double beta) {
      const auto it = bias_cache.find(beta);
      if (it != bias_cache.end()) return it->second;
      Rng rng = bias_base.fork(900 + bias_cache.size());
      const double v =
          bias_statistics(NoiseColor(beta), a.bias_length, a.bias_reps, rng).std_of_bias;
      bias_cache[beta] = v;
      return v;
    };

    try {
      const double sigma_star = std::isnan(a.sigma_star_override)
                                    ? estimate_sigma_star(sweep, bias_fn)
                                    : a.sigma_star_override;
      const EMatrix m = predicted_best_beta(bias_fn, n_list, betas, sigma_star);
      CsvTable t;
      t.comments = {"# sigma_star=" + fmt(sigma_star),
                    "# degenerate=" + std::string(m.degenerate ? "1" : "0"),
                    "# bias_length=" + fmt(a.bias_length),
                    "# bias_reps=" + fmt(a.bias_reps)};
      t.header = header;
      for (size_t j = 0; j < m.n_envs_list.size(); ++j)
        for (size_t b = 0; b < m.betas.size(); ++b)
          t.rows.push_back({fmt(m.n_envs_list[j]), fmt(m.betas[b]),
                            fmt(m.e(static_cast<int>(b), static_cast<int>(j))),
                            fmt(m.predicted_best_beta[j])});
      write_csv((out / "ematrix.csv").string(), t);
    } catch (const MissingDataError& e) {
      write_insufficient(out / "ematrix.csv", header, e.what());
    }
  }

  // ----- Bootstrap confidence intervals per grid cell group.
  {
    CsvTable t;
    t.header = {"env", "beta", "n_envs", "n_seeds", "mean", "ci_low", "ci_high"};
    std::map<std::tuple<std::string, double, int>, std::vector<double>> groups;
    for (const PerformanceRecord& r : sweep.records)
      groups[{r.env, r.beta, r.n_envs}].push_back(r.performance);
    const Rng ci_base(a.analysis_seed);
    size_t gi = 0;
    for (const auto& [key, samples] : groups) {
      const auto& [env, beta, n_envs] = key;
      double mean = 0.0;
      for (double x : samples) mean += x;
      mean /= static_cast<double>(samples.size());
      if (samples.size() >= 10) {
        Rng rng = ci_base.fork(1000 + gi);
        const ConfidenceInterval ci = bootstrap_ci_bca(samples, rng);
        t.rows.push_back({env, fmt(beta), fmt(n_envs),
                          fmt(static_cast<long long>(samples.size())), fmt(mean),
                          fmt(ci.low), fmt(ci.high)});
      } else {
        t.comments.push_back("# insufficient_data: env=" + env + " beta=" + fmt(beta) +
                             " n_envs=" + fmt(n_envs) + " n_seeds=" +
                             fmt(static_cast<long long>(samples.size())) +
                             " (bootstrap needs 10)");
      }
      ++gi;
    }
    write_csv((out / "ci.csv").string(), t);
  }

  std::cout << "analysis_dir=" << out.string() << "\n";
  return 0;
}

// ----------------------------------------------------------------- eval ----

struct EvalArgs {
  std::string checkpoint;
  std::string env;  // empty: use the checkpoint metadata
  int episodes = 20;
  bool stochastic = false;
  std::uint64_t seed = 0;
  std::string trajectory_out;
};

int cmd_eval(const EvalArgs& a) {
  std::map<std::string, std::string> meta;
  const GaussianPolicy policy = load_checkpoint(a.checkpoint, &meta);
  std::string env_name = a.env;
  if (env_name.empty()) {
    const auto it = meta.find("env");
    if (it == meta.end())
      throw InvalidArgument("eval: pass --env, the checkpoint names no environment");
    env_name = it->second;
  }
  auto env = make_env(env_name);

  std::optional<ObsNormalizer> normalizer;
  if (meta.count("obs_norm_mean")) {
    const Vector mean = parse_double_list(meta.at("obs_norm_mean"));
    const Vector m2 = parse_double_list(meta.at("obs_norm_m2"));
    if (mean.size() != env->spec().obs_dim || m2.size() != mean.size())
      throw IoError("eval: checkpoint normalizer state does not fit the env");
    normalizer.emplace(static_cast<int>(mean.size()));
    normalizer->mean = mean;
    normalizer->m2 = m2;
    normalizer->count = parse_int(meta.at("obs_norm_count"));
  }

  const EvalMode mode = a.stochastic ? EvalMode::kStochastic : EvalMode::kDeterministicMean;
  Rng rng(a.seed);
  const std::vector<double> returns = evaluate_policy(
      policy, *env, a.episodes, mode, rng, normalizer ? &*normalizer : nullptr);

  double mean = 0.0;
  for (double r : returns) mean += r;
  mean /= static_cast<double>(returns.size());
  double var = 0.0;
  for (double r : returns) var += (r - mean) * (r - mean);
  const double sd = returns.size() > 1
                        ? std::sqrt(var / static_cast<double>(returns.size() - 1))
                        : 0.0;
  std::cout << "env=" << env_name << "\n"
            << "episodes=" << fmt(a.episodes) << "\n"
            << "mean_return=" << fmt(mean) << "\n"
            << "std_return=" << fmt(sd) << "\n";

  if (!a.trajectory_out.empty()) {
    const EnvSpec& spec = env->spec();
    CsvTable t;
    t.header = {"episode", "step"};
    for (int d = 0; d < spec.obs_dim; ++d) t.header.push_back("obs_" + fmt(d));
    for (int d = 0; d < spec.action_dim; ++d) t.header.push_back("action_" + fmt(d));
    t.header.push_back("reward");
    t.header.push_back("terminated");

    Rng traj_rng = Rng(a.seed).fork(9);
    for (int ep = 0; ep < a.episodes; ++ep) {
      Vector obs = env->reset(traj_rng);
      for (int step = 0; step < spec.max_episode_steps; ++step) {
        const Vector policy_obs = normalizer ? normalizer->normalize(obs) : obs;
        Vector mu, sigma;
        double value = 0.0;
        policy.forward(policy_obs, mu, sigma, value);
        Vector action = mu;
        if (mode == EvalMode::kStochastic)
          for (int d = 0; d < action.size(); ++d) action(d) += sigma(d) * traj_rng.normal();
        action = action.cwiseMax(spec.action_low).cwiseMin(spec.action_high);

        Vector next_obs;
        double reward = 0.0;
        bool terminated = false;
        env->step(action, next_obs, reward, terminated);

        std::vector<std::string> row = {fmt(ep), fmt(step)};
        for (int d = 0; d < obs.size(); ++d) row.push_back(fmt(obs(d)));
        for (int d = 0; d < action.size(); ++d) row.push_back(fmt(action(d)));
        row.push_back(fmt(reward));
        row.push_back(terminated ? "1" : "0");
        t.rows.push_back(std::move(row));

        if (terminated) break;
        obs = next_obs;
      }
    }
    write_csv(a.trajectory_out, t);
    std::cout << "trajectory=" << a.trajectory_out << "\n";
  }
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"colored-noise PPO toolkit"};
  app.require_subcommand(1);

  TrainArgs train_args;
  CLI::App* train_cmd = app.add_subcommand("train", "train one PPO agent");
  train_cmd->add_option("--env", train_args.env, "environment name")->required();
  train_cmd->add_option("--beta", train_args.cfg.noise_beta, "noise color exponent")
      ->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--n-envs", train_args.cfg.n_envs, "parallel environments")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--seed", train_args.cfg.seed, "training seed");
  train_cmd->add_option("--out", train_args.out, "run directory");
  add_ppo_options(train_cmd, train_args.cfg);

  SweepArgs sweep_args;
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "train a beta x n_envs x seed grid");
  sweep_cmd->add_option("--env", sweep_args.envs, "environment names")
      ->required()
      ->delimiter(',');
  sweep_cmd->add_option("--betas", sweep_args.betas, "noise color exponents")
      ->required()
      ->delimiter(',');
  sweep_cmd->add_option("--n-envs-list", sweep_args.n_envs_list, "parallel env counts")
      ->required()
      ->delimiter(',')
      ->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--seeds", sweep_args.seeds, "training seeds")
      ->required()
      ->delimiter(',');
  sweep_cmd->add_option("--out", sweep_args.out, "sweep output directory");
  sweep_cmd->add_option("--jobs", sweep_args.jobs, "concurrent grid cells")
      ->check(CLI::PositiveNumber);
  add_ppo_options(sweep_cmd, sweep_args.cfg);

  CLI::App* noise_cmd = app.add_subcommand("noise", "noise diagnostics");
  noise_cmd->require_subcommand(1);

  NoisePsdArgs psd_args;
  CLI::App* psd_cmd = noise_cmd->add_subcommand("psd", "spectral density of one color");
  psd_cmd->add_option("--beta", psd_args.beta, "noise color exponent")
      ->check(CLI::NonNegativeNumber);
  psd_cmd->add_option("--n", psd_args.n, "sequence length")->check(CLI::PositiveNumber);
  psd_cmd->add_option("--reps", psd_args.reps, "sequences to average")
      ->check(CLI::PositiveNumber);
  psd_cmd->add_option("--seed", psd_args.seed, "generator seed");
  psd_cmd->add_option("--f-min", psd_args.f_min, "fit band lower edge (default 4/n)");
  psd_cmd->add_option("--f-max", psd_args.f_max, "fit band upper edge");
  psd_cmd->add_option("--out", psd_args.out, "output CSV path");

  NoiseWalkArgs walk_args;
  CLI::App* walk_cmd = noise_cmd->add_subcommand("walk", "2d random walks per color");
  walk_cmd->add_option("--beta", walk_args.betas, "noise color exponents")
      ->delimiter(',');
  walk_cmd->add_option("--len", walk_args.length, "walk length")->check(CLI::PositiveNumber);
  walk_cmd->add_option("--seed", walk_args.seed, "generator seed");
  walk_cmd->add_option("--out", walk_args.out, "output CSV path");

  NoiseBiasArgs bias_args;
  CLI::App* bias_cmd =
      noise_cmd->add_subcommand("bias", "spread of the per-sequence mean per color");
  bias_cmd->add_option("--betas", bias_args.betas, "noise color exponents")
      ->delimiter(',');
  bias_cmd->add_option("--len", bias_args.length, "sequence length")
      ->check(CLI::PositiveNumber);
  bias_cmd->add_option("--reps", bias_args.reps, "sequences per color")
      ->check(CLI::PositiveNumber);
  bias_cmd->add_option("--pool", bias_args.pool, "independent sequences pooled per estimate")
      ->check(CLI::PositiveNumber);
  bias_cmd->add_option("--seed", bias_args.seed, "generator seed");
  bias_cmd->add_option("--out", bias_args.out, "output CSV path");

  AnalyzeArgs analyze_args;
  CLI::App* analyze_cmd = app.add_subcommand("analyze", "statistics over a sweep table");
  analyze_cmd->add_option("--input", analyze_args.input, "performance table CSV")
      ->required();
  analyze_cmd->add_option("--out", analyze_args.out, "analysis output directory");
  analyze_cmd->add_option("--analysis-seed", analyze_args.analysis_seed,
                          "seed for bootstrap and bias models");
  analyze_cmd->add_option("--fixed-betas", analyze_args.fixed_betas,
                          "colors compared against the per-env winner")
      ->delimiter(',');
  analyze_cmd->add_option("--bias-len", analyze_args.bias_length,
                          "sequence length for the bias spread model")
      ->check(CLI::PositiveNumber);
  analyze_cmd->add_option("--bias-reps", analyze_args.bias_reps,
                          "sequences per color for the bias spread model")
      ->check(CLI::PositiveNumber);
  analyze_cmd->add_option("--sigma-star", analyze_args.sigma_star_override,
                          "override the estimated target exploration level");

  EvalArgs eval_args;
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "checkpoint path")
      ->required();
  eval_cmd->add_option("--env", eval_args.env, "environment override");
  eval_cmd->add_option("--episodes", eval_args.episodes, "episodes to run")
      ->check(CLI::PositiveNumber);
  eval_cmd->add_flag("--stochastic", eval_args.stochastic, "sample actions");
  eval_cmd->add_option("--seed", eval_args.seed, "evaluation seed");
  eval_cmd->add_option("--dump-trajectory", eval_args.trajectory_out,
                       "write per-step trajectories to this CSV");

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("cnppo");
  for (const std::string& s : args) argv.push_back(s.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (app.got_subcommand(train_cmd)) return cmd_train(train_args);
    if (app.got_subcommand(sweep_cmd)) return cmd_sweep(sweep_args);
    if (app.got_subcommand(noise_cmd)) {
      if (noise_cmd->got_subcommand(psd_cmd)) return cmd_noise_psd(psd_args);
      if (noise_cmd->got_subcommand(walk_cmd)) return cmd_noise_walk(walk_args);
      if (noise_cmd->got_subcommand(bias_cmd)) return cmd_noise_bias(bias_args);
    }
    if (app.got_subcommand(analyze_cmd)) return cmd_analyze(analyze_args);
    if (app.got_subcommand(eval_cmd)) return cmd_eval(eval_args);
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << "error: no command selected\n";
  return 2;
}

}  // namespace cnppo::cli
