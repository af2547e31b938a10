#include "cnppo/net.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "cnppo/errors.hpp"

namespace cnppo {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr int kCheckpointFormatVersion = 1;

// Orthogonal matrix [rows, cols] from the QR decomposition of a Gaussian
// draw, with the R-diagonal sign fix so the distribution is Haar-uniform.
Matrix orthogonal(int rows, int cols, Rng& rng, double gain) {
  const bool tall = rows >= cols;
  const int r = tall ? rows : cols;
  const int c = tall ? cols : rows;
  Matrix a(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) a(i, j) = rng.normal();
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ() * Matrix::Identity(r, c);
  Matrix rr = qr.matrixQR().topRows(c).triangularView<Eigen::Upper>();
  for (int j = 0; j < c; ++j)
    if (rr(j, j) < 0) q.col(j) = -q.col(j);
  if (!tall) q.transposeInPlace();
  return gain * q;
}

}  // namespace

Mlp Mlp::create(const std::vector<int>& layer_sizes, Rng& rng, double final_gain) {
  if (layer_sizes.size() < 2)
    throw InvalidArgument("Mlp::create: need at least input and output sizes");
  for (int s : layer_sizes)
    if (s <= 0) throw InvalidArgument("Mlp::create: layer sizes must be positive");
  Mlp net;
  const int n_layers = static_cast<int>(layer_sizes.size()) - 1;
  const double hidden_gain = std::sqrt(2.0);
  for (int l = 0; l < n_layers; ++l) {
    const double gain = (l == n_layers - 1) ? final_gain : hidden_gain;
    net.weights.push_back(orthogonal(layer_sizes[l + 1], layer_sizes[l], rng, gain));
    net.biases.push_back(Vector::Zero(layer_sizes[l + 1]));
  }
  return net;
}

Matrix Mlp::forward(const Matrix& x, MlpCache* cache) const {
  if (x.rows() != input_dim())
    throw ShapeError("Mlp::forward: input has wrong dimension");
  if (cache) {
    cache->input = x;
    cache->hidden.clear();
  }
  Matrix h = x;
  const int n = n_layers();
  for (int l = 0; l < n; ++l) {
    Matrix z = (weights[l] * h).colwise() + biases[l];
    if (l < n - 1) {
      h = z.array().tanh().matrix();
      if (cache) cache->hidden.push_back(h);
    } else {
      h = std::move(z);
    }
  }
  return h;
}

Vector Mlp::forward1(const Vector& x) const { return forward(Matrix(x)); }

MlpGrad Mlp::backward(const MlpCache& cache, const Matrix& dy) const {
  const int n = n_layers();
  if (static_cast<int>(cache.hidden.size()) != n - 1)
    throw ShapeError("Mlp::backward: cache does not match network depth");
  if (dy.rows() != output_dim() || dy.cols() != cache.input.cols())
    throw ShapeError("Mlp::backward: dy has wrong shape");
  MlpGrad grad;
  grad.d_weights.resize(n);
  grad.d_biases.resize(n);
  Matrix delta = dy;
  for (int l = n - 1; l >= 0; --l) {
    const Matrix& in = (l == 0) ? cache.input : cache.hidden[l - 1];
    grad.d_weights[l] = delta * in.transpose();
    grad.d_biases[l] = delta.rowwise().sum();
    if (l > 0) {
      Matrix back = weights[l].transpose() * delta;
      delta = back.cwiseProduct(
          (1.0 - cache.hidden[l - 1].array().square()).matrix());
    }
  }
  return grad;
}

int Mlp::param_count() const {
  int n = 0;
  for (size_t l = 0; l < weights.size(); ++l)
    n += static_cast<int>(weights[l].size() + biases[l].size());
  return n;
}

GaussianPolicy GaussianPolicy::create(int obs_dim, int action_dim,
                                      const std::vector<int>& hidden_sizes, Rng& rng) {
  if (obs_dim <= 0 || action_dim <= 0)
    throw InvalidArgument("GaussianPolicy::create: dims must be positive");
  std::vector<int> mean_sizes{obs_dim};
  mean_sizes.insert(mean_sizes.end(), hidden_sizes.begin(), hidden_sizes.end());
  mean_sizes.push_back(action_dim);
  std::vector<int> value_sizes{obs_dim};
  value_sizes.insert(value_sizes.end(), hidden_sizes.begin(), hidden_sizes.end());
  value_sizes.push_back(1);
  GaussianPolicy p;
  p.mean_net = Mlp::create(mean_sizes, rng, 0.01);
  p.log_std = Vector::Zero(action_dim);
  p.value_net = Mlp::create(value_sizes, rng, 1.0);
  return p;
}

void GaussianPolicy::forward(const Vector& obs, Vector& mu, Vector& sigma,
                             double& value) const {
  mu = mean_net.forward1(obs);
  sigma = log_std.array().exp();
  value = value_net.forward1(obs)(0);
}

Vector GaussianPolicy::sigma() const { return log_std.array().exp(); }

ActionSample sample_action(const Vector& mu, const Vector& sigma, const Vector& epsilon) {
  if (mu.size() != sigma.size() || mu.size() != epsilon.size())
    throw ShapeError("sample_action: mismatched dimensions");
  ActionSample s;
  s.action = mu + epsilon.cwiseProduct(sigma);
  s.log_prob = gaussian_log_prob(s.action, mu, sigma);
  return s;
}

double gaussian_log_prob(const Vector& action, const Vector& mu, const Vector& sigma) {
  if (action.size() != mu.size() || mu.size() != sigma.size())
    throw ShapeError("gaussian_log_prob: mismatched dimensions");
  if ((sigma.array() <= 0.0).any())
    throw InvalidArgument("gaussian_log_prob: sigma must be positive");
  const auto z = (action - mu).array() / sigma.array();
  return -0.5 * (z.square().sum() + action.size() * kLog2Pi) -
         sigma.array().log().sum();
}

double gaussian_entropy(const Vector& sigma) {
  if ((sigma.array() <= 0.0).any())
    throw InvalidArgument("gaussian_entropy: sigma must be positive");
  return 0.5 * sigma.size() * (1.0 + kLog2Pi) + sigma.array().log().sum();
}

namespace {

int mlp_param_count(const Mlp& m) { return m.param_count(); }

void pack_mlp(const Mlp& m, Vector& flat, int& pos) {
  for (size_t l = 0; l < m.weights.size(); ++l) {
    const Matrix& w = m.weights[l];
    for (int i = 0; i < w.rows(); ++i)
      for (int j = 0; j < w.cols(); ++j) flat(pos++) = w(i, j);
    const Vector& b = m.biases[l];
    for (int i = 0; i < b.size(); ++i) flat(pos++) = b(i);
  }
}

void unpack_mlp(Mlp& m, const Vector& flat, int& pos) {
  for (size_t l = 0; l < m.weights.size(); ++l) {
    Matrix& w = m.weights[l];
    for (int i = 0; i < w.rows(); ++i)
      for (int j = 0; j < w.cols(); ++j) w(i, j) = flat(pos++);
    Vector& b = m.biases[l];
    for (int i = 0; i < b.size(); ++i) b(i) = flat(pos++);
  }
}

}  // namespace

int policy_param_count(const GaussianPolicy& p) {
  return mlp_param_count(p.mean_net) + static_cast<int>(p.log_std.size()) +
         mlp_param_count(p.value_net);
}

Vector policy_get_params(const GaussianPolicy& p) {
  Vector flat(policy_param_count(p));
  int pos = 0;
  pack_mlp(p.mean_net, flat, pos);
  for (int i = 0; i < p.log_std.size(); ++i) flat(pos++) = p.log_std(i);
  pack_mlp(p.value_net, flat, pos);
  return flat;
}

void policy_set_params(GaussianPolicy& p, const Vector& flat) {
  if (flat.size() != policy_param_count(p))
    throw ShapeError("policy_set_params: flat vector has wrong length");
  int pos = 0;
  unpack_mlp(p.mean_net, flat, pos);
  for (int i = 0; i < p.log_std.size(); ++i) p.log_std(i) = flat(pos++);
  unpack_mlp(p.value_net, flat, pos);
}

void ObsNormalizer::update(const Vector& x) {
  if (x.size() != mean.size()) throw ShapeError("ObsNormalizer: dimension mismatch");
  count += 1;
  const Vector delta = x - mean;
  mean += delta / static_cast<double>(count);
  m2 += delta.cwiseProduct(x - mean);
}

Vector ObsNormalizer::variance() const {
  if (count < 2) return Vector::Ones(mean.size());
  return m2 / static_cast<double>(count);
}

Vector ObsNormalizer::normalize(const Vector& x) const {
  if (count < 2) return x;
  const Vector sd = (variance().array() + 1e-8).sqrt();
  return ((x - mean).cwiseQuotient(sd)).cwiseMax(-10.0).cwiseMin(10.0);
}

OptimizerState OptimizerState::create(int n_params, double learning_rate) {
  if (n_params <= 0) throw InvalidArgument("OptimizerState: n_params must be positive");
  OptimizerState s;
  s.first_moment = Vector::Zero(n_params);
  s.second_moment = Vector::Zero(n_params);
  s.learning_rate = learning_rate;
  return s;
}

void optimizer_step(OptimizerState& state, Vector& params, Vector gradients,
                    double max_grad_norm) {
  if (params.size() != state.first_moment.size() ||
      gradients.size() != state.first_moment.size())
    throw ShapeError("optimizer_step: size mismatch");
  if (max_grad_norm > 0.0) {
    const double norm = gradients.norm();
    if (norm > max_grad_norm) gradients *= max_grad_norm / norm;
  }
  state.step_count += 1;
  state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * gradients;
  state.second_moment = state.beta2 * state.second_moment +
                        (1.0 - state.beta2) * gradients.cwiseProduct(gradients);
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
  const auto m_hat = state.first_moment.array() / bc1;
  const auto v_hat = state.second_moment.array() / bc2;
  params.array() -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
}

namespace {

using Json = nlohmann::json;

Json mlp_to_json(const Mlp& m) {
  Json layers = Json::array();
  for (size_t l = 0; l < m.weights.size(); ++l) {
    const Matrix& w = m.weights[l];
    Json jw = Json::array();
    for (int i = 0; i < w.rows(); ++i)
      for (int j = 0; j < w.cols(); ++j) jw.push_back(w(i, j));
    Json jb = Json::array();
    for (int i = 0; i < m.biases[l].size(); ++i) jb.push_back(m.biases[l](i));
    layers.push_back(Json{{"rows", w.rows()},
                          {"cols", w.cols()},
                          {"weights", std::move(jw)},
                          {"biases", std::move(jb)}});
  }
  return layers;
}

Mlp mlp_from_json(const Json& layers) {
  Mlp m;
  for (const Json& layer : layers) {
    const int rows = layer.at("rows").get<int>();
    const int cols = layer.at("cols").get<int>();
    const auto& jw = layer.at("weights");
    const auto& jb = layer.at("biases");
    if (static_cast<int>(jw.size()) != rows * cols ||
        static_cast<int>(jb.size()) != rows)
      throw IoError("checkpoint: layer size fields disagree with array lengths");
    Matrix w(rows, cols);
    int k = 0;
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) w(i, j) = jw[k++].get<double>();
    Vector b(rows);
    for (int i = 0; i < rows; ++i) b(i) = jb[i].get<double>();
    m.weights.push_back(std::move(w));
    m.biases.push_back(std::move(b));
  }
  if (m.weights.empty()) throw IoError("checkpoint: network has no layers");
  return m;
}

}  // namespace

void save_checkpoint(const std::string& path, const GaussianPolicy& policy,
                     const std::map<std::string, std::string>& metadata) {
  Json root;
  root["format_version"] = kCheckpointFormatVersion;
  root["mean_net"] = mlp_to_json(policy.mean_net);
  Json jls = Json::array();
  for (int i = 0; i < policy.log_std.size(); ++i) jls.push_back(policy.log_std(i));
  root["log_std"] = std::move(jls);
  root["value_net"] = mlp_to_json(policy.value_net);
  root["metadata"] = metadata;
  std::ofstream out(path);
  if (!out) throw IoError("save_checkpoint: cannot open " + path);
  out << root.dump(2) << "\n";
  if (!out) throw IoError("save_checkpoint: write failed for " + path);
}

GaussianPolicy load_checkpoint(const std::string& path,
                               std::map<std::string, std::string>* metadata) {
  std::ifstream in(path);
  if (!in) throw IoError("load_checkpoint: cannot open " + path);
  Json root;
  try {
    in >> root;
  } catch (const std::exception& e) {
    throw IoError(std::string("load_checkpoint: parse error: ") + e.what());
  }
  const int version = root.at("format_version").get<int>();
  if (version != kCheckpointFormatVersion)
    throw IoError("load_checkpoint: unsupported format version " + std::to_string(version));
  GaussianPolicy p;
  p.mean_net = mlp_from_json(root.at("mean_net"));
  p.value_net = mlp_from_json(root.at("value_net"));
  const auto& jls = root.at("log_std");
  p.log_std = Vector(jls.size());
  for (size_t i = 0; i < jls.size(); ++i) p.log_std(static_cast<int>(i)) = jls[i].get<double>();
  if (p.log_std.size() != p.mean_net.output_dim())
    throw IoError("load_checkpoint: log_std length does not match action dim");
  if (metadata) {
    metadata->clear();
    if (root.contains("metadata"))
      for (auto it = root["metadata"].begin(); it != root["metadata"].end(); ++it)
        (*metadata)[it.key()] = it.value().get<std::string>();
  }
  return p;
}

}  // namespace cnppo
