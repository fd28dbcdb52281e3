#include "deepstorm/problems.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "deepstorm/errors.hpp"
#include "text_util.hpp"

namespace deepstorm {

namespace {

inline double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

// log(1 + exp(-t)) without overflow for large |t|.
inline double logistic_loss_of_margin(double t) {
  if (t >= 0.0) return std::log1p(std::exp(-t));
  return -t + std::log1p(std::exp(t));
}

std::vector<int> shard_sizes(int n_samples, int n_agents) {
  std::vector<int> sizes(n_agents, n_samples / n_agents);
  for (int i = 0; i < n_samples % n_agents; ++i) ++sizes[i];
  return sizes;
}

void fnv_mix(std::uint64_t& h, const void* data, size_t len) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
}

void fnv_mix_double(std::uint64_t& h, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  fnv_mix(h, &bits, sizeof(bits));
}

}  // namespace

int ProblemInstance::shard_size(int agent) const {
  return static_cast<int>(shard_features(agent).rows());
}

const Eigen::MatrixXd& ProblemInstance::shard_features(int agent) const {
  if (agent < 0 || agent >= n_agents()) throw ConfigError("invalid agent index");
  return features_[static_cast<size_t>(agent)];
}

const Eigen::VectorXd& ProblemInstance::shard_labels(int agent) const {
  if (kind_ != Kind::logistic_l1) throw ConfigError("labels only exist for logistic instances");
  if (agent < 0 || agent >= n_agents()) throw ConfigError("invalid agent index");
  return labels_[static_cast<size_t>(agent)];
}

Eigen::VectorXd ProblemInstance::quadratic_center(int agent) const {
  if (kind_ != Kind::quadratic) throw ConfigError("centers only exist for quadratic instances");
  return shard_features(agent).colwise().mean().transpose();
}

const Eigen::VectorXd& ProblemInstance::planted_signs() const {
  if (kind_ != Kind::logistic_l1) throw ConfigError("planted signs only exist for logistic instances");
  return planted_signs_;
}

void ProblemInstance::validate_shards() const {
  if (features_.empty()) throw ConfigError("ProblemInstance: no agents");
  int min_size = INT32_MAX, max_size = 0;
  for (const auto& f : features_) {
    if (f.rows() == 0) throw ConfigError("ProblemInstance: empty shard");
    if (f.cols() != dim_) throw ConfigError("ProblemInstance: shard dimension mismatch");
    min_size = std::min<int>(min_size, static_cast<int>(f.rows()));
    max_size = std::max<int>(max_size, static_cast<int>(f.rows()));
  }
  if (max_size - min_size > 1) {
    throw ConfigError("ProblemInstance: shard sizes differ by more than 1");
  }
}

void ProblemInstance::finalize_constants() {
  validate_shards();
  if (kind_ == Kind::quadratic) {
    smoothness_ = 1.0;  // per-sample gradient x - s is exactly 1-Lipschitz
    double worst = 0.0;
    for (const auto& f : features_) {
      const Eigen::RowVectorXd mean = f.colwise().mean();
      const double disp = (f.rowwise() - mean).rowwise().squaredNorm().mean();
      worst = std::max(worst, disp);
    }
    sigma_sq_ = worst;
    return;
  }
  // Logistic: the per-sample gradient map has Lipschitz modulus
  // sigma'(t) ||a||^2 <= ||a||^2 / 4, so a valid mean-squared constant is
  // sqrt(lambda_max(mean ||a||^2 a a^T)) / 4 per shard. The variance bound
  // uses ||grad|| <= ||a||.
  double worst_l = 0.0, worst_var = 0.0;
  for (const auto& f : features_) {
    const int m = static_cast<int>(f.rows());
    Eigen::MatrixXd weighted_gram = Eigen::MatrixXd::Zero(dim_, dim_);
    double mean_norm_sq = 0.0;
    for (int s = 0; s < m; ++s) {
      const Eigen::RowVectorXd a = f.row(s);
      const double nsq = a.squaredNorm();
      weighted_gram.noalias() += nsq * (a.transpose() * a);
      mean_norm_sq += nsq;
    }
    weighted_gram /= static_cast<double>(m);
    mean_norm_sq /= static_cast<double>(m);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(weighted_gram, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw NumericError("smoothness eigensolver failed");
    worst_l = std::max(worst_l, std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff())) / 4.0);
    worst_var = std::max(worst_var, mean_norm_sq);
  }
  smoothness_ = worst_l;
  sigma_sq_ = worst_var;
}

ProblemInstance ProblemInstance::make_quadratic(int n_agents, int dim, std::uint64_t seed,
                                                double heterogeneity, int samples_per_agent,
                                                double sample_noise, Regularizer reg) {
  if (n_agents < 1) throw ConfigError("make_quadratic: n_agents must be >= 1");
  if (dim < 1) throw ConfigError("make_quadratic: dim must be >= 1");
  if (samples_per_agent < 1) throw ConfigError("make_quadratic: need at least 1 sample per agent");
  if (heterogeneity < 0.0 || sample_noise < 0.0) {
    throw ConfigError("make_quadratic: heterogeneity and noise must be >= 0");
  }
  RngStream rng(seed, 0x71756164 /* "quad" */);
  Eigen::VectorXd base(dim);
  for (int j = 0; j < dim; ++j) base[j] = rng.next_gaussian();

  ProblemInstance p;
  p.kind_ = Kind::quadratic;
  p.dim_ = dim;
  p.reg_ = reg;
  p.features_.reserve(static_cast<size_t>(n_agents));
  for (int i = 0; i < n_agents; ++i) {
    Eigen::VectorXd center = base;
    for (int j = 0; j < dim; ++j) center[j] += heterogeneity * rng.next_gaussian();
    Eigen::MatrixXd noise(samples_per_agent, dim);
    for (int s = 0; s < samples_per_agent; ++s)
      for (int j = 0; j < dim; ++j) noise(s, j) = rng.next_gaussian();
    // Recenter so the shard mean equals the agent center (up to rounding).
    const Eigen::RowVectorXd noise_mean = noise.colwise().mean();
    Eigen::MatrixXd shard(samples_per_agent, dim);
    for (int s = 0; s < samples_per_agent; ++s) {
      shard.row(s) = center.transpose() + sample_noise * (noise.row(s) - noise_mean);
    }
    p.features_.push_back(std::move(shard));
  }
  p.finalize_constants();
  return p;
}

ProblemInstance ProblemInstance::make_logistic_l1(int n_agents, int n_samples, int dim,
                                                  double sparsity, std::uint64_t seed,
                                                  double lambda, double feature_scale,
                                                  double margin_scale, double support_scale) {
  if (n_agents < 1) throw ConfigError("make_logistic_l1: n_agents must be >= 1");
  if (n_samples < n_agents) throw ConfigError("make_logistic_l1: need n_samples >= n_agents");
  if (dim < 1) throw ConfigError("make_logistic_l1: dim must be >= 1");
  if (!(sparsity > 0.0) || sparsity > 1.0) {
    throw ConfigError("make_logistic_l1: sparsity must be in (0, 1]");
  }
  if (!(feature_scale > 0.0) || !(margin_scale > 0.0) || !(support_scale > 0.0)) {
    throw ConfigError("make_logistic_l1: scales must be positive");
  }

  RngStream rng(seed, 0x6c6f6769 /* "logi" */);
  const int support = std::max(1, static_cast<int>(std::lround(sparsity * dim)));

  // Planted support and signs.
  std::vector<int> idx(static_cast<size_t>(dim));
  std::iota(idx.begin(), idx.end(), 0);
  for (int j = 0; j < support; ++j) {
    const int k = j + static_cast<int>(rng.next_below(dim - j));
    std::swap(idx[static_cast<size_t>(j)], idx[static_cast<size_t>(k)]);
  }
  Eigen::VectorXd signs = Eigen::VectorXd::Zero(dim);
  for (int j = 0; j < support; ++j) {
    signs[idx[static_cast<size_t>(j)]] = (rng.next_unit() < 0.5) ? -1.0 : 1.0;
  }

  Eigen::MatrixXd raw(n_samples, dim);
  for (int s = 0; s < n_samples; ++s)
    for (int j = 0; j < dim; ++j) raw(s, j) = rng.next_gaussian();

  const double unit = margin_scale / std::sqrt(static_cast<double>(support));
  const Eigen::VectorXd margins = raw * (signs * unit);

  Eigen::VectorXd labels(n_samples);
  bool ok = false;
  for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
    double first = 0.0;
    ok = false;
    for (int s = 0; s < n_samples; ++s) {
      labels[s] = (rng.next_unit() < sigmoid(margins[s])) ? 1.0 : -1.0;
      if (s == 0) first = labels[s];
      if (labels[s] != first) ok = true;
    }
  }
  if (!ok) throw ConfigError("make_logistic_l1: degenerate data, all labels equal");

  // Uniform random split: shuffle rows, then contiguous shards of equal size.
  std::vector<int> order(static_cast<size_t>(n_samples));
  std::iota(order.begin(), order.end(), 0);
  for (int s = n_samples - 1; s > 0; --s) {
    const int k = static_cast<int>(rng.next_below(s + 1));
    std::swap(order[static_cast<size_t>(s)], order[static_cast<size_t>(k)]);
  }

  Eigen::VectorXd column_scale = Eigen::VectorXd::Constant(dim, feature_scale);
  for (int j = 0; j < dim; ++j) {
    if (signs[j] != 0.0) column_scale[j] = feature_scale * support_scale;
  }

  ProblemInstance p;
  p.kind_ = Kind::logistic_l1;
  p.dim_ = dim;
  p.reg_ = Regularizer::l1(lambda);
  p.planted_signs_ = signs;
  const std::vector<int> sizes = shard_sizes(n_samples, n_agents);
  int pos = 0;
  for (int i = 0; i < n_agents; ++i) {
    Eigen::MatrixXd f(sizes[static_cast<size_t>(i)], dim);
    Eigen::VectorXd b(sizes[static_cast<size_t>(i)]);
    for (int s = 0; s < sizes[static_cast<size_t>(i)]; ++s, ++pos) {
      const int src = order[static_cast<size_t>(pos)];
      f.row(s) = raw.row(src).cwiseProduct(column_scale.transpose());
      b[s] = labels[src];
    }
    p.features_.push_back(std::move(f));
    p.labels_.push_back(std::move(b));
  }
  p.finalize_constants();
  return p;
}

ProblemInstance ProblemInstance::load_logistic_dataset(std::istream& is, int n_agents,
                                                       double lambda, std::uint64_t shuffle_seed) {
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::vector<double> row;
    std::string tok;
    while (ls >> tok) row.push_back(detail::parse_double(tok));
    if (row.size() < 2) throw IoError("dataset row needs at least one feature and a label");
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw IoError("dataset rows have inconsistent width");
    }
    rows.push_back(std::move(row));
  }
  const int n_samples = static_cast<int>(rows.size());
  if (n_samples < n_agents) throw ConfigError("dataset has fewer samples than agents");
  const int dim = static_cast<int>(rows.front().size()) - 1;

  std::vector<int> order(static_cast<size_t>(n_samples));
  std::iota(order.begin(), order.end(), 0);
  RngStream rng(shuffle_seed, 0x64617461 /* "data" */);
  for (int s = n_samples - 1; s > 0; --s) {
    const int k = static_cast<int>(rng.next_below(s + 1));
    std::swap(order[static_cast<size_t>(s)], order[static_cast<size_t>(k)]);
  }

  ProblemInstance p;
  p.kind_ = Kind::logistic_l1;
  p.dim_ = dim;
  p.reg_ = Regularizer::l1(lambda);
  p.planted_signs_ = Eigen::VectorXd::Zero(dim);
  const std::vector<int> sizes = shard_sizes(n_samples, n_agents);
  int pos = 0;
  bool seen_pos = false, seen_neg = false;
  for (int i = 0; i < n_agents; ++i) {
    Eigen::MatrixXd f(sizes[static_cast<size_t>(i)], dim);
    Eigen::VectorXd b(sizes[static_cast<size_t>(i)]);
    for (int s = 0; s < sizes[static_cast<size_t>(i)]; ++s, ++pos) {
      const auto& row = rows[static_cast<size_t>(order[static_cast<size_t>(pos)])];
      for (int j = 0; j < dim; ++j) f(s, j) = row[static_cast<size_t>(j)];
      const double raw_label = row.back();
      if (raw_label == 1.0) b[s] = 1.0;
      else if (raw_label == -1.0 || raw_label == 0.0) b[s] = -1.0;
      else throw IoError("dataset labels must be in {-1,+1} or {0,1}");
      (b[s] > 0 ? seen_pos : seen_neg) = true;
    }
    p.features_.push_back(std::move(f));
    p.labels_.push_back(std::move(b));
  }
  if (!seen_pos || !seen_neg) throw ConfigError("dataset is degenerate: all labels equal");
  p.finalize_constants();
  return p;
}

void ProblemInstance::save_dataset(std::ostream& os) const {
  for (int i = 0; i < n_agents(); ++i) {
    const auto& f = features_[static_cast<size_t>(i)];
    for (Eigen::Index s = 0; s < f.rows(); ++s) {
      for (int j = 0; j < dim_; ++j) os << detail::fmt_g17(f(s, j)) << ' ';
      const double label = (kind_ == Kind::logistic_l1) ? labels_[static_cast<size_t>(i)][s] : 0.0;
      os << detail::fmt_g17(label) << '\n';
    }
  }
}

Eigen::VectorXd ProblemInstance::grad_sample(int agent, int sample,
                                             const Eigen::VectorXd& x) const {
  const auto& f = shard_features(agent);
  if (sample < 0 || sample >= f.rows()) throw ConfigError("sample index out of range");
  if (kind_ == Kind::quadratic) {
    return x - f.row(sample).transpose();
  }
  const double b = labels_[static_cast<size_t>(agent)][sample];
  const double t = b * f.row(sample).dot(x);
  return (-b * sigmoid(-t)) * f.row(sample).transpose();
}

Eigen::VectorXd ProblemInstance::per_sample_gradient(int agent, int sample,
                                                     const Eigen::VectorXd& x) const {
  eval_count_->fetch_add(1, std::memory_order_relaxed);
  return grad_sample(agent, sample, x);
}

Eigen::VectorXd ProblemInstance::full_gradient(int agent, const Eigen::VectorXd& x) const {
  const int m = shard_size(agent);
  eval_count_->fetch_add(static_cast<std::uint64_t>(m), std::memory_order_relaxed);
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(dim_);
  for (int s = 0; s < m; ++s) acc += grad_sample(agent, s, x);
  return acc / static_cast<double>(m);
}

Eigen::VectorXd ProblemInstance::stochastic_gradient(int agent, const Eigen::VectorXd& x,
                                                     const Batch& batch) const {
  if (batch.agent != agent) throw ConfigError("stochastic_gradient: batch belongs to another agent");
  if (batch.ids.empty()) throw ConfigError("stochastic_gradient: empty batch");
  eval_count_->fetch_add(batch.ids.size(), std::memory_order_relaxed);
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(dim_);
  for (const auto id : batch.ids) acc += grad_sample(agent, id, x);
  return acc / static_cast<double>(batch.ids.size());
}

Eigen::VectorXd ProblemInstance::stochastic_gradient_difference(int agent,
                                                                const Eigen::VectorXd& x_new,
                                                                const Eigen::VectorXd& x_old,
                                                                const Batch& batch) const {
  if (batch.agent != agent) throw ConfigError("gradient_difference: batch belongs to another agent");
  if (batch.ids.empty()) throw ConfigError("gradient_difference: empty batch");
  eval_count_->fetch_add(2 * batch.ids.size(), std::memory_order_relaxed);
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(dim_);
  for (const auto id : batch.ids) {
    acc += grad_sample(agent, id, x_new) - grad_sample(agent, id, x_old);
  }
  return acc / static_cast<double>(batch.ids.size());
}

double ProblemInstance::local_loss(int agent, const Eigen::VectorXd& x) const {
  const auto& f = shard_features(agent);
  const int m = static_cast<int>(f.rows());
  double acc = 0.0;
  if (kind_ == Kind::quadratic) {
    for (int s = 0; s < m; ++s) acc += 0.5 * (x - f.row(s).transpose()).squaredNorm();
  } else {
    for (int s = 0; s < m; ++s) {
      const double b = labels_[static_cast<size_t>(agent)][s];
      acc += logistic_loss_of_margin(b * f.row(s).dot(x));
    }
  }
  return acc / static_cast<double>(m);
}

double ProblemInstance::global_smooth_loss(const Eigen::VectorXd& x) const {
  double acc = 0.0;
  for (int i = 0; i < n_agents(); ++i) acc += local_loss(i, x);
  return acc / static_cast<double>(n_agents());
}

double ProblemInstance::composite_loss(const Eigen::VectorXd& x) const {
  return global_smooth_loss(x) + reg_.value(x);
}

Eigen::VectorXd ProblemInstance::global_gradient(const Eigen::VectorXd& x) const {
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(dim_);
  for (int i = 0; i < n_agents(); ++i) {
    const int m = shard_size(i);
    Eigen::VectorXd shard = Eigen::VectorXd::Zero(dim_);
    for (int s = 0; s < m; ++s) shard += grad_sample(i, s, x);
    acc += shard / static_cast<double>(m);
  }
  return acc / static_cast<double>(n_agents());
}

double ProblemInstance::classification_accuracy(const Eigen::VectorXd& x) const {
  if (kind_ != Kind::logistic_l1) throw ConfigError("accuracy only defined for logistic instances");
  int correct = 0, total = 0;
  for (int i = 0; i < n_agents(); ++i) {
    const auto& f = features_[static_cast<size_t>(i)];
    for (Eigen::Index s = 0; s < f.rows(); ++s) {
      const double pred = (f.row(s).dot(x) > 0.0) ? 1.0 : -1.0;
      if (pred == labels_[static_cast<size_t>(i)][s]) ++correct;
      ++total;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

Batch ProblemInstance::sample_batch(int agent, int m, RngStream& stream) const {
  if (m < 1) throw ConfigError("sample_batch: m must be >= 1");
  const int size = shard_size(agent);
  Batch b;
  b.agent = agent;
  b.ids.resize(static_cast<size_t>(m));
  for (int s = 0; s < m; ++s) b.ids[static_cast<size_t>(s)] = static_cast<std::int32_t>(stream.next_below(size));
  return b;
}

std::uint64_t ProblemInstance::data_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const int k = static_cast<int>(kind_);
  fnv_mix(h, &k, sizeof(k));
  fnv_mix_double(h, static_cast<double>(dim_));
  fnv_mix_double(h, static_cast<double>(n_agents()));
  fnv_mix_double(h, reg_.kind == Regularizer::Kind::l1 ? reg_.lambda : -1.0);
  for (int i = 0; i < n_agents(); ++i) {
    const auto& f = features_[static_cast<size_t>(i)];
    for (Eigen::Index s = 0; s < f.rows(); ++s)
      for (Eigen::Index j = 0; j < f.cols(); ++j) fnv_mix_double(h, f(s, j));
    if (kind_ == Kind::logistic_l1) {
      const auto& b = labels_[static_cast<size_t>(i)];
      for (Eigen::Index s = 0; s < b.size(); ++s) fnv_mix_double(h, b[s]);
    }
  }
  return h;
}

}  // namespace deepstorm
