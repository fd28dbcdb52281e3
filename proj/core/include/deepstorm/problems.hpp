#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <vector>

#include "deepstorm/proximal.hpp"
#include "deepstorm/rng.hpp"

namespace deepstorm {

/// Mini-batch of sample ids belonging to one agent's shard. Ids are drawn
/// uniformly with replacement, so they may repeat (including when the batch
/// size equals the shard size).
struct Batch {
  int agent = 0;
  std::vector<std::int32_t> ids;
  int size() const { return static_cast<int>(ids.size()); }
};

// Default scales of the synthetic logistic generator. Sized so that at the
// default lambda the composite optimum is genuinely sparse yet informative:
// inactive coordinates carry gradient scores several sigma below lambda,
// while active ones score an order of magnitude above it. Support features
// are generated wider than noise features, which keeps the curvature of the
// fitted subspace within a small factor of the mean-squared smoothness bound
// (first-order methods then make visible progress at admissible step sizes).
inline constexpr double kDefaultFeatureScale = 0.002;
inline constexpr double kDefaultMarginScale = 1.5;
inline constexpr double kDefaultSupportScale = 4.0;

/// Local objectives f_i in empirical-expectation form over per-agent data
/// shards, with a shared regularizer. Instances are immutable after
/// construction; gradient evaluation is pure. The per-sample gradient
/// evaluation counter is shared instrumentation for the test suite.
class ProblemInstance {
 public:
  enum class Kind { quadratic, logistic_l1 };

  // -- factories ------------------------------------------------------------

  /// f_i(x) = mean over the shard of 1/2 ||x - s||^2, where the shard samples
  /// s scatter (sample_noise) around an agent center; centers spread across
  /// agents with the given heterogeneity. Shard means equal the agent centers
  /// up to rounding, so the minimizer of the smooth part is the center mean.
  /// L = 1 exactly; sigma^2 is the largest per-agent sample dispersion.
  static ProblemInstance make_quadratic(int n_agents, int dim, std::uint64_t seed,
                                        double heterogeneity,
                                        int samples_per_agent = 32,
                                        double sample_noise = 1.0,
                                        Regularizer reg = Regularizer::zero());

  /// Binary logistic loss over synthetic data with planted sparse weights.
  /// `sparsity` is the fraction of active coordinates. Labels are drawn from
  /// the logistic model at the planted weights; support features have scale
  /// feature_scale * support_scale, noise features feature_scale. The default
  /// scales are sized so that, at the default lambda, the composite optimum
  /// recovers the planted sign pattern (inactive coordinates exactly zero).
  static ProblemInstance make_logistic_l1(int n_agents, int n_samples, int dim,
                                          double sparsity, std::uint64_t seed,
                                          double lambda = 1e-4,
                                          double feature_scale = kDefaultFeatureScale,
                                          double margin_scale = kDefaultMarginScale,
                                          double support_scale = kDefaultSupportScale);

  /// Delimited-text dataset (one sample per row: features then label) split
  /// across agents after a seeded shuffle. Labels may be {-1,+1} or {0,1}.
  static ProblemInstance load_logistic_dataset(std::istream& is, int n_agents,
                                               double lambda, std::uint64_t shuffle_seed);

  /// Writes every sample, shard by shard, one row per sample. Quadratic
  /// instances write a trailing 0 label so the format is uniform.
  void save_dataset(std::ostream& os) const;

  // -- shape ----------------------------------------------------------------

  Kind kind() const { return kind_; }
  int n_agents() const { return static_cast<int>(features_.size()); }
  int dim() const { return dim_; }
  int shard_size(int agent) const;
  const Regularizer& regularizer() const { return reg_; }

  /// Mean-squared smoothness constant L:
  /// E ||grad f(a; s) - grad f(b; s)||^2 <= L^2 ||a - b||^2 over the shard.
  double smoothness() const { return smoothness_; }
  double sigma_sq() const { return sigma_sq_; }

  // -- oracles ----------------------------------------------------------------

  /// Exact shard-average gradient (a full pass in id order).
  Eigen::VectorXd full_gradient(int agent, const Eigen::VectorXd& x) const;

  /// Mean gradient over the listed samples; unbiased for full_gradient under
  /// uniform-with-replacement sampling.
  Eigen::VectorXd stochastic_gradient(int agent, const Eigen::VectorXd& x,
                                      const Batch& batch) const;

  /// Mean over the batch of grad f(x_new; s) - grad f(x_old; s), accumulated
  /// per sample so the result is exactly zero when x_new == x_old.
  Eigen::VectorXd stochastic_gradient_difference(int agent, const Eigen::VectorXd& x_new,
                                                 const Eigen::VectorXd& x_old,
                                                 const Batch& batch) const;

  Eigen::VectorXd per_sample_gradient(int agent, int sample, const Eigen::VectorXd& x) const;

  double local_loss(int agent, const Eigen::VectorXd& x) const;   // f_i(x)
  double global_smooth_loss(const Eigen::VectorXd& x) const;       // f(x)
  double composite_loss(const Eigen::VectorXd& x) const;           // f(x) + r(x)

  /// grad f(x) = mean over agents of the exact shard gradients. Reporting
  /// path: does not touch the evaluation counter.
  Eigen::VectorXd global_gradient(const Eigen::VectorXd& x) const;

  /// Fraction of all samples classified correctly by sign(a . x). Logistic only.
  double classification_accuracy(const Eigen::VectorXd& x) const;

  Batch sample_batch(int agent, int m, RngStream& stream) const;

  // -- data access (test oracles) --------------------------------------------

  const Eigen::MatrixXd& shard_features(int agent) const;
  const Eigen::VectorXd& shard_labels(int agent) const;
  Eigen::VectorXd quadratic_center(int agent) const;

  /// Planted sign pattern (+1/-1 on support, 0 elsewhere); logistic only.
  const Eigen::VectorXd& planted_signs() const;

  /// FNV-1a hash of kind, shapes, regularizer and all sample bits.
  std::uint64_t data_hash() const;

  // -- instrumentation --------------------------------------------------------

  std::uint64_t gradient_eval_count() const { return eval_count_->load(); }
  void reset_gradient_eval_count() const { eval_count_->store(0); }

 private:
  ProblemInstance() : eval_count_(std::make_shared<std::atomic<std::uint64_t>>(0)) {}
  void validate_shards() const;
  void finalize_constants();
  Eigen::VectorXd grad_sample(int agent, int sample, const Eigen::VectorXd& x) const;

  Kind kind_ = Kind::quadratic;
  int dim_ = 0;
  Regularizer reg_;
  double smoothness_ = 1.0;
  double sigma_sq_ = 0.0;
  std::vector<Eigen::MatrixXd> features_;  // per agent, rows are samples
  std::vector<Eigen::VectorXd> labels_;    // logistic: +-1 per sample
  Eigen::VectorXd planted_signs_;          // logistic only
  mutable std::shared_ptr<std::atomic<std::uint64_t>> eval_count_;
};

using ProblemPtr = std::shared_ptr<const ProblemInstance>;

}  // namespace deepstorm
