#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace resem {

// Balance thresholds for the two rejection stages.  A threshold of +inf
// (equivalently an acceptance probability of 1) disables that stage's
// criterion.  When built from acceptance probabilities, the threshold is the
// chi-square quantile at that probability with the block's dimension as
// degrees of freedom.
struct BalanceCriteria {
  int sampling_dim = 0;    // J, columns of the sampling block
  int assignment_dim = 0;  // K, columns of the assignment block
  double a_s = std::numeric_limits<double>::infinity();
  double a_t = std::numeric_limits<double>::infinity();
  double p_s = 1.0;
  double p_t = 1.0;

  static BalanceCriteria from_acceptance(int sampling_dim, int assignment_dim,
                                         double p_s, double p_t);
  static BalanceCriteria from_thresholds(int sampling_dim, int assignment_dim,
                                         double a_s, double a_t);

  bool sampling_active() const;
  bool assignment_active() const;
};

// Threshold from an asymptotic acceptance probability: the chi-square
// quantile at p with `dim` degrees of freedom; p = 1 gives +inf.
double threshold_from_acceptance(int dim, double p);

// Imbalance between the sampled units and the whole population:
// (mean_S - mean) ' [ (1/n - 1/N) cov ]^{-1} (mean_S - mean).
// `w` holds one row per population unit, `z` marks the n sampled units and
// `cov_w` is the population covariance of the block.
double mahalanobis_sampling(const Eigen::Ref<const Eigen::MatrixXd>& w,
                            const std::vector<std::uint8_t>& z,
                            const Eigen::Ref<const Eigen::MatrixXd>& cov_w,
                            int sample_size, int population_size);

// Imbalance between treatment arms among the sampled units:
// (mean_1 - mean_0) ' [ n/(n1 n0) s2 ]^{-1} (mean_1 - mean_0),
// with s2 the sample covariance of the sampled rows.  Pass `covariance`
// to use a fixed (e.g. population) covariance instead.
double mahalanobis_assignment(const Eigen::Ref<const Eigen::MatrixXd>& x_sampled,
                              const std::vector<std::uint8_t>& t,
                              int treated, int control);
double mahalanobis_assignment(const Eigen::Ref<const Eigen::MatrixXd>& x_sampled,
                              const std::vector<std::uint8_t>& t,
                              int treated, int control,
                              const Eigen::Ref<const Eigen::MatrixXd>& covariance);

// Precomputed quadratic form for the hot rejection loops: the metric inverse
// is factored once, then each candidate costs one mean and one small
// matrix-vector product.
class BalanceMetric {
 public:
  // metric = scale * cov; evaluates d' metric^{-1} d.
  BalanceMetric(const Eigen::Ref<const Eigen::MatrixXd>& cov, double scale,
                const std::string& block_name);
  double operator()(const Eigen::Ref<const Eigen::VectorXd>& difference) const;
  int dim() const { return static_cast<int>(inverse_.rows()); }

 private:
  Eigen::MatrixXd inverse_;
};

}  // namespace resem
