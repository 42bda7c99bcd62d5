#include "resem/balance.hpp"

#include <cmath>
#include <limits>

#include "resem/chi_square.hpp"
#include "resem/errors.hpp"
#include "resem/linalg.hpp"

namespace resem {

double threshold_from_acceptance(int dim, double p) {
  if (!(p > 0.0 && p <= 1.0))
    throw DomainError("acceptance probability must lie in (0, 1]");
  if (p == 1.0) return std::numeric_limits<double>::infinity();
  if (dim < 1) throw DomainError("threshold_from_acceptance: dimension must be >= 1");
  return chi_square_quantile(dim, p);
}

BalanceCriteria BalanceCriteria::from_acceptance(int sampling_dim, int assignment_dim,
                                                 double p_s, double p_t) {
  BalanceCriteria c;
  c.sampling_dim = sampling_dim;
  c.assignment_dim = assignment_dim;
  c.p_s = p_s;
  c.p_t = p_t;
  c.a_s = (sampling_dim == 0) ? std::numeric_limits<double>::infinity()
                              : threshold_from_acceptance(sampling_dim, p_s);
  c.a_t = (assignment_dim == 0) ? std::numeric_limits<double>::infinity()
                                : threshold_from_acceptance(assignment_dim, p_t);
  return c;
}

BalanceCriteria BalanceCriteria::from_thresholds(int sampling_dim, int assignment_dim,
                                                 double a_s, double a_t) {
  if (!(a_s > 0.0) || !(a_t > 0.0))
    throw DomainError("balance thresholds must be positive");
  BalanceCriteria c;
  c.sampling_dim = sampling_dim;
  c.assignment_dim = assignment_dim;
  c.a_s = a_s;
  c.a_t = a_t;
  c.p_s = (std::isinf(a_s) || sampling_dim == 0) ? 1.0 : chi_square_cdf(sampling_dim, a_s);
  c.p_t = (std::isinf(a_t) || assignment_dim == 0) ? 1.0 : chi_square_cdf(assignment_dim, a_t);
  return c;
}

bool BalanceCriteria::sampling_active() const {
  return sampling_dim > 0 && !std::isinf(a_s);
}

bool BalanceCriteria::assignment_active() const {
  return assignment_dim > 0 && !std::isinf(a_t);
}

BalanceMetric::BalanceMetric(const Eigen::Ref<const Eigen::MatrixXd>& cov,
                             double scale, const std::string& block_name) {
  if (cov.rows() == 0) {
    inverse_.resize(0, 0);
    return;
  }
  if (!(scale > 0.0))
    throw DomainError("balance metric scale must be positive for block '" +
                      block_name + "'");
  inverse_ = capped_inverse(cov, block_name) / scale;
}

double BalanceMetric::operator()(const Eigen::Ref<const Eigen::VectorXd>& d) const {
  if (d.size() == 0) return 0.0;
  return d.dot(inverse_ * d);
}

double mahalanobis_sampling(const Eigen::Ref<const Eigen::MatrixXd>& w,
                            const std::vector<std::uint8_t>& z,
                            const Eigen::Ref<const Eigen::MatrixXd>& cov_w,
                            int sample_size, int population_size) {
  const int n_rows = static_cast<int>(w.rows());
  if (static_cast<int>(z.size()) != n_rows)
    throw DomainError("mahalanobis_sampling: indicator length mismatch");
  if (population_size != n_rows)
    throw DomainError("mahalanobis_sampling: population size mismatch");
  if (sample_size <= 0 || sample_size > population_size)
    throw DomainError("mahalanobis_sampling: sample size out of range");
  if (sample_size == population_size)
    throw DomainError(
        "mahalanobis_sampling: metric undefined when every unit is sampled "
        "(1/n - 1/N = 0); use an assignment-only design");
  int count = 0;
  for (auto v : z) count += v;
  if (count != sample_size)
    throw DomainError("mahalanobis_sampling: indicator sum does not equal n");
  if (w.cols() == 0) return 0.0;

  Eigen::VectorXd sampled_mean = Eigen::VectorXd::Zero(w.cols());
  for (int i = 0; i < n_rows; ++i)
    if (z[static_cast<std::size_t>(i)]) sampled_mean += w.row(i).transpose();
  sampled_mean /= static_cast<double>(sample_size);

  const Eigen::VectorXd diff = sampled_mean - column_means(w);
  const double scale = 1.0 / sample_size - 1.0 / population_size;
  BalanceMetric metric(cov_w, scale, "w");
  return metric(diff);
}

namespace {

double assignment_distance(const Eigen::Ref<const Eigen::MatrixXd>& x_sampled,
                           const std::vector<std::uint8_t>& t, int treated,
                           int control, const Eigen::MatrixXd& covariance) {
  const int n = static_cast<int>(x_sampled.rows());
  if (static_cast<int>(t.size()) != n)
    throw DomainError("mahalanobis_assignment: indicator length mismatch");
  if (treated <= 0 || control <= 0 || treated + control != n)
    throw DomainError("mahalanobis_assignment: arm sizes must be positive and sum to n");
  int count = 0;
  for (auto v : t) count += v;
  if (count != treated)
    throw DomainError("mahalanobis_assignment: indicator sum does not equal n1");
  if (x_sampled.cols() == 0) return 0.0;

  Eigen::VectorXd mean1 = Eigen::VectorXd::Zero(x_sampled.cols());
  Eigen::VectorXd mean0 = Eigen::VectorXd::Zero(x_sampled.cols());
  for (int i = 0; i < n; ++i) {
    if (t[static_cast<std::size_t>(i)])
      mean1 += x_sampled.row(i).transpose();
    else
      mean0 += x_sampled.row(i).transpose();
  }
  mean1 /= static_cast<double>(treated);
  mean0 /= static_cast<double>(control);

  const double scale = static_cast<double>(n) / (static_cast<double>(treated) * control);
  BalanceMetric metric(covariance, scale, "x");
  return metric(mean1 - mean0);
}

}  // namespace

double mahalanobis_assignment(const Eigen::Ref<const Eigen::MatrixXd>& x_sampled,
                              const std::vector<std::uint8_t>& t,
                              int treated, int control) {
  if (x_sampled.cols() == 0)
    return assignment_distance(x_sampled, t, treated, control, Eigen::MatrixXd(0, 0));
  return assignment_distance(x_sampled, t, treated, control,
                             sample_covariance(x_sampled));
}

double mahalanobis_assignment(const Eigen::Ref<const Eigen::MatrixXd>& x_sampled,
                              const std::vector<std::uint8_t>& t,
                              int treated, int control,
                              const Eigen::Ref<const Eigen::MatrixXd>& covariance) {
  return assignment_distance(x_sampled, t, treated, control, covariance);
}

}  // namespace resem
