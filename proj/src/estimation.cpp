#include "resem/estimation.hpp"

#include <cmath>
#include <string>

#include "resem/errors.hpp"
#include "resem/linalg.hpp"

namespace resem {
namespace {

void split_rows(const ObservedExperiment& exp, std::vector<int>& treated,
                std::vector<int>& control) {
  treated.clear();
  control.clear();
  for (int i = 0; i < exp.sample_size(); ++i) {
    if (exp.t[static_cast<std::size_t>(i)])
      treated.push_back(i);
    else
      control.push_back(i);
  }
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, const std::vector<int>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

Eigen::VectorXd take(const Eigen::VectorXd& v, const std::vector<int>& rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    out(static_cast<Eigen::Index>(i)) = v(rows[i]);
  return out;
}

double sample_variance(const Eigen::VectorXd& v) {
  const Eigen::Index n = v.size();
  if (n < 2) throw DegenerateError("sample variance needs at least two observations");
  return (v.array() - v.mean()).square().sum() / static_cast<double>(n - 1);
}

// Slope of the least-squares projection of y on the columns of data
// (intercept implicit through centering).
Eigen::VectorXd ols_slope(const Eigen::VectorXd& y, const Eigen::MatrixXd& data,
                          const std::string& label) {
  if (data.cols() == 0) return Eigen::VectorXd(0);
  const Eigen::MatrixXd cov = sample_covariance(data);
  const Eigen::VectorXd cross = sample_cross_covariance(y, data);
  return capped_inverse(cov, label) * cross;
}

}  // namespace

int ObservedExperiment::treated_size() const {
  int count = 0;
  for (auto v : t) count += v;
  return count;
}

void ObservedExperiment::validate() const {
  const int n = sample_size();
  if (n < 2) throw DegenerateError("experiment must contain at least two sampled units");
  if (static_cast<int>(t.size()) != n)
    throw DomainError("assignment vector length does not match outcomes");
  const auto check = [&](const Eigen::MatrixXd& m, const char* name) {
    if (m.rows() != n)
      throw DomainError(std::string("covariate block '") + name +
                        "' row count does not match outcomes");
  };
  check(w, "w");
  check(x, "x");
  check(e, "e");
  check(c, "c");
  if (e_population_mean.size() != e.cols())
    throw DomainError("population mean of e has wrong dimension");
  const int n1 = treated_size();
  if (n1 <= 0 || n1 >= n) throw DomainError("both arms must be non-empty");
}

ObservedExperiment observe(const FinitePopulation& pop, const Realization& realization) {
  if (realization.population_size() != pop.size())
    throw DomainError("observe: realization does not match population size");
  const std::vector<int> sampled = realization.sampled_indices();
  if (static_cast<int>(sampled.size()) != realization.sample_size())
    throw DomainError("observe: inconsistent realization");

  ObservedExperiment exp;
  exp.t = realization.t;
  exp.w = take_rows(pop.w, sampled);
  exp.x = take_rows(pop.x, sampled);
  exp.e = take_rows(pop.e, sampled);
  exp.c = take_rows(pop.c, sampled);
  exp.e_population_mean = column_means(pop.e);
  exp.y.resize(static_cast<Eigen::Index>(sampled.size()));
  for (std::size_t i = 0; i < sampled.size(); ++i) {
    const int unit = sampled[i];
    exp.y(static_cast<Eigen::Index>(i)) =
        realization.t[i] ? pop.y1(unit) : pop.y0(unit);
  }
  exp.fractions = DesignFractions::from_counts(pop.size(),
                                               realization.sample_size(),
                                               realization.treated_size());
  return exp;
}

AdjustmentCoefficients AdjustmentCoefficients::zero(int c_cols, int e_cols) {
  AdjustmentCoefficients out;
  out.beta = Eigen::VectorXd::Zero(c_cols);
  out.gamma = Eigen::VectorXd::Zero(e_cols);
  return out;
}

double difference_in_means(const Eigen::Ref<const Eigen::VectorXd>& y,
                           const std::vector<std::uint8_t>& t) {
  if (y.size() != static_cast<Eigen::Index>(t.size()))
    throw DomainError("difference_in_means: length mismatch");
  double sum1 = 0.0, sum0 = 0.0;
  long n1 = 0, n0 = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (t[static_cast<std::size_t>(i)]) {
      sum1 += y(i);
      ++n1;
    } else {
      sum0 += y(i);
      ++n0;
    }
  }
  if (n1 == 0 || n0 == 0)
    throw DomainError("difference_in_means: both arms must be non-empty");
  return sum1 / n1 - sum0 / n0;
}

double difference_in_means(const ObservedExperiment& exp) {
  return difference_in_means(exp.y, exp.t);
}

Eigen::VectorXd adjusted_observed_outcomes(const ObservedExperiment& exp,
                                           const Eigen::Ref<const Eigen::VectorXd>& beta,
                                           const Eigen::Ref<const Eigen::VectorXd>& gamma) {
  if (beta.size() != exp.c.cols() || gamma.size() != exp.e.cols())
    throw DomainError("adjustment coefficients do not match covariate dimensions");
  const double r1 = exp.fractions.r1;
  const double r0 = exp.fractions.r0;
  Eigen::VectorXd adjusted = exp.y;
  if (beta.size() > 0) adjusted -= exp.c * beta;
  if (gamma.size() > 0) {
    const Eigen::VectorXd e_term =
        (exp.e.rowwise() - exp.e_population_mean.transpose()) * gamma;
    for (int i = 0; i < exp.sample_size(); ++i)
      adjusted(i) -= exp.t[static_cast<std::size_t>(i)] ? r1 * e_term(i) : -r0 * e_term(i);
  }
  return adjusted;
}

double adjusted_estimator(const ObservedExperiment& exp,
                          const Eigen::Ref<const Eigen::VectorXd>& beta,
                          const Eigen::Ref<const Eigen::VectorXd>& gamma) {
  if (beta.size() != exp.c.cols() || gamma.size() != exp.e.cols())
    throw DomainError("adjustment coefficients do not match covariate dimensions");
  double estimate = difference_in_means(exp);
  if (beta.size() > 0) {
    std::vector<int> treated, control;
    split_rows(exp, treated, control);
    const Eigen::VectorXd diff_c = column_means(take_rows(exp.c, treated)) -
                                   column_means(take_rows(exp.c, control));
    estimate -= beta.dot(diff_c);
  }
  if (gamma.size() > 0) {
    const Eigen::VectorXd delta_e = column_means(exp.e) - exp.e_population_mean;
    estimate -= gamma.dot(delta_e);
  }
  return estimate;
}

AdjustmentCoefficients fit_adjustment_coefficients(const ObservedExperiment& exp) {
  exp.validate();
  std::vector<int> treated, control;
  split_rows(exp, treated, control);

  const int needed = std::max(exp.c.cols(), exp.e.cols()) + 2;
  AdjustmentCoefficients out;
  out.provenance = AdjustmentCoefficients::Provenance::estimated;
  if (static_cast<int>(treated.size()) < needed ||
      static_cast<int>(control.size()) < needed) {
    out = AdjustmentCoefficients::zero(static_cast<int>(exp.c.cols()),
                                       static_cast<int>(exp.e.cols()));
    out.provenance = AdjustmentCoefficients::Provenance::estimated;
    out.fell_back_to_zero = true;
    return out;
  }

  const Eigen::VectorXd y1 = take(exp.y, treated);
  const Eigen::VectorXd y0 = take(exp.y, control);

  const Eigen::VectorXd beta1 = ols_slope(y1, take_rows(exp.c, treated), "c (treated arm)");
  const Eigen::VectorXd beta0 = ols_slope(y0, take_rows(exp.c, control), "c (control arm)");
  const Eigen::VectorXd gamma1 = ols_slope(y1, take_rows(exp.e, treated), "e (treated arm)");
  const Eigen::VectorXd gamma0 = ols_slope(y0, take_rows(exp.e, control), "e (control arm)");

  const double r1 = exp.fractions.r1;
  const double r0 = exp.fractions.r0;
  out.beta = r0 * beta1 + r1 * beta0;
  out.gamma = gamma1 - gamma0;
  return out;
}

AdjustmentCoefficients population_adjustment_coefficients(const FinitePopulation& pop,
                                                          const DesignFractions& fractions) {
  const PopulationMoments m = fp_moments(pop);
  AdjustmentCoefficients out;
  out.provenance = AdjustmentCoefficients::Provenance::fixed;
  if (pop.c.cols() > 0) {
    const Eigen::MatrixXd inv_c = capped_inverse(m.cov_c, "c");
    const Eigen::VectorXd beta1 = inv_c * m.cov_y1_c;
    const Eigen::VectorXd beta0 = inv_c * m.cov_y0_c;
    out.beta = fractions.r0 * beta1 + fractions.r1 * beta0;
  } else {
    out.beta = Eigen::VectorXd(0);
  }
  if (pop.e.cols() > 0) {
    const Eigen::MatrixXd inv_e = capped_inverse(m.cov_e, "e");
    out.gamma = inv_e * (m.cov_y1_e - m.cov_y0_e);
  } else {
    out.gamma = Eigen::VectorXd(0);
  }
  return out;
}

namespace {

// || cross1' covroot1^{-1} - cross0' covroot0^{-1} ||^2 for one block: the
// split-arm analogue of a projection variance, built from per-arm
// positive-definite covariance square roots.
double split_projection_variance(const Eigen::MatrixXd& block1,
                                 const Eigen::MatrixXd& block0,
                                 const Eigen::VectorXd& y1,
                                 const Eigen::VectorXd& y0,
                                 const std::string& name) {
  if (block1.cols() == 0) return 0.0;
  const Eigen::VectorXd cross1 = sample_cross_covariance(y1, block1);
  const Eigen::VectorXd cross0 = sample_cross_covariance(y0, block0);
  const Eigen::MatrixXd root_inv1 =
      spectral_inverse_sqrt(sample_covariance(block1), name + " (treated arm)");
  const Eigen::MatrixXd root_inv0 =
      spectral_inverse_sqrt(sample_covariance(block0), name + " (control arm)");
  return (root_inv1 * cross1 - root_inv0 * cross0).squaredNorm();
}

double clamp_unit(double v) { return std::min(1.0, std::max(0.0, v)); }

}  // namespace

ComponentEstimates estimate_components(const ObservedExperiment& exp,
                                       const Eigen::Ref<const Eigen::VectorXd>& beta,
                                       const Eigen::Ref<const Eigen::VectorXd>& gamma,
                                       const KnowledgeFlags& flags) {
  exp.validate();
  std::vector<int> treated, control;
  split_rows(exp, treated, control);
  if (treated.size() < 2 || control.size() < 2)
    throw DegenerateError("estimate_components: each arm needs at least two units");

  const Eigen::VectorXd adjusted = adjusted_observed_outcomes(exp, beta, gamma);
  const Eigen::VectorXd adj1 = take(adjusted, treated);
  const Eigen::VectorXd adj0 = take(adjusted, control);

  ComponentEstimates out;
  out.flags = flags;
  out.s2[1] = sample_variance(adj1);
  out.s2[0] = sample_variance(adj0);

  const Eigen::MatrixXd x1 = take_rows(exp.x, treated);
  const Eigen::MatrixXd x0 = take_rows(exp.x, control);
  if (exp.x.cols() > 0) {
    out.cov_x[1] = sample_covariance(x1);
    out.cov_x[0] = sample_covariance(x0);
    out.cov_yx[1] = sample_cross_covariance(adj1, x1);
    out.cov_yx[0] = sample_cross_covariance(adj0, x0);
    out.proj_var_yx[1] = projection_variance_from_moments(out.cov_yx[1], out.cov_x[1],
                                                          out.s2[1], "x (treated arm)");
    out.proj_var_yx[0] = projection_variance_from_moments(out.cov_yx[0], out.cov_x[0],
                                                          out.s2[0], "x (control arm)");
    out.proj_var_tau_x = split_projection_variance(x1, x0, adj1, adj0, "x");
  } else {
    out.cov_x[1] = out.cov_x[0] = Eigen::MatrixXd(0, 0);
    out.cov_yx[1] = out.cov_yx[0] = Eigen::VectorXd(0);
  }

  out.proj_var_tau_w = split_projection_variance(take_rows(exp.w, treated),
                                                 take_rows(exp.w, control),
                                                 adj1, adj0, "w");
  out.proj_var_tau_c = split_projection_variance(take_rows(exp.c, treated),
                                                 take_rows(exp.c, control),
                                                 adj1, adj0, "c");

  const double r1 = exp.fractions.r1;
  const double r0 = exp.fractions.r0;
  const double f = exp.fractions.f;
  out.v_hat = out.s2[1] / r1 + out.s2[0] / r0 - f * out.proj_var_tau_c;
  if (!(out.v_hat > 0.0))
    throw DegenerateError("estimate_components: estimated variance is nonpositive");

  out.r_s2 = flags.sampling_known
                 ? clamp_unit((1.0 - f) * out.proj_var_tau_w / out.v_hat)
                 : 0.0;
  out.r_t2 = flags.assignment_known
                 ? clamp_unit((out.proj_var_yx[1] / r1 + out.proj_var_yx[0] / r0 -
                               out.proj_var_tau_x) /
                              out.v_hat)
                 : 0.0;
  const double total = out.r_s2 + out.r_t2;
  if (total > 1.0) {
    out.r_s2 /= total;
    out.r_t2 /= total;
  }
  return out;
}

}  // namespace resem
