#include "resem/population.hpp"

#include <cmath>

#include "resem/errors.hpp"
#include "resem/linalg.hpp"

namespace resem {
namespace {

void require_rows(const Eigen::MatrixXd& m, int n, const char* name) {
  if (m.rows() != n)
    throw DomainError(std::string("population block '") + name + "' has " +
                      std::to_string(m.rows()) + " rows, expected " +
                      std::to_string(n));
  if (!m.allFinite())
    throw DomainError(std::string("population block '") + name +
                      "' contains non-finite entries");
}

double clamp_projection(double value, double total, const std::string& block_name) {
  const double tol = 1e-10 * std::max(1.0, std::fabs(total));
  if (value < 0.0) {
    if (value < -tol)
      throw DomainError("projection variance for block '" + block_name +
                        "' is negative beyond round-off: " + std::to_string(value));
    return 0.0;
  }
  if (value > total + tol)
    throw DomainError("projection variance for block '" + block_name +
                      "' exceeds the total variance beyond round-off");
  return std::min(value, std::max(total, 0.0));
}

}  // namespace

void FinitePopulation::validate() const {
  const int n = size();
  if (n < 2) throw DegenerateError("population must contain at least two units");
  if (y0.size() != n) throw DomainError("y0 length does not match y1");
  if (!y1.allFinite() || !y0.allFinite())
    throw DomainError("potential outcomes contain non-finite entries");
  require_rows(w, n, "w");
  require_rows(x, n, "x");
  require_rows(e, n, "e");
  require_rows(c, n, "c");
  if (!strata.empty() && static_cast<int>(strata.size()) != n)
    throw DomainError("strata labels length does not match population size");
  if (!clusters.empty() && static_cast<int>(clusters.size()) != n)
    throw DomainError("cluster labels length does not match population size");
  if (e_subset_of_c) {
    if (static_cast<int>(e_columns_in_c.size()) != e.cols())
      throw DomainError("e_columns_in_c must name one c column per e column");
    for (int j = 0; j < e.cols(); ++j) {
      const int cc = e_columns_in_c[static_cast<std::size_t>(j)];
      if (cc < 0 || cc >= c.cols())
        throw DomainError("e_columns_in_c index out of range");
      if ((e.col(j) - c.col(cc)).cwiseAbs().maxCoeff() != 0.0)
        throw DomainError("e block declared a sub-block of c but column " +
                          std::to_string(j) + " differs");
    }
  }
}

DesignFractions DesignFractions::from_counts(int population, int sample, int treated) {
  if (population < 2) throw DegenerateError("population must contain at least two units");
  if (sample <= 0 || sample > population)
    throw DomainError("sample size must lie in (0, N]");
  if (treated <= 0 || treated >= sample)
    throw DomainError("treated count must lie strictly between 0 and n");
  DesignFractions fr;
  fr.population_size = population;
  fr.sample_size = sample;
  fr.treated_size = treated;
  fr.f = static_cast<double>(sample) / population;
  fr.r1 = static_cast<double>(treated) / sample;
  fr.r0 = 1.0 - fr.r1;
  return fr;
}

double projection_variance_from_moments(const Eigen::Ref<const Eigen::VectorXd>& cross_cov,
                                        const Eigen::Ref<const Eigen::MatrixXd>& cov,
                                        double outcome_variance,
                                        const std::string& block_name) {
  if (cross_cov.size() == 0) return 0.0;
  const double value = quadratic_form_inverse(cov, cross_cov, block_name);
  return clamp_projection(value, outcome_variance, block_name);
}

double projection_variance(const Eigen::Ref<const Eigen::VectorXd>& outcome,
                           const Eigen::Ref<const Eigen::MatrixXd>& covariates,
                           const std::string& block_name) {
  if (outcome.size() != covariates.rows())
    throw DomainError("projection_variance: outcome/covariate row mismatch");
  if (outcome.size() < 2)
    throw DegenerateError("projection_variance: needs at least two units");
  if (covariates.cols() == 0) return 0.0;
  const Eigen::VectorXd cross = sample_cross_covariance(outcome, covariates);
  const Eigen::MatrixXd cov = sample_covariance(covariates);
  const double yc = (outcome.array() - outcome.mean()).square().sum() /
                    static_cast<double>(outcome.size() - 1);
  return projection_variance_from_moments(cross, cov, yc, block_name);
}

PopulationMoments fp_moments(const FinitePopulation& pop) {
  pop.validate();
  const int n = pop.size();
  const double denom = static_cast<double>(n - 1);

  PopulationMoments m;
  m.population_size = n;
  const Eigen::VectorXd tau = pop.tau();

  m.mean_y1 = pop.y1.mean();
  m.mean_y0 = pop.y0.mean();
  m.mean_tau = tau.mean();
  m.mean_w = column_means(pop.w);
  m.mean_x = column_means(pop.x);
  m.mean_e = column_means(pop.e);
  m.mean_c = column_means(pop.c);

  const Eigen::VectorXd y1c = pop.y1.array() - m.mean_y1;
  const Eigen::VectorXd y0c = pop.y0.array() - m.mean_y0;
  const Eigen::VectorXd tauc = tau.array() - m.mean_tau;
  m.var_y1 = y1c.squaredNorm() / denom;
  m.var_y0 = y0c.squaredNorm() / denom;
  m.var_tau = tauc.squaredNorm() / denom;

  const auto block = [&](const Eigen::MatrixXd& data, Eigen::MatrixXd& cov,
                         Eigen::VectorXd& c1, Eigen::VectorXd& c0,
                         Eigen::VectorXd& ct) {
    const Eigen::MatrixXd centered = data.rowwise() - data.colwise().mean();
    cov = centered.transpose() * centered / denom;
    c1 = centered.transpose() * y1c / denom;
    c0 = centered.transpose() * y0c / denom;
    ct = centered.transpose() * tauc / denom;
  };
  block(pop.w, m.cov_w, m.cov_y1_w, m.cov_y0_w, m.cov_tau_w);
  block(pop.x, m.cov_x, m.cov_y1_x, m.cov_y0_x, m.cov_tau_x);
  block(pop.e, m.cov_e, m.cov_y1_e, m.cov_y0_e, m.cov_tau_e);
  block(pop.c, m.cov_c, m.cov_y1_c, m.cov_y0_c, m.cov_tau_c);

  m.proj_var_y1_x = projection_variance_from_moments(m.cov_y1_x, m.cov_x, m.var_y1, "x");
  m.proj_var_y0_x = projection_variance_from_moments(m.cov_y0_x, m.cov_x, m.var_y0, "x");
  m.proj_var_tau_x = projection_variance_from_moments(m.cov_tau_x, m.cov_x, m.var_tau, "x");
  m.proj_var_tau_w = projection_variance_from_moments(m.cov_tau_w, m.cov_w, m.var_tau, "w");
  m.proj_var_y1_c = projection_variance_from_moments(m.cov_y1_c, m.cov_c, m.var_y1, "c");
  m.proj_var_y0_c = projection_variance_from_moments(m.cov_y0_c, m.cov_c, m.var_y0, "c");
  m.proj_var_tau_c = projection_variance_from_moments(m.cov_tau_c, m.cov_c, m.var_tau, "c");
  m.proj_var_tau_e = projection_variance_from_moments(m.cov_tau_e, m.cov_e, m.var_tau, "e");

  m.resid_var_y1_c = std::max(0.0, m.var_y1 - m.proj_var_y1_c);
  m.resid_var_y0_c = std::max(0.0, m.var_y0 - m.proj_var_y0_c);
  m.resid_var_tau_c = std::max(0.0, m.var_tau - m.proj_var_tau_c);
  return m;
}

TheoreticalComponents theoretical_components(const PopulationMoments& m,
                                             const DesignFractions& fr) {
  TheoreticalComponents out;
  out.v_tau_tau = m.var_y1 / fr.r1 + m.var_y0 / fr.r0 - fr.f * m.var_tau;
  if (!(out.v_tau_tau > 0.0))
    throw DegenerateError("V is nonpositive: outcomes carry no sampling variability");

  const auto ratio = [&](double numerator, const char* label) {
    double r = numerator / out.v_tau_tau;
    const double tol = 1e-8;
    if (r < 0.0) {
      if (r < -tol)
        throw DomainError(std::string("association measure ") + label +
                          " is negative beyond round-off");
      r = 0.0;
    }
    if (r > 1.0) {
      if (r > 1.0 + tol)
        throw DomainError(std::string("association measure ") + label +
                          " exceeds one beyond round-off");
      r = 1.0;
    }
    return r;
  };

  out.r_s2 = ratio((1.0 - fr.f) * m.proj_var_tau_w, "r_s2");
  out.r_t2 = ratio(m.proj_var_y1_x / fr.r1 + m.proj_var_y0_x / fr.r0 - m.proj_var_tau_x,
                   "r_t2");
  out.r_e2 = ratio((1.0 - fr.f) * m.proj_var_tau_e, "r_e2");
  out.r_c2 = ratio(m.proj_var_y1_c / fr.r1 + m.proj_var_y0_c / fr.r0 - m.proj_var_tau_c,
                   "r_c2");
  return out;
}

}  // namespace resem
