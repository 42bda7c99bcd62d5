#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace resem {

// A fixed finite population: both potential outcomes for every unit plus the
// covariate blocks visible at each stage.
//   w — sampling-stage covariates (all units)
//   x — assignment-stage covariates (observed for sampled units; stored for
//       all units so designs can be simulated)
//   e — analysis covariates available for all units
//   c — analysis covariates available for sampled units
// Blocks may have zero columns.  Randomness never touches this object; it is
// the fixed ground truth that samplings and assignments are drawn against.
struct FinitePopulation {
  Eigen::VectorXd y1;
  Eigen::VectorXd y0;
  Eigen::MatrixXd w;
  Eigen::MatrixXd x;
  Eigen::MatrixXd e;
  Eigen::MatrixXd c;
  std::vector<int> strata;    // optional, size N or empty
  std::vector<int> clusters;  // optional, size N or empty

  // When set, columns `e_columns_in_c` of the c block must equal e exactly.
  bool e_subset_of_c = false;
  std::vector<int> e_columns_in_c;

  int size() const { return static_cast<int>(y1.size()); }
  Eigen::VectorXd tau() const { return y1 - y0; }

  // Enforces the row-count, finiteness and sub-block invariants.
  void validate() const;
};

struct DesignFractions {
  double f = 0.0;   // n / N
  double r1 = 0.0;  // n1 / n
  double r0 = 0.0;  // n0 / n
  int population_size = 0;
  int sample_size = 0;
  int treated_size = 0;

  static DesignFractions from_counts(int population, int sample, int treated);
};

// Every fixed moment of the finite population, all with divisor N-1.
struct PopulationMoments {
  int population_size = 0;

  double mean_y1 = 0.0, mean_y0 = 0.0, mean_tau = 0.0;
  Eigen::VectorXd mean_w, mean_x, mean_e, mean_c;

  double var_y1 = 0.0, var_y0 = 0.0, var_tau = 0.0;  // S1^2, S0^2, Stau^2
  Eigen::MatrixXd cov_w, cov_x, cov_e, cov_c;

  // Cross-covariances between outcomes / individual effects and each block.
  Eigen::VectorXd cov_y1_w, cov_y0_w, cov_tau_w;
  Eigen::VectorXd cov_y1_x, cov_y0_x, cov_tau_x;
  Eigen::VectorXd cov_y1_e, cov_y0_e, cov_tau_e;
  Eigen::VectorXd cov_y1_c, cov_y0_c, cov_tau_c;

  // Variances of linear projections onto each block.
  double proj_var_y1_x = 0.0, proj_var_y0_x = 0.0, proj_var_tau_x = 0.0;
  double proj_var_tau_w = 0.0;
  double proj_var_y1_c = 0.0, proj_var_y0_c = 0.0, proj_var_tau_c = 0.0;
  double proj_var_tau_e = 0.0;

  // Residual variances after projecting onto the c block.
  double resid_var_y1_c = 0.0, resid_var_y0_c = 0.0, resid_var_tau_c = 0.0;
};

// The fixed design-level variance and association measures: V is the
// (scaled) variance of the difference in means under unrestricted
// sampling/assignment, and the four R^2 values measure how much of it the
// covariates at each stage explain.
struct TheoreticalComponents {
  double v_tau_tau = 0.0;
  double r_s2 = 0.0;
  double r_t2 = 0.0;
  double r_e2 = 0.0;
  double r_c2 = 0.0;
};

PopulationMoments fp_moments(const FinitePopulation& pop);

// Variance of the linear projection of `outcome` on `covariates`:
// S_{y,X} (S_X^2)^{-1} S_{X,y}.  Always in [0, S_y^2] up to tolerance;
// round-off below zero is clamped.
double projection_variance(const Eigen::Ref<const Eigen::VectorXd>& outcome,
                           const Eigen::Ref<const Eigen::MatrixXd>& covariates,
                           const std::string& block_name = "covariates");

// Projection variance from precomputed moments.
double projection_variance_from_moments(const Eigen::Ref<const Eigen::VectorXd>& cross_cov,
                                        const Eigen::Ref<const Eigen::MatrixXd>& cov,
                                        double outcome_variance,
                                        const std::string& block_name);

TheoreticalComponents theoretical_components(const PopulationMoments& moments,
                                             const DesignFractions& fractions);

}  // namespace resem
