#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "resem/design.hpp"
#include "resem/population.hpp"

namespace resem {

// What the analyst sees after the experiment: observed outcomes and the
// covariate rows for the sampled units (ascending unit order, matching
// Realization::t), plus the population mean of the e block.
struct ObservedExperiment {
  Eigen::VectorXd y;            // observed outcomes
  std::vector<std::uint8_t> t;  // realized assignment
  Eigen::MatrixXd w;            // sampling-stage covariates (may be 0-col)
  Eigen::MatrixXd x;            // assignment-stage covariates (may be 0-col)
  Eigen::MatrixXd e;            // analysis covariates known population-wide
  Eigen::MatrixXd c;            // analysis covariates for sampled units
  Eigen::VectorXd e_population_mean;
  DesignFractions fractions;

  int sample_size() const { return static_cast<int>(y.size()); }
  int treated_size() const;
  void validate() const;
};

// Reveals the realized experiment from a population and a design draw.
ObservedExperiment observe(const FinitePopulation& pop, const Realization& realization);

struct AdjustmentCoefficients {
  Eigen::VectorXd beta;   // length = columns of c
  Eigen::VectorXd gamma;  // length = columns of e
  enum class Provenance { fixed, estimated } provenance = Provenance::fixed;
  // Set when an arm was too small for a stable fit and (0, 0) was used.
  bool fell_back_to_zero = false;

  static AdjustmentCoefficients zero(int c_cols, int e_cols);
};

// Which design stages the analyst knows (covariates and threshold).  An
// unknown stage forces the corresponding estimated association to zero,
// which widens the interval, never narrows it.
struct KnowledgeFlags {
  bool sampling_known = true;
  bool assignment_known = true;
};

// Sample analogues of the variance decomposition, built from per-arm
// moments of the adjusted observed outcomes.
struct ComponentEstimates {
  double v_hat = 0.0;   // estimate of the scaled estimator variance
  double r_s2 = 0.0;    // clamped to [0,1]; zero when the stage is unknown
  double r_t2 = 0.0;
  KnowledgeFlags flags;

  // Per-arm ingredients (index 1 = treated, 0 = control).
  double s2[2] = {0.0, 0.0};               // adjusted-outcome variances
  Eigen::MatrixXd cov_x[2];                // per-arm covariance of x
  Eigen::VectorXd cov_yx[2];               // per-arm adjusted-outcome/x covariance
  double proj_var_yx[2] = {0.0, 0.0};      // per-arm projection variances on x
  double proj_var_tau_x = 0.0;             // split-arm projection variance on x
  double proj_var_tau_w = 0.0;             // same construction on w
  double proj_var_tau_c = 0.0;             // same construction on c
};

// Difference in mean observed outcomes between arms.
double difference_in_means(const ObservedExperiment& exp);
double difference_in_means(const Eigen::Ref<const Eigen::VectorXd>& y,
                           const std::vector<std::uint8_t>& t);

// Linearly adjusted estimator: the difference in means minus beta'
// (treated-control difference of c means) minus gamma' (sampled-population
// difference of e means).
double adjusted_estimator(const ObservedExperiment& exp,
                          const Eigen::Ref<const Eigen::VectorXd>& beta,
                          const Eigen::Ref<const Eigen::VectorXd>& gamma);

// The adjusted observed outcome for each sampled unit; the difference in
// means of these equals adjusted_estimator exactly.
Eigen::VectorXd adjusted_observed_outcomes(const ObservedExperiment& exp,
                                           const Eigen::Ref<const Eigen::VectorXd>& beta,
                                           const Eigen::Ref<const Eigen::VectorXd>& gamma);

// Per-arm least-squares slopes of the observed outcome on c and on e,
// pooled across arms as beta = r0 b1 + r1 b0 and gamma = g1 - g0.
AdjustmentCoefficients fit_adjustment_coefficients(const ObservedExperiment& exp);

// Fixed-population projection coefficients the estimated ones converge to.
AdjustmentCoefficients population_adjustment_coefficients(const FinitePopulation& pop,
                                                          const DesignFractions& fractions);

ComponentEstimates estimate_components(const ObservedExperiment& exp,
                                       const Eigen::Ref<const Eigen::VectorXd>& beta,
                                       const Eigen::Ref<const Eigen::VectorXd>& gamma,
                                       const KnowledgeFlags& flags);

}  // namespace resem
