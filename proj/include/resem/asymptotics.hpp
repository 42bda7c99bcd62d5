#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "resem/estimation.hpp"
#include "resem/rng.hpp"

namespace resem {

// Parameters of the limiting law of the scaled estimation error: a
// three-component convolution
//   sqrt(V) * ( sqrt(1 - Rs2 - Rt2) * eps + sqrt(Rs2) * L_{J,aS}
//               + sqrt(Rt2) * L_{K,aT} )
// where eps is standard Gaussian and L_{k,a} is the first coordinate of a
// standard k-variate Gaussian conditioned on squared norm <= a.  A threshold
// of +inf collapses the constrained component to a standard Gaussian.
struct AsymptoticLaw {
  double v = 1.0;
  double r_s2 = 0.0;
  double r_t2 = 0.0;
  int j = 1;
  int k = 1;
  double a_s = std::numeric_limits<double>::infinity();
  double a_t = std::numeric_limits<double>::infinity();

  void validate() const;
};

// Monte Carlo settings for quantile and CDF evaluation of the law.
struct LawMonteCarlo {
  int draws = 1'000'000;
  std::uint64_t seed = 0x7265736d6d63ULL;
  bool strict = false;  // escalate the low-draw warning to an error
};

// Variance of the constrained component: P(chi2_{k+2} <= a) / P(chi2_k <= a).
// Equal to 1 at a = +inf and nondecreasing in a.
double truncated_variance_factor(int k, double a);

// One exact draw of L_{k,a}: the radius comes from the inverse CDF of the
// chi-square restricted to [0, a], the coordinate from a random direction.
double draw_constrained_gaussian(int k, double a, RngStream& rng);

// Percentage reduction in asymptotic variance relative to the unrestricted
// design: (1 - v_J) Rs2 + (1 - v_K) Rt2.
double priav(double r_s2, double r_t2, double v_j, double v_k);

// Shared base draws of (eps, L_J, L_K); mixing weights are applied per
// evaluation, so one pool serves every (Rs2, Rt2) pair with the same
// thresholds.  Immutable after construction and safe to share across
// threads for cdf(); quantile() uses an internal scratch buffer and must be
// externally synchronized.
class LawSampler {
 public:
  LawSampler(int j, double a_s, int k, double a_t, int draws, std::uint64_t seed);

  // xi-quantile of the unit-variance mixture (V excluded).
  double quantile(double xi, double r_s2, double r_t2) const;

  // P( sqrt(V) * mixture <= x ).
  double cdf(double x, double v, double r_s2, double r_t2) const;

  int draws() const { return static_cast<int>(eps_.size()); }

 private:
  Eigen::VectorXd eps_, l_j_, l_k_;
  mutable std::vector<double> scratch_;
};

// xi-quantile of the unit-variance mixture by seeded Monte Carlo.
double nu_quantile(double xi, int j, double a_s, int k, double a_t,
                   double r_s2, double r_t2, const LawMonteCarlo& mc = {});

// Two-sided interval: estimate +- n^{-1/2} sqrt(V) nu_{1-alpha/2}(Rs2, Rt2).
std::pair<double, double> confidence_interval(double estimate,
                                              const ComponentEstimates& components,
                                              const AsymptoticLaw& law_shape,
                                              double alpha, int sample_size,
                                              const LawMonteCarlo& mc = {});

// Same interval with a caller-provided quantile (for cached evaluation).
std::pair<double, double> confidence_interval_with_quantile(double estimate,
                                                            double v_hat,
                                                            double nu,
                                                            int sample_size);

}  // namespace resem
