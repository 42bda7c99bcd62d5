#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "resem/balance.hpp"
#include "resem/population.hpp"
#include "resem/rng.hpp"

namespace resem {

inline constexpr long kDefaultMaxAttempts = 1'000'000;

// One realized design: which units were sampled, how the sampled units were
// assigned, the balance statistics of the accepted draw, and how many
// candidates each rejection loop consumed.  `t` is indexed in ascending
// order of the sampled unit indices.
struct Realization {
  std::vector<std::uint8_t> z;  // length N
  std::vector<std::uint8_t> t;  // length n
  double m_s = 0.0;
  double m_t = 0.0;
  long attempts_s = 0;
  long attempts_t = 0;
  SeedRecord seed;

  int population_size() const { return static_cast<int>(z.size()); }
  int sample_size() const { return static_cast<int>(t.size()); }
  int treated_size() const;
  std::vector<int> sampled_indices() const;  // ascending
};

struct DesignSpec {
  int sample_size = 0;
  int treated_size = 0;
  BalanceCriteria criteria;
  long max_attempts = kDefaultMaxAttempts;
  // Use the fixed population covariance of the assignment block in the
  // assignment metric instead of the sampled units' covariance.
  bool assignment_metric_population = false;
};

// Uniform draw over all n-subsets of {0, ..., N-1}; returned as indicators.
std::vector<std::uint8_t> simple_random_sample(int population_size, int sample_size,
                                               RngStream& rng);

// Uniform draw over all assignments of n1 treated among n units.
std::vector<std::uint8_t> complete_randomization(int sample_size, int treated_size,
                                                 RngStream& rng);

struct SamplingDraw {
  std::vector<std::uint8_t> z;
  double m_s = 0.0;
  long attempts = 0;
};

struct AssignmentDraw {
  std::vector<std::uint8_t> t;
  double m_t = 0.0;
  long attempts = 0;
};

// Repeated simple random sampling until the sampling balance statistic falls
// at or below the threshold.  Rejection sampling is exact: the accepted draw
// is distributed as an SRS conditioned on acceptance.
SamplingDraw rejective_sample(const Eigen::Ref<const Eigen::MatrixXd>& w,
                              int sample_size, double a_s, RngStream& rng,
                              long max_attempts = kDefaultMaxAttempts);

// Repeated complete randomization until the assignment balance statistic
// falls at or below the threshold.  `population_covariance`, when given,
// replaces the sampled units' covariance in the metric.
AssignmentDraw rerandomized_assignment(const Eigen::Ref<const Eigen::MatrixXd>& x_sampled,
                                       int treated_size, double a_t, RngStream& rng,
                                       long max_attempts = kDefaultMaxAttempts,
                                       const Eigen::MatrixXd* population_covariance = nullptr);

// Two-stage driver: rejective sampling on the w block, then rerandomized
// assignment on the x block restricted to the accepted sample.
Realization run_resem(const FinitePopulation& pop, const DesignSpec& spec,
                      RngStream& rng);

// Single-stage variant: fresh (sampling, assignment) pairs are drawn until
// both criteria hold simultaneously, so the accepted pair is distributed as
// an unrestricted draw conditioned jointly on both events.
Realization run_resem_single_stage(const FinitePopulation& pop, const DesignSpec& spec,
                                   RngStream& rng);

// Stratified sampling with blocked assignment: an independent unrestricted
// survey experiment inside every stratum.  Per-stratum counts follow
// largest-remainder rounding against the global totals.  The recorded
// balance statistics are evaluated on stratum dummy covariates.
struct StratifiedSpec {
  std::vector<double> sampling_fraction;  // f_j, one per stratum (sorted labels)
  std::vector<double> treated_fraction;   // r_1j
  long max_attempts = kDefaultMaxAttempts;
};

Realization stratified_design(const FinitePopulation& pop, const StratifiedSpec& spec,
                              RngStream& rng);

// Collapses a population to cluster level: outcomes and covariates are
// cluster totals scaled by the inverse average cluster size, which keeps the
// cluster-level average effect equal to the unit-level one.
FinitePopulation cluster_aggregate(const FinitePopulation& pop);

// Number of distinct n-subsets, saturating at the cap; used to decide when
// exhaustive enumeration is feasible.
long long binomial_or_cap(int n, int k, long long cap);

}  // namespace resem
