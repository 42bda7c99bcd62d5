#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "resem/asymptotics.hpp"
#include "resem/balance.hpp"
#include "resem/estimation.hpp"
#include "resem/rng.hpp"

namespace resem {

// A hypothesis fixing every sampled unit's individual effect.
struct SharpNull {
  Eigen::VectorXd effects;  // length n, sampled order

  static SharpNull constant(double c, int sample_size);
  double mean() const { return effects.size() ? effects.mean() : 0.0; }
};

struct FrtStatistic {
  enum class Estimator { difference_in_means, adjusted } estimator =
      Estimator::difference_in_means;
  // Transform the absolute error through the estimated distribution of the
  // estimator; rebuilt for every resampled assignment.
  bool prepivot = false;

  static FrtStatistic dim() { return {Estimator::difference_in_means, false}; }
  static FrtStatistic adjusted() { return {Estimator::adjusted, true}; }
};

struct FrtOptions {
  long draws = 1000;                 // Monte Carlo resamples
  long enumeration_cap = 100'000;    // enumerate when C(n, n1) is at most this
  bool force_monte_carlo = false;
  long max_attempts = kDefaultMaxAttempts;
  KnowledgeFlags flags;              // design information used by prepivoting
  LawMonteCarlo law_mc{20'000, 0x667274ULL, false};
};

struct FrtResult {
  double statistic = 0.0;   // observed value
  double p_value = 1.0;
  long resamples = 0;       // acceptable assignments examined
  bool exhaustive = false;  // true when the acceptance set was enumerated
  long attempts_total = 0;  // candidate assignments consumed by rejection
};

struct InversionResult {
  double lo = 0.0;
  double hi = 0.0;
  bool empty = false;   // every grid point rejected
  long grid_points = 0;
};

struct InversionGrid {
  // Defaults: centre at the estimate, half-width 5 standard errors,
  // resolution SE / 50.
  std::optional<double> center;
  std::optional<double> half_width;
  std::optional<double> step;
};

// Imputed potential outcomes for the sampled units under the null:
// treated value = observed + (1 - T) c, control value = observed - T c.
std::pair<Eigen::VectorXd, Eigen::VectorXd> impute_potential_outcomes(
    const Eigen::Ref<const Eigen::VectorXd>& observed,
    const std::vector<std::uint8_t>& t, const SharpNull& null);

// 2 F_hat(sqrt(n) |estimate - c|) - 1 where F_hat is the estimated law of
// the chosen estimator (population-imbalance adjustment is excluded from
// test statistics by construction; see module notes).
double prepivoted_statistic(const ObservedExperiment& exp,
                            const BalanceCriteria& criteria, double c,
                            FrtStatistic::Estimator estimator,
                            const KnowledgeFlags& flags,
                            const LawMonteCarlo& law_mc = {20'000, 0x667274ULL, false});

// Conditional randomization test: the statistic is recomputed over
// assignments drawn from the acceptance set of the realized sample, with
// outcomes imputed under the null.  Exhaustive when the assignment space is
// small; otherwise Monte Carlo with the add-one estimator
// (1 + #{resample >= observed}) / (1 + draws).
FrtResult frt_p_value(const ObservedExperiment& exp, const BalanceCriteria& criteria,
                      const SharpNull& null, const FrtStatistic& statistic,
                      const FrtOptions& options, RngStream& rng);

// Confidence interval for the average effect by inverting constant-effect
// tests over a grid; endpoints refined by bisection.
InversionResult invert_tests_ci(const ObservedExperiment& exp,
                                const BalanceCriteria& criteria, double alpha,
                                const InversionGrid& grid, const FrtStatistic& statistic,
                                const FrtOptions& options, RngStream& rng);

}  // namespace resem
