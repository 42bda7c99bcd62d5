#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "resem/asymptotics.hpp"
#include "resem/design.hpp"
#include "resem/errors.hpp"
#include "resem/estimation.hpp"
#include "resem/randomization_test.hpp"
#include "resem/simulation.hpp"
#include "test_support.hpp"

using resem::BalanceCriteria;
using resem::FrtOptions;
using resem::FrtStatistic;
using resem::KnowledgeFlags;
using resem::ObservedExperiment;
using resem::RngStream;
using resem::SharpNull;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Experiment drawn from a population whose treated outcome is exactly the
// control outcome plus a constant, so constant-effect nulls are true.
ObservedExperiment constant_effect_experiment(int population_size, int n, int n1,
                                              double effect, double p_t,
                                              RngStream& rng,
                                              BalanceCriteria* criteria_out) {
  auto pop = testsupport::random_population(population_size, 2, 2, 1, 2, rng);
  pop.y1 = pop.y0.array() + effect;
  resem::DesignSpec spec;
  spec.sample_size = n;
  spec.treated_size = n1;
  spec.criteria = BalanceCriteria::from_acceptance(2, 2, 1.0, p_t);
  const auto realization = resem::run_resem(pop, spec, rng);
  if (criteria_out) *criteria_out = spec.criteria;
  return resem::observe(pop, realization);
}

}  // namespace

TEST_CASE("imputation under the null") {
  Eigen::VectorXd y(3);
  y << 3.0, 1.0, 2.0;
  const std::vector<std::uint8_t> t{1, 0, 1};

  // zero effect: both imputed vectors equal the observations
  const auto zero = resem::impute_potential_outcomes(y, t, SharpNull::constant(0.0, 3));
  CHECK((zero.first - y).cwiseAbs().maxCoeff() == 0.0);
  CHECK((zero.second - y).cwiseAbs().maxCoeff() == 0.0);

  // treated unit with value 3 under effect 1 imputes control value 2
  const auto one = resem::impute_potential_outcomes(y, t, SharpNull::constant(1.0, 3));
  CHECK(one.first(0) == 3.0);
  CHECK(one.second(0) == 2.0);
  CHECK(one.first(1) == 2.0);   // control unit gains the effect
  CHECK(one.second(1) == 1.0);
  CHECK((one.first - one.second).cwiseAbs().maxCoeff() == doctest::Approx(1.0));

  CHECK_THROWS_AS(resem::impute_potential_outcomes(y, t, SharpNull::constant(0.0, 5)),
                  resem::DomainError);
}

TEST_CASE("prepivoted statistic: centre, limits, cross-check, monotonicity") {
  RngStream rng(61, 0);
  BalanceCriteria criteria;
  const auto exp = constant_effect_experiment(400, 80, 40, 1.0, 1.0, rng, &criteria);

  const double estimate = resem::difference_in_means(exp);
  const KnowledgeFlags flags;
  const resem::LawMonteCarlo law_mc{20000, 0x667274ULL, false};

  // at the observed estimate the statistic sits at the centre
  const double centred = resem::prepivoted_statistic(
      exp, criteria, estimate, FrtStatistic::Estimator::difference_in_means, flags, law_mc);
  CHECK(std::fabs(centred) < 0.02);

  // far away it saturates
  const double far = resem::prepivoted_statistic(
      exp, criteria, estimate + 100.0, FrtStatistic::Estimator::difference_in_means, flags,
      law_mc);
  CHECK(far == doctest::Approx(1.0).epsilon(1e-6));

  // mid-range: equals two times the estimated law's cdf minus one
  const double c = estimate + 0.2;
  const double g = resem::prepivoted_statistic(
      exp, criteria, c, FrtStatistic::Estimator::difference_in_means, flags, law_mc);
  const auto components = resem::estimate_components(
      exp, Eigen::VectorXd::Zero(exp.c.cols()), Eigen::VectorXd::Zero(exp.e.cols()), flags);
  resem::LawSampler sampler(std::max(1, criteria.sampling_dim),
                            criteria.a_s, std::max(1, criteria.assignment_dim),
                            criteria.a_t, law_mc.draws, law_mc.seed);
  const double scaled = std::sqrt(static_cast<double>(exp.sample_size())) *
                        std::fabs(estimate - c);
  const double expected =
      2.0 * sampler.cdf(scaled, components.v_hat, components.r_s2, components.r_t2) - 1.0;
  CHECK(g == doctest::Approx(expected).epsilon(1e-3));

  // monotone in the absolute error
  const double g_nearer = resem::prepivoted_statistic(
      exp, criteria, estimate + 0.1, FrtStatistic::Estimator::difference_in_means, flags,
      law_mc);
  CHECK(g_nearer <= g);
}

TEST_CASE("prepivoted statistic is invariant to affine outcome rescaling") {
  RngStream rng(62, 0);
  BalanceCriteria criteria;
  auto exp = constant_effect_experiment(300, 60, 30, 0.7, 0.5, rng, &criteria);
  const KnowledgeFlags flags;
  const resem::LawMonteCarlo law_mc{20000, 0x667274ULL, false};

  const double c = 0.4;
  const double g = resem::prepivoted_statistic(
      exp, criteria, c, FrtStatistic::Estimator::adjusted, flags, law_mc);

  const double scale = 3.5, shift = -2.0;
  ObservedExperiment rescaled = exp;
  rescaled.y = scale * exp.y.array() + shift;
  const double g2 = resem::prepivoted_statistic(
      rescaled, criteria, scale * c, FrtStatistic::Estimator::adjusted, flags, law_mc);
  CHECK(g2 == doctest::Approx(g).epsilon(1e-8));
}

TEST_CASE("constant statistic gives a p-value of one") {
  // constant observed outcomes: every resampled statistic equals zero
  RngStream rng(63, 0);
  BalanceCriteria criteria;
  auto exp = constant_effect_experiment(200, 16, 8, 0.0, 1.0, rng, &criteria);
  exp.y.setConstant(1.0);
  FrtOptions options;
  const auto result = resem::frt_p_value(exp, criteria, SharpNull::constant(0.0, 16),
                                         FrtStatistic::dim(), options, rng);
  CHECK(result.p_value == doctest::Approx(1.0));
  CHECK(result.exhaustive);  // C(16,8) sits below the enumeration cap
}

TEST_CASE("exhaustive p-value matches the hand enumeration on n = 4") {
  // fixed data, open threshold: all six assignments are acceptable
  ObservedExperiment exp;
  exp.y.resize(4);
  exp.y << 3.0, 1.0, 0.5, -0.25;
  exp.t = {1, 1, 0, 0};
  exp.w.resize(4, 0);
  exp.x.resize(4, 1);
  exp.x << 0.3, -0.2, 0.9, 0.1;
  exp.e.resize(4, 0);
  exp.c.resize(4, 1);
  exp.c = exp.x;
  exp.e_population_mean.resize(0);
  exp.fractions = resem::DesignFractions::from_counts(16, 4, 2);

  BalanceCriteria criteria = BalanceCriteria::from_acceptance(0, 1, 1.0, 1.0);

  // hand enumeration of |difference in means| over the six assignments with
  // zero-effect imputation (imputed outcomes equal the observations)
  std::vector<std::vector<std::uint8_t>> assignments = {
      {1, 1, 0, 0}, {1, 0, 1, 0}, {1, 0, 0, 1}, {0, 1, 1, 0}, {0, 1, 0, 1}, {0, 0, 1, 1}};
  const double observed = std::fabs(resem::difference_in_means(exp.y, exp.t));
  int count = 0;
  for (const auto& t : assignments)
    if (std::fabs(resem::difference_in_means(exp.y, t)) >= observed) ++count;
  const double expected = static_cast<double>(count) / 6.0;

  RngStream rng(64, 0);
  FrtOptions options;
  const auto result = resem::frt_p_value(exp, criteria, SharpNull::constant(0.0, 4),
                                         FrtStatistic::dim(), options, rng);
  CHECK(result.exhaustive);
  CHECK(result.resamples == 6);
  CHECK(result.p_value == doctest::Approx(expected).epsilon(1e-12));
  // literal value: the observed split and its mirror both attain |1.875|
  CHECK(result.p_value == doctest::Approx(2.0 / 6.0).epsilon(1e-12));
}

TEST_CASE("enumeration restricts to the acceptance set") {
  ObservedExperiment exp;
  const int n = 12;
  RngStream rng(65, 0);
  exp.y.resize(n);
  exp.x.resize(n, 1);
  for (int i = 0; i < n; ++i) {
    exp.x(i, 0) = rng.next_gaussian();
    exp.y(i) = exp.x(i, 0) + 0.2 * rng.next_gaussian();
  }
  exp.w.resize(n, 0);
  exp.e.resize(n, 0);
  exp.c = exp.x;
  exp.e_population_mean.resize(0);
  exp.t.assign(n, 0);

  // choose a balanced assignment as the observed one
  const double a_t = 0.8;
  resem::AssignmentDraw draw = resem::rerandomized_assignment(exp.x, 6, a_t, rng);
  exp.t = draw.t;
  exp.fractions = resem::DesignFractions::from_counts(48, n, 6);
  BalanceCriteria criteria = BalanceCriteria::from_thresholds(1, 1, 1.0, a_t);
  criteria.sampling_dim = 0;

  FrtOptions options;
  const auto result = resem::frt_p_value(exp, criteria, SharpNull::constant(0.0, n),
                                         FrtStatistic::dim(), options, rng);
  CHECK(result.exhaustive);
  // acceptance set is a strict subset of the C(12,6) = 924 assignments
  CHECK(result.resamples < 924);
  CHECK(result.resamples > 0);
  CHECK(result.p_value >= 1.0 / static_cast<double>(result.resamples) - 1e-12);
  CHECK(result.p_value <= 1.0);
}

TEST_CASE("monte carlo path agrees with enumeration within its own noise") {
  RngStream rng(66, 0);
  BalanceCriteria criteria;
  auto exp = constant_effect_experiment(200, 16, 8, 0.5, 0.3, rng, &criteria);

  FrtOptions exhaustive_opts;
  const auto exact = resem::frt_p_value(exp, criteria, SharpNull::constant(0.5, 16),
                                        FrtStatistic::dim(), exhaustive_opts, rng);
  REQUIRE(exact.exhaustive);

  FrtOptions mc_opts;
  mc_opts.force_monte_carlo = true;
  mc_opts.draws = 4000;
  RngStream rng2(66, 1);
  const auto approx = resem::frt_p_value(exp, criteria, SharpNull::constant(0.5, 16),
                                         FrtStatistic::dim(), mc_opts, rng2);
  CHECK(!approx.exhaustive);
  const double se = std::sqrt(exact.p_value * (1.0 - exact.p_value) / 4000.0);
  CHECK(std::fabs(approx.p_value - exact.p_value) < 4.0 * se + 2.0 / 4000.0);
}

TEST_CASE("rejection rate under a true constant-effect null stays at level") {
  const int replicates = 400;
  int rejections = 0;
  for (int r = 0; r < replicates; ++r) {
    RngStream rng(6700 + r, 0);
    BalanceCriteria criteria;
    const auto exp = constant_effect_experiment(300, 60, 30, 1.0, 0.1, rng, &criteria);
    FrtOptions options;
    options.draws = 300;
    options.force_monte_carlo = true;
    const auto result = resem::frt_p_value(exp, criteria, SharpNull::constant(1.0, 60),
                                           FrtStatistic::dim(), options, rng);
    if (result.p_value <= 0.05) ++rejections;
  }
  const double rate = static_cast<double>(rejections) / replicates;
  CHECK(rate <= 0.05 + 3.0 * std::sqrt(0.05 * 0.95 / replicates));
}

TEST_CASE("test inversion: retention, nesting, empty diagnostic") {
  RngStream rng(68, 0);
  BalanceCriteria criteria;
  const auto exp = constant_effect_experiment(400, 50, 25, 1.0, 0.5, rng, &criteria);

  FrtOptions options;
  options.draws = 400;

  RngStream rng_a(68, 1);
  const auto interval_05 = resem::invert_tests_ci(exp, criteria, 0.05,
                                                  resem::InversionGrid{},
                                                  FrtStatistic::dim(), options, rng_a);
  CHECK(!interval_05.empty);
  CHECK(interval_05.lo <= 1.0);
  CHECK(interval_05.hi >= 1.0);

  // smaller alpha gives a wider interval on the same draws
  RngStream rng_b(68, 1);
  const auto interval_01 = resem::invert_tests_ci(exp, criteria, 0.01,
                                                  resem::InversionGrid{},
                                                  FrtStatistic::dim(), options, rng_b);
  CHECK(interval_01.lo <= interval_05.lo + 1e-9);
  CHECK(interval_01.hi >= interval_05.hi - 1e-9);

  RngStream rng_c(68, 1);
  const auto interval_10 = resem::invert_tests_ci(exp, criteria, 0.10,
                                                  resem::InversionGrid{},
                                                  FrtStatistic::dim(), options, rng_c);
  CHECK(interval_10.lo >= interval_05.lo - 1e-9);
  CHECK(interval_10.hi <= interval_05.hi + 1e-9);

  // a grid far away from the estimate rejects everywhere
  resem::InversionGrid far_grid;
  far_grid.center = 1000.0;
  far_grid.half_width = 0.5;
  far_grid.step = 0.1;
  RngStream rng_d(68, 1);
  const auto empty = resem::invert_tests_ci(exp, criteria, 0.05, far_grid,
                                            FrtStatistic::dim(), options, rng_d);
  CHECK(empty.empty);
}

TEST_CASE("inverted intervals cover the average effect on the model population") {
  // prepivoted statistic, heterogeneous effects
  const auto pop = resem::generate_population_model(10000, 17);
  const double tau = pop.tau().mean();
  resem::DesignSpec spec;
  spec.sample_size = 500;
  spec.treated_size = 250;
  spec.criteria = BalanceCriteria::from_acceptance(2, 4, 1.0, 0.1);

  FrtStatistic statistic;
  statistic.estimator = FrtStatistic::Estimator::difference_in_means;
  statistic.prepivot = true;

  FrtOptions options;
  options.draws = 160;
  options.force_monte_carlo = true;
  options.law_mc = resem::LawMonteCarlo{6000, 0x667274ULL, false};

  const int replicates = 1000;
  std::vector<int> covered(static_cast<std::size_t>(replicates), 0);
  resem::parallel_for_replicates(replicates, 0, [&](long r) {
    RngStream rng(6900 + r, 0);
    const auto exp = resem::observe(pop, resem::run_resem(pop, spec, rng));
    // coarser grid keeps the prepivoted path affordable
    const auto components = resem::estimate_components(
        exp, Eigen::VectorXd::Zero(6), Eigen::VectorXd::Zero(2), KnowledgeFlags{});
    const double se = std::sqrt(components.v_hat / exp.sample_size());
    resem::InversionGrid coarse;
    coarse.half_width = 4.0 * se;
    coarse.step = se / 8.0;
    const auto interval = resem::invert_tests_ci(exp, spec.criteria, 0.05, coarse,
                                                 statistic, options, rng);
    if (!interval.empty && interval.lo <= tau && tau <= interval.hi)
      covered[static_cast<std::size_t>(r)] = 1;
  });
  const double rate =
      static_cast<double>(std::accumulate(covered.begin(), covered.end(), 0)) / replicates;
  CHECK(rate >= 0.94);
}
