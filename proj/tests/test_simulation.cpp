#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <cmath>

#include "resem/errors.hpp"
#include "resem/io.hpp"
#include "resem/simulation.hpp"
#include "test_support.hpp"

using resem::DesignFractions;
using resem::RngStream;
using resem::ScenarioConfig;
using resem::SimulationConfig;

namespace {

SimulationConfig small_config() {
  SimulationConfig config;
  config.population_size = 2000;
  config.population_seed = 11;
  config.sample_sizes = {200};
  config.treated_fraction = 0.5;
  config.scenarios = {
      {"CRSE", 1.0, 1.0, ScenarioConfig::Adjust::none},
      {"ST", 0.1, 0.1, ScenarioConfig::Adjust::none},
      {"ST-adjusted", 0.1, 0.1, ScenarioConfig::Adjust::estimated},
  };
  config.replicates = 400;
  config.alpha = 0.05;
  config.master_seed = 4242;
  config.nu_draws = 200000;
  return config;
}

}  // namespace

TEST_CASE("model population: construction identities and block nesting") {
  const auto pop = resem::generate_population_model(500, 3);
  CHECK(pop.size() == 500);

  // the individual effect is exactly 3/5 of the covariate total
  for (int i = 0; i < pop.size(); ++i) {
    const double total = pop.c.row(i).sum();
    CHECK(pop.y1(i) - pop.y0(i) == doctest::Approx(0.6 * total).epsilon(1e-12));
  }

  // w = e equals the first two analysis covariates, x the first four
  CHECK((pop.w - pop.e).cwiseAbs().maxCoeff() == 0.0);
  CHECK((pop.w - pop.c.leftCols(2)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((pop.x - pop.c.leftCols(4)).cwiseAbs().maxCoeff() == 0.0);
  CHECK(pop.e_subset_of_c);

  CHECK_THROWS_AS(resem::generate_population_model(50, 1), resem::DomainError);
}

TEST_CASE("model population at scale: both association measures are substantial") {
  const auto pop = resem::generate_population_model(10000, 1);
  const auto moments = resem::fp_moments(pop);
  const auto tc = resem::theoretical_components(
      moments, DesignFractions::from_counts(10000, 800, 400));
  // hand derivation from the generating model at f = 0.08, r1 = 0.5:
  // total covariate variance 3.75, effect variance 0.36 * 3.75 = 1.35,
  // V = 2 * (0.0475 + 0.9475) - 0.08 * 1.35 = 1.882,
  // sampling block explains 0.36 * 1.25 = 0.45 of the effect,
  // assignment block gives (2*0.025 + 2*0.625 - 0.9) = 0.4
  CHECK(tc.r_s2 == doctest::Approx(0.92 * 0.45 / 1.882).epsilon(0.10));
  CHECK(tc.r_t2 == doctest::Approx(0.4 / 1.882).epsilon(0.10));
  CHECK(tc.r_s2 > 0.15);
  CHECK(tc.r_t2 > 0.15);
}

TEST_CASE("single-replicate run produces a coherent summary") {
  SimulationConfig config = small_config();
  config.replicates = 1;
  config.scenarios = {{"CRSE", 1.0, 1.0, ScenarioConfig::Adjust::none}};
  const auto summary = resem::run_replications(config);
  REQUIRE(summary.cells.size() == 1);
  const auto& cell = summary.cells[0];
  CHECK(cell.status == "ok");
  CHECK(cell.replicates == 1);
  CHECK((cell.coverage == 0.0 || cell.coverage == 1.0));
  CHECK(cell.var_estimate == 0.0);
  CHECK(cell.mean_attempts_sampling == 1.0);
  CHECK(cell.mean_attempts_assignment == 1.0);
}

TEST_CASE("the CRSE scenario is the two-stage driver with open thresholds") {
  SimulationConfig config = small_config();
  config.replicates = 1;
  config.scenarios = {{"CRSE", 1.0, 1.0, ScenarioConfig::Adjust::none}};
  const auto summary = resem::run_replications(config);

  // replay the single replicate through the public driver on the same stream
  const auto pop =
      resem::generate_population_model(config.population_size, config.population_seed);
  resem::DesignSpec spec;
  spec.sample_size = 200;
  spec.treated_size = 100;
  spec.criteria = resem::BalanceCriteria::from_acceptance(2, 4, 1.0, 1.0);
  RngStream rng(config.master_seed, resem::replicate_stream(0, 0, 0));
  const auto exp = resem::observe(pop, resem::run_resem(pop, spec, rng));
  CHECK(summary.cells[0].mean_estimate ==
        doctest::Approx(resem::difference_in_means(exp)).epsilon(1e-15));
}

TEST_CASE("identical configs reproduce identical summaries") {
  SimulationConfig config = small_config();
  config.replicates = 50;
  const auto a = resem::run_replications(config);
  const auto b = resem::run_replications(config);
  REQUIRE(a.cells.size() == b.cells.size());
  for (std::size_t i = 0; i < a.cells.size(); ++i) {
    CHECK(a.cells[i].mean_estimate == b.cells[i].mean_estimate);
    CHECK(a.cells[i].var_estimate == b.cells[i].var_estimate);
    CHECK(a.cells[i].coverage == b.cells[i].coverage);
    CHECK(a.cells[i].mean_ci_length_sqrt_n == b.cells[i].mean_ci_length_sqrt_n);
  }
  CHECK(resem::report_to_csv(a) == resem::report_to_csv(b));
}

TEST_CASE("balanced designs reduce variance and adjustment shortens intervals") {
  const auto summary = resem::run_replications(small_config());
  REQUIRE(summary.cells.size() == 3);
  const auto& crse = summary.cells[0];
  const auto& st = summary.cells[1];
  const auto& adjusted = summary.cells[2];
  CHECK(crse.status == "ok");
  CHECK(st.status == "ok");
  CHECK(adjusted.status == "ok");
  CHECK(st.var_estimate < crse.var_estimate);
  CHECK(adjusted.mean_ci_length_sqrt_n < st.mean_ci_length_sqrt_n);
  // coverage error at 400 replicates stays within a wide sanity band
  for (const auto& cell : summary.cells) {
    CHECK(cell.coverage > 0.90);
    CHECK(cell.coverage_mc_se ==
          doctest::Approx(std::sqrt(cell.coverage * (1.0 - cell.coverage) / 400.0)));
  }
}

TEST_CASE("starvation aborts the scenario with a labelled status") {
  SimulationConfig config = small_config();
  config.replicates = 5;
  config.max_attempts = 3;
  config.scenarios = {{"tight", 0.0001, 1.0, ScenarioConfig::Adjust::none}};
  const auto summary = resem::run_replications(config);
  REQUIRE(summary.cells.size() == 1);
  CHECK(summary.cells[0].status != "ok");
  CHECK(summary.cells[0].status.find("starvation") != std::string::npos);
}

TEST_CASE("quantile cache matches direct evaluation") {
  const double a_s = resem::threshold_from_acceptance(2, 0.01);
  const double a_t = resem::threshold_from_acceptance(4, 0.01);
  resem::NuCache cache(2, a_s, 4, a_t, 0.975, 200000, 5, 0.002, false);
  resem::NuCache strict(2, a_s, 4, a_t, 0.975, 200000, 5, 0.002, true);

  // zero associations are not bucketed away from zero
  CHECK(cache.quantile(0.0, 0.0) == strict.quantile(0.0, 0.0));

  // bucketed evaluation sits within the bucket-width tolerance of direct
  const double direct = strict.quantile(0.2173, 0.3341);
  const double bucketed = cache.quantile(0.2173, 0.3341);
  CHECK(std::fabs(bucketed - direct) < 0.01);

  // repeated lookups hit the cache and stay identical
  CHECK(cache.quantile(0.2173, 0.3341) == bucketed);
  CHECK(cache.quantile(0.21745, 0.33415) == bucketed);  // same bucket
}

TEST_CASE("replicate loop surfaces the lowest failing index") {
  std::atomic<long> calls{0};
  CHECK_THROWS_WITH_AS(
      resem::parallel_for_replicates(10, 2,
                                     [&](long i) {
                                       calls.fetch_add(1);
                                       if (i >= 4) throw resem::DomainError("boom");
                                     }),
      "replicate 4: boom", resem::Error);
  CHECK(calls.load() == 10);

  // serial path works and covers every index exactly once
  std::vector<int> seen(10, 0);
  resem::parallel_for_replicates(10, 1, [&](long i) { seen[static_cast<std::size_t>(i)] += 1; });
  for (int s : seen) CHECK(s == 1);
}

TEST_CASE("config validation") {
  SimulationConfig config = small_config();
  config.scenarios.clear();
  CHECK_THROWS_AS(resem::run_replications(config), resem::DomainError);
  config = small_config();
  config.treated_fraction = 1.0;
  CHECK_THROWS_AS(config.validate(), resem::DomainError);
  config = small_config();
  config.output_format = "xml";
  CHECK_THROWS_AS(config.validate(), resem::DomainError);
}
