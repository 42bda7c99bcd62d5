#pragma once

#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "resem/asymptotics.hpp"
#include "resem/design.hpp"
#include "resem/estimation.hpp"
#include "resem/population.hpp"

namespace resem {

// Synthetic population used throughout the replication studies: six
// covariates (three Bernoulli(0.5), three standard Gaussian), control
// outcome -(1/2) * sum + noise(sd 0.1), treated outcome adds (3/5) * sum.
// Blocks: w = e = first two covariates, x = first four, c = all six.
FinitePopulation generate_population_model(int population_size, std::uint64_t seed);

struct ScenarioConfig {
  std::string name;
  double p_s = 1.0;
  double p_t = 1.0;
  enum class Adjust { none, estimated } adjust = Adjust::none;
};

struct PopulationSchema {
  std::string y1 = "y1";
  std::string y0 = "y0";
  std::vector<std::string> w, x, e, c;
  std::string strata;   // empty = absent
  std::string cluster;  // empty = absent
};

struct SimulationConfig {
  // Population source: generated model unless a CSV path is given.
  std::string population_csv;
  PopulationSchema schema;
  int population_size = 10'000;
  std::uint64_t population_seed = 1;

  std::vector<int> sample_sizes{100, 400, 800};
  double treated_fraction = 0.5;  // n1 = round(fraction * n)
  std::vector<ScenarioConfig> scenarios;
  long replicates = 2000;
  double alpha = 0.05;
  std::uint64_t master_seed = 20'240'601;
  int threads = 0;  // 0 = hardware concurrency
  long max_attempts = kDefaultMaxAttempts;

  // Quantile evaluation: shared base draws, results cached per bucket of
  // the estimated association measures; strict mode disables the cache.
  int nu_draws = 1'000'000;
  std::uint64_t nu_seed = 0x6e75ULL;
  double nu_bucket_width = 0.002;
  bool strict = false;

  std::string output_path = "report.csv";
  std::string output_format = "csv";  // csv | json

  void validate() const;
};

// Per (scenario, sample size) aggregates.
struct ScenarioCell {
  std::string scenario;
  int n = 0;
  int n1 = 0;
  double p_s = 1.0, p_t = 1.0;
  std::string adjust = "none";
  long replicates = 0;
  double true_tau = 0.0;
  double mean_estimate = 0.0;
  double var_estimate = 0.0;           // empirical variance of the estimator
  double coverage = 0.0;               // fraction of CIs covering true_tau
  double coverage_mc_se = 0.0;         // sqrt(p (1-p) / replicates)
  double mean_ci_length_sqrt_n = 0.0;  // average CI length times sqrt(n)
  double mean_attempts_sampling = 0.0;
  double mean_attempts_assignment = 0.0;
  double runtime_seconds = 0.0;
  std::string status = "ok";  // "ok" or the abort reason
};

struct ReplicationSummary {
  SimulationConfig config;
  std::vector<ScenarioCell> cells;
};

// Quantile cache over buckets of the estimated association measures; one
// shared pool of base draws serves every bucket.  Thread-safe.
class NuCache {
 public:
  NuCache(int j, double a_s, int k, double a_t, double xi, int draws,
          std::uint64_t seed, double bucket_width, bool strict);
  double quantile(double r_s2, double r_t2);

 private:
  LawSampler sampler_;
  double xi_;
  double width_;
  bool strict_;
  std::mutex mutex_;
  std::unordered_map<std::uint64_t, double> cache_;
};

// Runs fn(replicate_index) for every index, spread over `threads` workers
// (0 = hardware concurrency).  Exceptions are captured per index and the
// lowest-index message is rethrown after the join, so failures do not
// depend on scheduling.
void parallel_for_replicates(long count, int threads,
                             const std::function<void(long)>& fn);

// Deterministic stream index for a replicate of a given cell.
std::uint64_t replicate_stream(std::size_t scenario_index, std::size_t size_index,
                               long replicate);

ReplicationSummary run_replications(const SimulationConfig& config);

}  // namespace resem
