#include "resem/simulation.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <thread>

#include "resem/errors.hpp"
#include "resem/io.hpp"

namespace resem {

FinitePopulation generate_population_model(int population_size, std::uint64_t seed) {
  if (population_size < 100)
    throw DomainError("generate_population_model: population size must be >= 100");
  RngStream rng(seed, 0);
  const int n = population_size;

  Eigen::MatrixXd covariates(n, 6);
  for (int i = 0; i < n; ++i) {
    covariates(i, 0) = rng.next_double() < 0.5 ? 0.0 : 1.0;
    covariates(i, 1) = rng.next_gaussian();
    covariates(i, 2) = rng.next_double() < 0.5 ? 0.0 : 1.0;
    covariates(i, 3) = rng.next_gaussian();
    covariates(i, 4) = rng.next_double() < 0.5 ? 0.0 : 1.0;
    covariates(i, 5) = rng.next_gaussian();
  }

  FinitePopulation pop;
  pop.c = covariates;
  pop.w = covariates.leftCols(2);
  pop.e = covariates.leftCols(2);
  pop.x = covariates.leftCols(4);
  pop.y0.resize(n);
  pop.y1.resize(n);
  for (int i = 0; i < n; ++i) {
    const double total = covariates.row(i).sum();
    const double noise = 0.1 * rng.next_gaussian();
    pop.y0(i) = -0.5 * total + noise;
    pop.y1(i) = pop.y0(i) + 0.6 * total;
  }
  pop.e_subset_of_c = true;
  pop.e_columns_in_c = {0, 1};
  pop.validate();
  return pop;
}

void SimulationConfig::validate() const {
  if (population_csv.empty() && population_size < 100)
    throw DomainError("simulation: generated population must have at least 100 units");
  if (sample_sizes.empty()) throw DomainError("simulation: sample size grid is empty");
  if (!(treated_fraction > 0.0 && treated_fraction < 1.0))
    throw DomainError("simulation: treated fraction must lie in (0, 1)");
  if (scenarios.empty()) throw DomainError("simulation: scenario list is empty");
  if (replicates < 1) throw DomainError("simulation: replicates must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("simulation: alpha must lie in (0, 1)");
  if (nu_draws < 1) throw DomainError("simulation: nu draws must be positive");
  if (!(nu_bucket_width > 0.0)) throw DomainError("simulation: bucket width must be positive");
  if (output_format != "csv" && output_format != "json")
    throw DomainError("simulation: output format must be csv or json");
  for (const auto& s : scenarios) {
    if (!(s.p_s > 0.0 && s.p_s <= 1.0) || !(s.p_t > 0.0 && s.p_t <= 1.0))
      throw DomainError("simulation: acceptance probabilities must lie in (0, 1]");
  }
}

NuCache::NuCache(int j, double a_s, int k, double a_t, double xi, int draws,
                 std::uint64_t seed, double bucket_width, bool strict)
    : sampler_(std::max(1, j), a_s, std::max(1, k), a_t, draws, seed),
      xi_(xi),
      width_(bucket_width),
      strict_(strict) {}

double NuCache::quantile(double r_s2, double r_t2) {
  const auto bucket_value = [&](double r) {
    if (r <= 0.0) return 0.0;
    const auto idx = static_cast<std::uint32_t>(std::floor(r / width_));
    return (idx + 0.5) * width_;
  };
  std::lock_guard<std::mutex> lock(mutex_);
  if (strict_) return sampler_.quantile(xi_, r_s2, r_t2);
  const double bs = bucket_value(r_s2);
  const double bt = bucket_value(r_t2);
  const std::uint64_t key =
      (static_cast<std::uint64_t>(std::llround(bs / (0.5 * width_))) << 32) |
      static_cast<std::uint64_t>(std::llround(bt / (0.5 * width_)));
  const auto it = cache_.find(key);
  if (it != cache_.end()) return it->second;
  const double value = sampler_.quantile(xi_, bs, bt);
  cache_.emplace(key, value);
  return value;
}

void parallel_for_replicates(long count, int threads,
                             const std::function<void(long)>& fn) {
  if (count <= 0) return;
  int workers = threads > 0 ? threads
                            : static_cast<int>(std::thread::hardware_concurrency());
  if (workers <= 0) workers = 1;
  workers = static_cast<int>(std::min<long>(workers, count));

  if (workers == 1) {
    for (long i = 0; i < count; ++i) fn(i);
    return;
  }

  std::atomic<long> next{0};
  std::vector<std::pair<long, std::string>> failures(static_cast<std::size_t>(workers),
                                                     {-1, {}});
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      for (;;) {
        const long i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (const std::exception& ex) {
          auto& slot = failures[static_cast<std::size_t>(w)];
          if (slot.first < 0 || i < slot.first) slot = {i, ex.what()};
        }
      }
    });
  }
  for (auto& t : pool) t.join();

  long first = -1;
  std::string message;
  for (const auto& [index, what] : failures) {
    if (index >= 0 && (first < 0 || index < first)) {
      first = index;
      message = what;
    }
  }
  if (first >= 0)
    throw Error("replicate " + std::to_string(first) + ": " + message);
}

std::uint64_t replicate_stream(std::size_t scenario_index, std::size_t size_index,
                               long replicate) {
  return (static_cast<std::uint64_t>(scenario_index) << 48) |
         (static_cast<std::uint64_t>(size_index) << 40) |
         static_cast<std::uint64_t>(replicate);
}

namespace {

struct ReplicateOutcome {
  double estimate = 0.0;
  double ci_length = 0.0;
  bool covered = false;
  long attempts_s = 0;
  long attempts_t = 0;
};

}  // namespace

ReplicationSummary run_replications(const SimulationConfig& config) {
  config.validate();

  FinitePopulation pop =
      config.population_csv.empty()
          ? generate_population_model(config.population_size, config.population_seed)
          : load_population(config.population_csv, config.schema);
  const double true_tau = pop.tau().mean();
  const int j = static_cast<int>(pop.w.cols());
  const int k = static_cast<int>(pop.x.cols());

  ReplicationSummary summary;
  summary.config = config;

  for (std::size_t s_idx = 0; s_idx < config.scenarios.size(); ++s_idx) {
    const ScenarioConfig& scenario = config.scenarios[s_idx];
    const BalanceCriteria criteria =
        BalanceCriteria::from_acceptance(j, k, scenario.p_s, scenario.p_t);

    for (std::size_t n_idx = 0; n_idx < config.sample_sizes.size(); ++n_idx) {
      const int n = config.sample_sizes[n_idx];
      const int n1 = static_cast<int>(std::llround(config.treated_fraction * n));

      ScenarioCell cell;
      cell.scenario = scenario.name;
      cell.n = n;
      cell.n1 = n1;
      cell.p_s = scenario.p_s;
      cell.p_t = scenario.p_t;
      cell.adjust =
          scenario.adjust == ScenarioConfig::Adjust::estimated ? "estimated" : "none";
      cell.replicates = config.replicates;
      cell.true_tau = true_tau;

      DesignSpec spec;
      spec.sample_size = n;
      spec.treated_size = n1;
      spec.criteria = criteria;
      spec.max_attempts = config.max_attempts;

      NuCache nu_cache(j, criteria.a_s, k, criteria.a_t, 1.0 - config.alpha / 2.0,
                       config.nu_draws, config.nu_seed, config.nu_bucket_width,
                       config.strict);

      std::vector<ReplicateOutcome> outcomes(
          static_cast<std::size_t>(config.replicates));
      const auto started = std::chrono::steady_clock::now();

      try {
        parallel_for_replicates(config.replicates, config.threads, [&](long rep) {
          RngStream rng(config.master_seed, replicate_stream(s_idx, n_idx, rep));
          const Realization realization = run_resem(pop, spec, rng);
          const ObservedExperiment exp = observe(pop, realization);

          Eigen::VectorXd beta = Eigen::VectorXd::Zero(exp.c.cols());
          Eigen::VectorXd gamma = Eigen::VectorXd::Zero(exp.e.cols());
          if (scenario.adjust == ScenarioConfig::Adjust::estimated) {
            const AdjustmentCoefficients coef = fit_adjustment_coefficients(exp);
            beta = coef.beta;
            gamma = coef.gamma;
          }
          const double estimate = adjusted_estimator(exp, beta, gamma);
          const ComponentEstimates components =
              estimate_components(exp, beta, gamma, KnowledgeFlags{});
          const double nu = nu_cache.quantile(components.r_s2, components.r_t2);
          const auto [lo, hi] = confidence_interval_with_quantile(
              estimate, components.v_hat, nu, exp.sample_size());

          auto& out = outcomes[static_cast<std::size_t>(rep)];
          out.estimate = estimate;
          out.ci_length = hi - lo;
          out.covered = lo <= true_tau && true_tau <= hi;
          out.attempts_s = realization.attempts_s;
          out.attempts_t = realization.attempts_t;
        });
      } catch (const std::exception& ex) {
        cell.status = ex.what();
        summary.cells.push_back(cell);
        continue;
      }

      double mean = 0.0;
      for (const auto& out : outcomes) mean += out.estimate;
      mean /= static_cast<double>(outcomes.size());
      double var = 0.0;
      double length = 0.0;
      long covered = 0;
      double attempts_s = 0.0, attempts_t = 0.0;
      for (const auto& out : outcomes) {
        var += (out.estimate - mean) * (out.estimate - mean);
        length += out.ci_length;
        covered += out.covered ? 1 : 0;
        attempts_s += static_cast<double>(out.attempts_s);
        attempts_t += static_cast<double>(out.attempts_t);
      }
      const auto count = static_cast<double>(outcomes.size());
      cell.mean_estimate = mean;
      cell.var_estimate = outcomes.size() > 1 ? var / (count - 1.0) : 0.0;
      cell.coverage = static_cast<double>(covered) / count;
      cell.coverage_mc_se =
          std::sqrt(std::max(0.0, cell.coverage * (1.0 - cell.coverage) / count));
      cell.mean_ci_length_sqrt_n = length / count * std::sqrt(static_cast<double>(n));
      cell.mean_attempts_sampling = attempts_s / count;
      cell.mean_attempts_assignment = attempts_t / count;
      cell.runtime_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
              .count();
      summary.cells.push_back(cell);
    }
  }
  return summary;
}

}  // namespace resem
