#include "resem/design.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>

#include "resem/errors.hpp"
#include "resem/linalg.hpp"

namespace resem {
namespace {

// Partial Fisher-Yates over a persistent pool.  The pool is left permuted
// between draws, which does not disturb uniformity of subsequent subsets.
class SubsetSampler {
 public:
  explicit SubsetSampler(int universe) : pool_(static_cast<std::size_t>(universe)) {
    std::iota(pool_.begin(), pool_.end(), 0);
  }

  void draw(int k, RngStream& rng, std::vector<int>& out) {
    const int universe = static_cast<int>(pool_.size());
    out.resize(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
      const int j =
          i + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(universe - i)));
      std::swap(pool_[static_cast<std::size_t>(i)], pool_[static_cast<std::size_t>(j)]);
      out[static_cast<std::size_t>(i)] = pool_[static_cast<std::size_t>(i)];
    }
  }

 private:
  std::vector<int> pool_;
};

Eigen::VectorXd mean_of_rows(const Eigen::Ref<const Eigen::MatrixXd>& data,
                             const std::vector<int>& rows) {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(data.cols());
  for (int r : rows) sum += data.row(r).transpose();
  return sum / static_cast<double>(rows.size());
}

std::vector<std::uint8_t> indicator_from_indices(int size, const std::vector<int>& idx) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(size), 0);
  for (int i : idx) out[static_cast<std::size_t>(i)] = 1;
  return out;
}

// Assignment indicators aligned to ascending sampled order from a set of
// treated positions (positions index into that order).
std::vector<std::uint8_t> assignment_from_positions(int n, const std::vector<int>& treated) {
  std::vector<std::uint8_t> t(static_cast<std::size_t>(n), 0);
  for (int p : treated) t[static_cast<std::size_t>(p)] = 1;
  return t;
}

Eigen::MatrixXd gather_rows(const Eigen::Ref<const Eigen::MatrixXd>& data,
                            const std::vector<int>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), data.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = data.row(rows[i]);
  return out;
}

}  // namespace

int Realization::treated_size() const {
  int count = 0;
  for (auto v : t) count += v;
  return count;
}

std::vector<int> Realization::sampled_indices() const {
  std::vector<int> idx;
  idx.reserve(t.size());
  for (int i = 0; i < population_size(); ++i)
    if (z[static_cast<std::size_t>(i)]) idx.push_back(i);
  return idx;
}

std::vector<std::uint8_t> simple_random_sample(int population_size, int sample_size,
                                               RngStream& rng) {
  if (population_size <= 0) throw DomainError("population size must be positive");
  if (sample_size <= 0 || sample_size > population_size)
    throw DomainError("sample size must lie in (0, N]");
  SubsetSampler sampler(population_size);
  std::vector<int> idx;
  sampler.draw(sample_size, rng, idx);
  return indicator_from_indices(population_size, idx);
}

std::vector<std::uint8_t> complete_randomization(int sample_size, int treated_size,
                                                 RngStream& rng) {
  if (sample_size <= 0) throw DomainError("sample size must be positive");
  if (treated_size <= 0 || treated_size >= sample_size)
    throw DomainError("treated count must lie strictly between 0 and n");
  SubsetSampler sampler(sample_size);
  std::vector<int> idx;
  sampler.draw(treated_size, rng, idx);
  return assignment_from_positions(sample_size, idx);
}

SamplingDraw rejective_sample(const Eigen::Ref<const Eigen::MatrixXd>& w,
                              int sample_size, double a_s, RngStream& rng,
                              long max_attempts) {
  const int population_size = static_cast<int>(w.rows());
  if (sample_size <= 0 || sample_size > population_size)
    throw DomainError("rejective_sample: sample size must lie in (0, N]");
  if (!(a_s > 0.0)) throw DomainError("rejective_sample: threshold must be positive");

  SamplingDraw out;
  if (sample_size == population_size) {
    if (!std::isinf(a_s))
      throw DomainError(
          "rejective_sample: balance metric undefined when every unit is "
          "sampled; use an infinite threshold");
    out.z.assign(static_cast<std::size_t>(population_size), 1);
    out.m_s = 0.0;
    out.attempts = 1;
    return out;
  }

  const bool active = w.cols() > 0 && !std::isinf(a_s);
  SubsetSampler sampler(population_size);
  std::vector<int> idx;

  if (!active) {
    sampler.draw(sample_size, rng, idx);
    out.z = indicator_from_indices(population_size, idx);
    out.m_s = 0.0;
    if (w.cols() > 0) {
      const double scale = 1.0 / sample_size - 1.0 / population_size;
      BalanceMetric metric(sample_covariance(w), scale, "w");
      out.m_s = metric(mean_of_rows(w, idx) - column_means(w));
    }
    out.attempts = 1;
    return out;
  }

  const Eigen::VectorXd population_mean = column_means(w);
  const double scale = 1.0 / sample_size - 1.0 / population_size;
  BalanceMetric metric(sample_covariance(w), scale, "w");

  for (long attempt = 1; attempt <= max_attempts; ++attempt) {
    sampler.draw(sample_size, rng, idx);
    const double m_s = metric(mean_of_rows(w, idx) - population_mean);
    if (m_s <= a_s) {
      out.z = indicator_from_indices(population_size, idx);
      out.m_s = m_s;
      out.attempts = attempt;
      return out;
    }
  }
  throw StarvationError("sampling", max_attempts, 0);
}

AssignmentDraw rerandomized_assignment(const Eigen::Ref<const Eigen::MatrixXd>& x_sampled,
                                       int treated_size, double a_t, RngStream& rng,
                                       long max_attempts,
                                       const Eigen::MatrixXd* population_covariance) {
  const int n = static_cast<int>(x_sampled.rows());
  if (treated_size <= 0 || treated_size >= n)
    throw DomainError("rerandomized_assignment: treated count must lie strictly between 0 and n");
  if (!(a_t > 0.0)) throw DomainError("rerandomized_assignment: threshold must be positive");

  AssignmentDraw out;
  const bool active = x_sampled.cols() > 0 && !std::isinf(a_t);
  SubsetSampler sampler(n);
  std::vector<int> idx;
  const int control_size = n - treated_size;

  const auto make_metric = [&]() {
    const Eigen::MatrixXd cov = population_covariance != nullptr
                                    ? *population_covariance
                                    : sample_covariance(x_sampled);
    const double scale =
        static_cast<double>(n) / (static_cast<double>(treated_size) * control_size);
    return BalanceMetric(cov, scale, "x");
  };

  if (!active) {
    sampler.draw(treated_size, rng, idx);
    out.t = assignment_from_positions(n, idx);
    out.m_t = 0.0;
    if (x_sampled.cols() > 0)
      out.m_t = mahalanobis_assignment(x_sampled, out.t, treated_size, control_size);
    out.attempts = 1;
    return out;
  }

  BalanceMetric metric = make_metric();
  const Eigen::VectorXd total = x_sampled.colwise().sum().transpose();
  Eigen::VectorXd treated_sum(x_sampled.cols());

  for (long attempt = 1; attempt <= max_attempts; ++attempt) {
    sampler.draw(treated_size, rng, idx);
    treated_sum.setZero();
    for (int p : idx) treated_sum += x_sampled.row(p).transpose();
    // mean1 - mean0 from the treated sum and the fixed total.
    const Eigen::VectorXd diff = treated_sum / static_cast<double>(treated_size) -
                                 (total - treated_sum) / static_cast<double>(control_size);
    const double m_t = metric(diff);
    if (m_t <= a_t) {
      out.t = assignment_from_positions(n, idx);
      out.m_t = m_t;
      out.attempts = attempt;
      return out;
    }
  }
  throw StarvationError("assignment", max_attempts, 0);
}

namespace {

void validate_spec(const FinitePopulation& pop, const DesignSpec& spec) {
  pop.validate();
  const int n = spec.sample_size;
  const int n1 = spec.treated_size;
  if (n <= 0 || n > pop.size())
    throw DomainError("design: sample size must lie in (0, N]");
  if (n1 <= 0 || n1 >= n)
    throw DomainError("design: treated count must lie strictly between 0 and n");
  if (spec.criteria.sampling_dim != pop.w.cols())
    throw DomainError("design: criteria sampling dimension does not match the w block");
  if (spec.criteria.assignment_dim != pop.x.cols())
    throw DomainError("design: criteria assignment dimension does not match the x block");
  if (spec.criteria.sampling_active() && n == pop.size())
    throw DomainError(
        "design: sampling criterion requires n < N; with every unit sampled "
        "use an assignment-only design");
}

void check_accepted(const Realization& r, const BalanceCriteria& criteria) {
  // Hard postcondition: an accepted realization satisfies its criteria.
  if (r.m_s > criteria.a_s || r.m_t > criteria.a_t)
    throw Error("internal: accepted realization violates its balance criteria");
}

}  // namespace

Realization run_resem(const FinitePopulation& pop, const DesignSpec& spec,
                      RngStream& rng) {
  validate_spec(pop, spec);
  const int n = spec.sample_size;
  const int n1 = spec.treated_size;

  Realization r;
  r.seed = seed_record(rng);

  SamplingDraw sampling =
      rejective_sample(pop.w, n, spec.criteria.a_s, rng, spec.max_attempts);
  r.z = std::move(sampling.z);
  r.m_s = sampling.m_s;
  r.attempts_s = sampling.attempts;

  const std::vector<int> sampled = r.sampled_indices();
  const Eigen::MatrixXd x_sampled = gather_rows(pop.x, sampled);

  Eigen::MatrixXd population_cov;
  const Eigen::MatrixXd* metric_cov = nullptr;
  if (spec.assignment_metric_population && pop.x.cols() > 0) {
    population_cov = sample_covariance(pop.x);
    metric_cov = &population_cov;
  }

  AssignmentDraw assignment = rerandomized_assignment(
      x_sampled, n1, spec.criteria.a_t, rng, spec.max_attempts, metric_cov);
  r.t = std::move(assignment.t);
  r.m_t = assignment.m_t;
  r.attempts_t = assignment.attempts;

  check_accepted(r, spec.criteria);
  return r;
}

Realization run_resem_single_stage(const FinitePopulation& pop, const DesignSpec& spec,
                                   RngStream& rng) {
  validate_spec(pop, spec);
  const int population_size = pop.size();
  const int n = spec.sample_size;
  const int n1 = spec.treated_size;
  const int n0 = n - n1;

  const bool sampling_active = spec.criteria.sampling_active() && n < population_size;
  const bool assignment_active = spec.criteria.assignment_active();

  Eigen::VectorXd population_mean_w;
  std::unique_ptr<BalanceMetric> sampling_metric;
  if (sampling_active) {
    population_mean_w = column_means(pop.w);
    const double scale = 1.0 / n - 1.0 / population_size;
    sampling_metric =
        std::make_unique<BalanceMetric>(sample_covariance(pop.w), scale, "w");
  }

  Eigen::MatrixXd population_cov_x;
  if (spec.assignment_metric_population && pop.x.cols() > 0)
    population_cov_x = sample_covariance(pop.x);

  SubsetSampler unit_sampler(population_size);
  SubsetSampler arm_sampler(n);
  std::vector<int> sample_idx;
  std::vector<int> treated_positions;

  Realization r;
  r.seed = seed_record(rng);

  for (long attempt = 1; attempt <= spec.max_attempts; ++attempt) {
    unit_sampler.draw(n, rng, sample_idx);
    double m_s = 0.0;
    if (sampling_active) {
      m_s = (*sampling_metric)(mean_of_rows(pop.w, sample_idx) - population_mean_w);
      if (m_s > spec.criteria.a_s) continue;
    }

    std::vector<int> sorted_sample = sample_idx;
    std::sort(sorted_sample.begin(), sorted_sample.end());
    const Eigen::MatrixXd x_sampled = gather_rows(pop.x, sorted_sample);

    arm_sampler.draw(n1, rng, treated_positions);
    const std::vector<std::uint8_t> t = assignment_from_positions(n, treated_positions);

    double m_t = 0.0;
    if (pop.x.cols() > 0) {
      m_t = spec.assignment_metric_population
                ? mahalanobis_assignment(x_sampled, t, n1, n0, population_cov_x)
                : mahalanobis_assignment(x_sampled, t, n1, n0);
    }
    if (assignment_active && m_t > spec.criteria.a_t) continue;

    if (!sampling_active && pop.w.cols() > 0 && n < population_size)
      m_s = mahalanobis_sampling(pop.w, indicator_from_indices(population_size, sorted_sample),
                                 sample_covariance(pop.w), n, population_size);

    r.z = indicator_from_indices(population_size, sorted_sample);
    r.t = t;
    r.m_s = m_s;
    r.m_t = m_t;
    r.attempts_s = attempt;
    r.attempts_t = attempt;
    check_accepted(r, spec.criteria);
    return r;
  }
  throw StarvationError("joint", spec.max_attempts, 0);
}

namespace {

// Largest-remainder apportionment of `total` seats with real-valued targets.
std::vector<int> largest_remainder(const std::vector<double>& targets, int total) {
  const std::size_t g = targets.size();
  std::vector<int> counts(g, 0);
  std::vector<std::pair<double, std::size_t>> remainders(g);
  int assigned = 0;
  for (std::size_t j = 0; j < g; ++j) {
    const double floor_j = std::floor(targets[j] + 1e-12);
    counts[j] = static_cast<int>(floor_j);
    assigned += counts[j];
    remainders[j] = {targets[j] - floor_j, j};
  }
  int remaining = total - assigned;
  if (remaining < 0)
    throw DomainError("stratified rounding produced more seats than the target");
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int k = 0; k < remaining; ++k)
    counts[remainders[static_cast<std::size_t>(k % g)].second] += 1;
  return counts;
}

std::vector<std::vector<int>> group_by_label(const std::vector<int>& labels) {
  std::vector<int> uniq = labels;
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  std::vector<std::vector<int>> groups(uniq.size());
  for (int i = 0; i < static_cast<int>(labels.size()); ++i) {
    const auto it = std::lower_bound(uniq.begin(), uniq.end(), labels[static_cast<std::size_t>(i)]);
    groups[static_cast<std::size_t>(it - uniq.begin())].push_back(i);
  }
  return groups;
}

// Stratum dummy matrix (first G-1 categories) over the given rows.
Eigen::MatrixXd stratum_dummies(const std::vector<int>& labels,
                                const std::vector<std::vector<int>>& groups,
                                int rows) {
  const int g = static_cast<int>(groups.size());
  Eigen::MatrixXd dummies = Eigen::MatrixXd::Zero(rows, std::max(0, g - 1));
  for (int j = 0; j + 1 < g; ++j)
    for (int i : groups[static_cast<std::size_t>(j)])
      dummies(i, j) = 1.0;
  (void)labels;
  return dummies;
}

}  // namespace

Realization stratified_design(const FinitePopulation& pop, const StratifiedSpec& spec,
                              RngStream& rng) {
  pop.validate();
  if (pop.strata.empty())
    throw DomainError("stratified_design: population carries no strata labels");
  const auto groups = group_by_label(pop.strata);
  const std::size_t g = groups.size();
  if (spec.sampling_fraction.size() != g || spec.treated_fraction.size() != g)
    throw DomainError("stratified_design: one sampling and treated fraction per stratum required");
  for (double f : spec.sampling_fraction)
    if (!(f > 0.0 && f <= 1.0))
      throw DomainError("stratified_design: sampling fractions must lie in (0, 1]");
  for (double r : spec.treated_fraction)
    if (!(r >= 0.0 && r <= 1.0))
      throw DomainError("stratified_design: treated fractions must lie in [0, 1]");

  const int population_size = pop.size();

  std::vector<double> sample_targets(g);
  double total_target = 0.0;
  for (std::size_t j = 0; j < g; ++j) {
    sample_targets[j] = spec.sampling_fraction[j] * groups[j].size();
    total_target += sample_targets[j];
  }
  const int n = static_cast<int>(std::llround(total_target));
  std::vector<int> n_j = largest_remainder(sample_targets, n);
  for (std::size_t j = 0; j < g; ++j)
    if (n_j[j] > static_cast<int>(groups[j].size()))
      throw DomainError("stratified_design: stratum " + std::to_string(j) +
                        " has fewer units than its sample target");

  std::vector<double> treated_targets(g);
  double treated_total = 0.0;
  for (std::size_t j = 0; j < g; ++j) {
    treated_targets[j] = spec.treated_fraction[j] * n_j[j];
    treated_total += treated_targets[j];
  }
  const int n1 = static_cast<int>(std::llround(treated_total));
  std::vector<int> n1_j = largest_remainder(treated_targets, n1);
  for (std::size_t j = 0; j < g; ++j)
    if (n1_j[j] > n_j[j])
      throw DomainError("stratified_design: stratum " + std::to_string(j) +
                        " has fewer sampled units than its treated target");
  if (n <= 0 || n1 <= 0 || n1 >= n)
    throw DomainError("stratified_design: global counts must satisfy 0 < n1 < n");

  Realization r;
  r.seed = seed_record(rng);
  r.z.assign(static_cast<std::size_t>(population_size), 0);

  std::vector<std::uint8_t> treated_flag(static_cast<std::size_t>(population_size), 0);
  std::vector<int> scratch;
  for (std::size_t j = 0; j < g; ++j) {
    if (n_j[j] == 0) continue;
    SubsetSampler stratum_sampler(static_cast<int>(groups[j].size()));
    stratum_sampler.draw(n_j[j], rng, scratch);
    std::vector<int> sampled_members;
    sampled_members.reserve(scratch.size());
    for (int pos : scratch) sampled_members.push_back(groups[j][static_cast<std::size_t>(pos)]);
    for (int unit : sampled_members) r.z[static_cast<std::size_t>(unit)] = 1;

    if (n1_j[j] > 0) {
      if (n1_j[j] == n_j[j]) {
        for (int unit : sampled_members) treated_flag[static_cast<std::size_t>(unit)] = 1;
      } else {
        SubsetSampler arm_sampler(n_j[j]);
        std::vector<int> arm;
        arm_sampler.draw(n1_j[j], rng, arm);
        for (int pos : arm)
          treated_flag[static_cast<std::size_t>(sampled_members[static_cast<std::size_t>(pos)])] = 1;
      }
    }
  }

  const std::vector<int> sampled = r.sampled_indices();
  r.t.resize(sampled.size());
  for (std::size_t i = 0; i < sampled.size(); ++i)
    r.t[i] = treated_flag[static_cast<std::size_t>(sampled[i])];

  // Balance statistics on stratum dummies; degenerate sample compositions
  // can make the within-sample covariance singular, recorded as NaN.
  if (g >= 2) {
    const Eigen::MatrixXd dummies = stratum_dummies(pop.strata, groups, population_size);
    if (n < population_size) {
      r.m_s = mahalanobis_sampling(dummies, r.z, sample_covariance(dummies), n,
                                   population_size);
    }
    Eigen::MatrixXd dummies_sampled = gather_rows(dummies, sampled);
    try {
      r.m_t = mahalanobis_assignment(dummies_sampled, r.t, n1, n - n1);
    } catch (const SingularDesignError&) {
      r.m_t = std::numeric_limits<double>::quiet_NaN();
    }
  }
  r.attempts_s = 1;
  r.attempts_t = 1;
  return r;
}

FinitePopulation cluster_aggregate(const FinitePopulation& pop) {
  pop.validate();
  if (pop.clusters.empty())
    throw DomainError("cluster_aggregate: population carries no cluster labels");
  const auto groups = group_by_label(pop.clusters);
  const int m = static_cast<int>(groups.size());
  if (m < 2) throw DegenerateError("cluster_aggregate: at least two clusters required");

  const double scale = static_cast<double>(m) / pop.size();

  FinitePopulation agg;
  agg.y1.resize(m);
  agg.y0.resize(m);
  agg.w.resize(m, pop.w.cols());
  agg.x.resize(m, pop.x.cols());
  agg.e.resize(m, pop.e.cols());
  agg.c.resize(m, pop.c.cols());
  for (int l = 0; l < m; ++l) {
    double sum1 = 0.0, sum0 = 0.0;
    Eigen::RowVectorXd sw = Eigen::RowVectorXd::Zero(pop.w.cols());
    Eigen::RowVectorXd sx = Eigen::RowVectorXd::Zero(pop.x.cols());
    Eigen::RowVectorXd se = Eigen::RowVectorXd::Zero(pop.e.cols());
    Eigen::RowVectorXd sc = Eigen::RowVectorXd::Zero(pop.c.cols());
    for (int i : groups[static_cast<std::size_t>(l)]) {
      sum1 += pop.y1(i);
      sum0 += pop.y0(i);
      sw += pop.w.row(i);
      sx += pop.x.row(i);
      se += pop.e.row(i);
      sc += pop.c.row(i);
    }
    agg.y1(l) = scale * sum1;
    agg.y0(l) = scale * sum0;
    agg.w.row(l) = scale * sw;
    agg.x.row(l) = scale * sx;
    agg.e.row(l) = scale * se;
    agg.c.row(l) = scale * sc;
  }
  agg.e_subset_of_c = pop.e_subset_of_c;
  agg.e_columns_in_c = pop.e_columns_in_c;
  return agg;
}

long long binomial_or_cap(int n, int k, long long cap) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  long long result = 1;
  for (int i = 1; i <= k; ++i) {
    // result stays at or below cap on entry, so the product cannot overflow
    // for any sane cap; result * (n - k + i) / i stays integral at every step.
    result = result * (n - k + i) / i;
    if (result > cap) return cap + 1;
  }
  return result;
}

}  // namespace resem
