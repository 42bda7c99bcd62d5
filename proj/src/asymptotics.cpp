#include "resem/asymptotics.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "resem/chi_square.hpp"
#include "resem/errors.hpp"

namespace resem {

void AsymptoticLaw::validate() const {
  if (!(v > 0.0)) throw DegenerateError("law variance must be positive");
  if (r_s2 < 0.0 || r_t2 < 0.0 || r_s2 > 1.0 || r_t2 > 1.0)
    throw DomainError("association measures must lie in [0, 1]");
  if (r_s2 + r_t2 > 1.0 + 1e-12)
    throw DomainError("association measures must sum to at most one");
  if (j < 1 || k < 1) throw DomainError("law dimensions must be positive");
  if (!(a_s > 0.0) || !(a_t > 0.0)) throw DomainError("law thresholds must be positive");
}

double truncated_variance_factor(int k, double a) {
  if (k < 1) throw DomainError("truncated_variance_factor: dimension must be >= 1");
  if (!(a > 0.0)) throw DomainError("truncated_variance_factor: threshold must be positive");
  if (std::isinf(a)) return 1.0;
  return chi_square_cdf(k + 2, a) / chi_square_cdf(k, a);
}

double draw_constrained_gaussian(int k, double a, RngStream& rng) {
  if (k < 1) throw DomainError("draw_constrained_gaussian: dimension must be >= 1");
  if (!(a > 0.0)) throw DomainError("draw_constrained_gaussian: threshold must be positive");
  if (std::isinf(a)) return rng.next_gaussian();

  // Radius: chi-square restricted to [0, a] by inverse-CDF, so acceptance
  // never costs more than one uniform even at tiny thresholds.
  const double mass = chi_square_cdf(k, a);
  const double u = rng.next_double();
  const double target = std::min(u * mass, mass);
  const double r2 = target <= 0.0 ? 0.0 : chi_square_quantile(k, target);
  const double radius = std::sqrt(std::max(0.0, r2));

  if (k == 1) {
    const double sign = rng.next_double() < 0.5 ? -1.0 : 1.0;
    return sign * radius;
  }
  // First coordinate of a uniform direction: normalized Gaussian vector.
  double first = 0.0;
  double norm2 = 0.0;
  for (int i = 0; i < k; ++i) {
    const double g = rng.next_gaussian();
    if (i == 0) first = g;
    norm2 += g * g;
  }
  if (norm2 == 0.0) return 0.0;
  return radius * first / std::sqrt(norm2);
}

double priav(double r_s2, double r_t2, double v_j, double v_k) {
  if (r_s2 < 0.0 || r_s2 > 1.0 || r_t2 < 0.0 || r_t2 > 1.0)
    throw DomainError("priav: association measures must lie in [0, 1]");
  if (v_j < 0.0 || v_j > 1.0 || v_k < 0.0 || v_k > 1.0)
    throw DomainError("priav: variance factors must lie in [0, 1]");
  return (1.0 - v_j) * r_s2 + (1.0 - v_k) * r_t2;
}

namespace {

// Inverse CDF of the chi-square restricted to [0, a], tabulated on an
// equiprobable grid and polished with safeguarded Newton steps.  Makes the
// pooled constrained draws cheap enough to rebuild per cell.
class TruncatedRadiusSampler {
 public:
  TruncatedRadiusSampler(int k, double a) : k_(k) {
    mass_ = chi_square_cdf(k, a);
    table_.resize(kCells + 1);
    table_[0] = 0.0;
    for (int i = 1; i <= kCells; ++i)
      table_[static_cast<std::size_t>(i)] =
          chi_square_quantile(k, mass_ * i / kCells);
  }

  // Squared radius at uniform u in [0, 1).
  double squared(double u) const {
    const double target = u * mass_;
    const double pos = u * kCells;
    int cell = static_cast<int>(pos);
    if (cell >= kCells) cell = kCells - 1;
    double lo = table_[static_cast<std::size_t>(cell)];
    double hi = table_[static_cast<std::size_t>(cell + 1)];
    double x = lo + (hi - lo) * (pos - cell);
    for (int iter = 0; iter < 3; ++iter) {
      const double pdf = chi_square_pdf(k_, x);
      if (!(pdf > 0.0) || !std::isfinite(pdf)) break;
      const double f = chi_square_cdf(k_, x) - target;
      if (f > 0.0)
        hi = x;
      else
        lo = x;
      double next = x - f / pdf;
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      x = next;
    }
    return x;
  }

 private:
  static constexpr int kCells = 2048;
  int k_;
  double mass_ = 1.0;
  std::vector<double> table_;
};

// One pooled draw of the constrained component via the tabulated radius and
// a uniform direction.
double pooled_constrained_draw(int k, const TruncatedRadiusSampler* radius,
                               RngStream& rng) {
  if (radius == nullptr) return rng.next_gaussian();
  const double r = std::sqrt(std::max(0.0, radius->squared(rng.next_double())));
  if (k == 1) return rng.next_double() < 0.5 ? -r : r;
  double first = 0.0;
  double norm2 = 0.0;
  for (int i = 0; i < k; ++i) {
    const double g = rng.next_gaussian();
    if (i == 0) first = g;
    norm2 += g * g;
  }
  if (norm2 == 0.0) return 0.0;
  return r * first / std::sqrt(norm2);
}

}  // namespace

LawSampler::LawSampler(int j, double a_s, int k, double a_t, int draws,
                       std::uint64_t seed) {
  if (draws < 1) throw DomainError("LawSampler: draws must be positive");
  if (j < 1 || k < 1) throw DomainError("LawSampler: dimensions must be positive");
  if (!(a_s > 0.0) || !(a_t > 0.0))
    throw DomainError("LawSampler: thresholds must be positive");
  eps_.resize(draws);
  l_j_.resize(draws);
  l_k_.resize(draws);

  std::unique_ptr<TruncatedRadiusSampler> radius_j, radius_k;
  if (!std::isinf(a_s)) radius_j = std::make_unique<TruncatedRadiusSampler>(j, a_s);
  if (!std::isinf(a_t)) radius_k = std::make_unique<TruncatedRadiusSampler>(k, a_t);

  RngStream rng(seed, 0);
  for (int i = 0; i < draws; ++i) {
    eps_(i) = rng.next_gaussian();
    l_j_(i) = pooled_constrained_draw(j, radius_j.get(), rng);
    l_k_(i) = pooled_constrained_draw(k, radius_k.get(), rng);
  }
  scratch_.resize(static_cast<std::size_t>(draws));
}

double LawSampler::quantile(double xi, double r_s2, double r_t2) const {
  if (!(xi > 0.0 && xi < 1.0)) throw DomainError("quantile level must lie in (0, 1)");
  const double rest = std::max(0.0, 1.0 - r_s2 - r_t2);
  const double c_eps = std::sqrt(rest);
  const double c_j = std::sqrt(std::max(0.0, r_s2));
  const double c_k = std::sqrt(std::max(0.0, r_t2));
  const int m = draws();
  for (int i = 0; i < m; ++i)
    scratch_[static_cast<std::size_t>(i)] = c_eps * eps_(i) + c_j * l_j_(i) + c_k * l_k_(i);
  auto rank = static_cast<std::ptrdiff_t>(std::ceil(xi * m)) - 1;
  rank = std::clamp<std::ptrdiff_t>(rank, 0, m - 1);
  std::nth_element(scratch_.begin(), scratch_.begin() + rank, scratch_.end());
  return scratch_[static_cast<std::size_t>(rank)];
}

double LawSampler::cdf(double x, double v, double r_s2, double r_t2) const {
  if (!(v > 0.0)) throw DegenerateError("law variance must be positive");
  const double rest = std::max(0.0, 1.0 - r_s2 - r_t2);
  const double c_eps = std::sqrt(rest);
  const double c_j = std::sqrt(std::max(0.0, r_s2));
  const double c_k = std::sqrt(std::max(0.0, r_t2));
  const double bound = x / std::sqrt(v);
  const int m = draws();
  long count = 0;
  for (int i = 0; i < m; ++i)
    if (c_eps * eps_(i) + c_j * l_j_(i) + c_k * l_k_(i) <= bound) ++count;
  return static_cast<double>(count) / m;
}

namespace {

void check_mc(const LawMonteCarlo& mc) {
  if (mc.draws < 10'000) {
    if (mc.strict)
      throw DomainError("law Monte Carlo draws below 10^4 in strict mode");
  }
  if (mc.draws < 1) throw DomainError("law Monte Carlo draws must be positive");
}

}  // namespace

double nu_quantile(double xi, int j, double a_s, int k, double a_t,
                   double r_s2, double r_t2, const LawMonteCarlo& mc) {
  check_mc(mc);
  if (r_s2 < 0.0 || r_t2 < 0.0 || r_s2 + r_t2 > 1.0 + 1e-12)
    throw DomainError("nu_quantile: association measures out of range");
  LawSampler sampler(j, a_s, k, a_t, mc.draws, mc.seed);
  return sampler.quantile(xi, r_s2, r_t2);
}

std::pair<double, double> confidence_interval_with_quantile(double estimate,
                                                            double v_hat,
                                                            double nu,
                                                            int sample_size) {
  if (!(v_hat > 0.0)) throw DegenerateError("confidence interval: variance estimate nonpositive");
  if (sample_size < 1) throw DomainError("confidence interval: sample size must be positive");
  const double half = std::sqrt(v_hat / sample_size) * nu;
  return {estimate - half, estimate + half};
}

std::pair<double, double> confidence_interval(double estimate,
                                              const ComponentEstimates& components,
                                              const AsymptoticLaw& law_shape,
                                              double alpha, int sample_size,
                                              const LawMonteCarlo& mc) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw DomainError("confidence interval: alpha must lie in (0, 1)");
  // Unknown design stages have already collapsed the corresponding
  // association estimate to zero, which yields the Gaussian-width interval.
  const double nu = nu_quantile(1.0 - alpha / 2.0, law_shape.j, law_shape.a_s,
                                law_shape.k, law_shape.a_t, components.r_s2,
                                components.r_t2, mc);
  return confidence_interval_with_quantile(estimate, components.v_hat, nu, sample_size);
}

}  // namespace resem
