#include "resem/chi_square.hpp"

#include <cmath>
#include <limits>

#include "resem/errors.hpp"

namespace resem {
namespace {

constexpr double kEps = 1e-16;
constexpr int kMaxIter = 500;

// Series representation: P(a,x) = x^a e^{-x} / Gamma(a) * sum_k x^k / (a)_{k+1}.
double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double term = sum;
  for (int i = 0; i < kMaxIter; ++i) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::fabs(term) < std::fabs(sum) * kEps) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Continued fraction (modified Lentz) for Q(a,x); valid for x >= a + 1.
double gamma_q_continued_fraction(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= kMaxIter; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < kEps) break;
  }
  return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace

double regularized_gamma_p(double a, double x) {
  if (a <= 0.0) throw DomainError("regularized_gamma_p: shape must be positive");
  if (x < 0.0) throw DomainError("regularized_gamma_p: argument must be nonnegative");
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - gamma_q_continued_fraction(a, x);
}

double chi_square_cdf(int df, double x) {
  if (df < 1) throw DomainError("chi_square_cdf: df must be >= 1");
  if (x < 0.0) throw DomainError("chi_square_cdf: argument must be nonnegative");
  return regularized_gamma_p(0.5 * df, 0.5 * x);
}

double chi_square_pdf(int df, double x) {
  if (df < 1) throw DomainError("chi_square_pdf: df must be >= 1");
  if (x < 0.0) return 0.0;
  const double half = 0.5 * df;
  if (x == 0.0) return df == 2 ? 0.5 : (df == 1 ? std::numeric_limits<double>::infinity() : 0.0);
  const double log_pdf =
      (half - 1.0) * std::log(x) - 0.5 * x - half * std::log(2.0) - std::lgamma(half);
  return std::exp(log_pdf);
}

double chi_square_quantile(int df, double p) {
  if (df < 1) throw DomainError("chi_square_quantile: df must be >= 1");
  if (!(p > 0.0 && p < 1.0))
    throw DomainError("chi_square_quantile: probability must lie in (0, 1)");

  // Bracket the root, then safeguarded Newton.  The small-p start comes from
  // the leading term of the series, P(a,x) ~ (x/2)^a / Gamma(a+1).
  const double a = 0.5 * df;
  double lo = 0.0;
  double hi = df + 10.0;
  while (chi_square_cdf(df, hi) < p) {
    hi *= 2.0;
    if (hi > 1e300) throw DomainError("chi_square_quantile: failed to bracket");
  }
  double x = 2.0 * std::exp((std::log(p) + std::lgamma(a + 1.0)) / a);
  if (!(x > lo && x < hi)) x = 0.5 * (lo + hi);

  for (int iter = 0; iter < 200; ++iter) {
    const double f = chi_square_cdf(df, x) - p;
    if (f > 0.0) {
      hi = x;
    } else {
      lo = x;
    }
    const double pdf = chi_square_pdf(df, x);
    double next;
    if (pdf > 0.0 && std::isfinite(pdf)) {
      next = x - f / pdf;
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    } else {
      next = 0.5 * (lo + hi);
    }
    const double rel = std::fabs(next - x) / std::max(next, 1e-300);
    x = next;
    if (rel < 1e-13) break;
  }
  return x;
}

ChiSquare::ChiSquare(int degrees) : df(degrees) {
  if (degrees < 1) throw DomainError("ChiSquare: df must be >= 1");
}

}  // namespace resem
