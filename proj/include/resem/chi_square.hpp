#pragma once

namespace resem {

// Regularized lower incomplete gamma P(a, x).  Series expansion for
// x < a + 1, Lentz continued fraction otherwise; absolute accuracy ~1e-14.
double regularized_gamma_p(double a, double x);

// Chi-square distribution with df degrees of freedom.
// cdf(x)      = P(df/2, x/2)
// quantile(p) inverts the cdf to relative accuracy 1e-10 (bracketed Newton).
double chi_square_cdf(int df, double x);
double chi_square_quantile(int df, double p);
double chi_square_pdf(int df, double x);

// Distribution handle when a bound object is more convenient.
struct ChiSquare {
  int df;
  explicit ChiSquare(int degrees);
  double cdf(double x) const { return chi_square_cdf(df, x); }
  double quantile(double p) const { return chi_square_quantile(df, p); }
};

}  // namespace resem
