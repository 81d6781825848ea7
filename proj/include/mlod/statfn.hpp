#pragma once

namespace mlod::statfn {

/// Chi-square CDF for even degrees of freedom:
///   1 - exp(-x/2) * sum_{j < df/2} (x/2)^j / j!
double chi2_cdf_even(double x, int df);

/// Upper tail 1 - CDF, summed directly so small tails keep relative precision.
double chi2_sf_even(double x, int df);

/// x with chi2_cdf_even(x, df) = q.
double chi2_quantile(double q, int df);

/// x with chi2_sf_even(x, df) = tail; the critical value of a level-`tail` test.
double chi2_upper_quantile(double tail, int df);

/// Standard Cauchy quantile tan(pi (q - 1/2)).
double cauchy_quantile(double q);

/// Standard Cauchy upper critical value for a level-`tail` test, written as
/// tan((1/2 - tail) pi) so it matches the combination statistic term by term.
double cauchy_upper_quantile(double tail);

/// f(m) = sum_{i=1}^m 1/i.
double harmonic(int m);

}  // namespace mlod::statfn
