#include "mlod/statfn.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "mlod/error.hpp"

namespace mlod::statfn {

namespace {

// Above this many series terms the direct recurrence can overflow or
// underflow (exp(-x/2) vanishes long before the terms peak), so the terms are
// accumulated in log space instead.
constexpr int kDirectTermLimit = 150;

void check_df(int df) {
  if (df < 2 || df % 2 != 0) throw Error(ErrorKind::OddDf, "df must be even and >= 2, got " + std::to_string(df));
}

void check_probability(double q, const char* what) {
  if (!(q > 0.0 && q < 1.0)) throw Error(ErrorKind::OutOfDomain, std::string(what) + " must lie in (0, 1)");
}

// Poisson(h) CDF at terms-1, i.e. exp(-h) sum_{j<terms} h^j / j!.
double poisson_head(double h, int terms) {
  if (h == 0.0) return 1.0;
  if (terms <= kDirectTermLimit) {
    double term = std::exp(-h);
    double sum = term;
    for (int j = 1; j < terms; ++j) {
      term *= h / j;
      sum += term;
    }
    return std::min(sum, 1.0);
  }
  const double log_h = std::log(h);
  double log_term = -h;
  double sum = std::exp(log_term);
  for (int j = 1; j < terms; ++j) {
    log_term += log_h - std::log(static_cast<double>(j));
    sum += std::exp(log_term);
  }
  return std::min(sum, 1.0);
}

// Smallest x with decreasing(x) <= target, for a continuous function that
// falls from 1 at x=0 to 0 at infinity. Bisects until the bracket stops
// shrinking in floating point.
template <class F>
double invert_decreasing(F decreasing, double target, double start) {
  double lo = 0.0, hi = start;
  while (decreasing(hi) > target) {
    lo = hi;
    hi *= 2.0;
  }
  for (int it = 0; it < 2000; ++it) {
    const double mid = lo + (hi - lo) / 2.0;
    if (mid <= lo || mid >= hi) break;
    if (decreasing(mid) > target) lo = mid;
    else hi = mid;
  }
  return hi;
}

}  // namespace

double chi2_sf_even(double x, int df) {
  check_df(df);
  if (!(x >= 0.0)) throw Error(ErrorKind::OutOfDomain, "chi-square argument must be >= 0");
  if (std::isinf(x)) return 0.0;
  return poisson_head(x / 2.0, df / 2);
}

double chi2_cdf_even(double x, int df) { return 1.0 - chi2_sf_even(x, df); }

double chi2_quantile(double q, int df) {
  check_df(df);
  check_probability(q, "quantile level");
  if (df == 2) return -2.0 * std::log1p(-q);
  return invert_decreasing([df](double x) { return chi2_sf_even(x, df); }, 1.0 - q, static_cast<double>(df));
}

double chi2_upper_quantile(double tail, int df) {
  check_df(df);
  check_probability(tail, "tail probability");
  if (df == 2) return -2.0 * std::log(tail);
  return invert_decreasing([df](double x) { return chi2_sf_even(x, df); }, tail, static_cast<double>(df));
}

double cauchy_quantile(double q) {
  check_probability(q, "quantile level");
  return std::tan(std::numbers::pi * (q - 0.5));
}

double cauchy_upper_quantile(double tail) {
  check_probability(tail, "tail probability");
  return std::tan((0.5 - tail) * std::numbers::pi);
}

double harmonic(int m) {
  double sum = 0.0;
  for (int i = 1; i <= m; ++i) sum += 1.0 / i;
  return sum;
}

}  // namespace mlod::statfn
