#pragma once

// Scalar special functions used by the probability model and diagnostics.
// Everything here is deterministic and allocation-free.

namespace toxsurf::special {

inline constexpr double log_2pi = 1.8378770664093454836;

// Standard normal CDF, complementary CDF and log-pdf.
double norm_cdf(double x);
double norm_ccdf(double x);
double norm_logpdf(double x);

// Inverse standard normal CDF (Wichura's AS241, ~1e-15 relative accuracy).
// p must lie in (0, 1).
double inv_norm_cdf(double p);

// Regularized incomplete gamma functions P(a,x) and Q(a,x) = 1 - P(a,x).
double reg_lower_gamma(double a, double x);
double reg_upper_gamma(double a, double x);

// Inverse of P(a, .): smallest x with P(a,x) = p. Bisection + Newton polish.
double inv_reg_lower_gamma(double a, double p);

// Regularized incomplete beta I_x(a, b).
double reg_inc_beta(double a, double b, double x);

// CDF of the Student-t distribution with nu degrees of freedom.
double student_t_cdf(double x, double nu);

// Survival function of the chi-square distribution.
double chi_square_sf(double x, double df);

// Kolmogorov distribution survival function Q(lambda) = 2 sum (-1)^{k-1} e^{-2k^2 lambda^2}.
double kolmogorov_sf(double lambda);

// Log density helpers (shape/rate parameterization for gamma, E[x] = a/b).
double gamma_logpdf(double x, double shape, double rate);
double inv_gamma_logpdf_from_precision_prior(double v, double shape, double rate);
double beta_logpdf(double x, double a, double b);
double normal_logpdf(double x, double mean, double var);

// P(lo <= X <= hi) for X ~ N(mu, sigma^2); bounds may be infinite.
double norm_interval_prob(double mu, double sigma, double lo, double hi);

// Mean and variance of a normal truncated to [lo, hi] (either bound may be infinite).
struct TruncNormMoments {
  double mean;
  double var;
};
TruncNormMoments trunc_norm_moments(double mu, double sigma, double lo, double hi);

}  // namespace toxsurf::special
