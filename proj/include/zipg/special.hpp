// Scalar special functions used by the likelihood and inference code.
#ifndef ZIPG_SPECIAL_HPP
#define ZIPG_SPECIAL_HPP

#include <cmath>

namespace zipg {

// log Gamma(x) for x > 0, safe to call from multiple threads.
double lgamma_pos(double x);

// Derivative of log Gamma(x), x > 0. Recurrence into the asymptotic
// region, then the standard Bernoulli-number series; absolute error
// below 1e-12 over the range used here.
double digamma(double x);

// log(1 + exp(x)) without overflow for large |x|.
double softplus(double x);

// log(exp(a) + exp(b)); either argument may be -inf.
double log_add_exp(double a, double b);

// 1 / (1 + exp(-x)).
double logistic(double x);

// log(p / (1 - p)) for p in (0,1); throws std::domain_error outside.
double logit(double p);

// Standard normal CDF and its inverse (inverse refined with one
// Halley step, |error| < 1e-13 on (1e-300, 1-1e-16)).
double norm_cdf(double x);
double norm_quantile(double p);

// Regularized incomplete gamma functions P(a,x) and Q(a,x) = 1 - P(a,x).
double gamma_p(double a, double x);
double gamma_q(double a, double x);

// Upper tail of the chi-square distribution with df degrees of freedom.
double chi2_sf(double x, double df);

// Kolmogorov distribution tail Q_KS(t) = 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 t^2).
double kolmogorov_sf(double t);

}  // namespace zipg

#endif
