#pragma once

namespace natpn {

// Log-Gamma via Lanczos approximation (g=7, 9 coefficients) with
// reflection for x < 0.5. Throws domain_error for x <= 0 via the
// checked wrappers below.
double lgamma_impl(double x);
double digamma_impl(double x);
double trigamma_impl(double x);

// Domain-checked entry points (x > 0).
double lgamma_pos(double x);
double digamma_pos(double x);
double trigamma_pos(double x);

// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double betainc(double a, double b, double x);

// Student-t CDF with nu degrees of freedom, location 0, scale 1.
double student_t_cdf(double t, double nu);

// Negative binomial CDF: P(Y <= y) for Y ~ NB(r, p) with
// P(Y = k) = C(k+r-1, k) p^r (1-p)^k.
double negative_binomial_cdf(double y, double r, double p);

}  // namespace natpn
