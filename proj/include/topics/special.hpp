#pragma once

namespace topics {

// Regularized lower/upper incomplete gamma P(a,x), Q(a,x); series for
// x < a+1, continued fraction otherwise.  Absolute accuracy ~1e-12.
double gamma_p(double a, double x);
double gamma_q(double a, double x);

// Upper tail of chi-square with nu degrees of freedom at d.
double chi2_upper_tail(double d, double nu);

}  // namespace topics
