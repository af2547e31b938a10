#pragma once

namespace cnppo {

// Standard normal CDF.
double normal_cdf(double x);

// Inverse standard normal CDF, p in (0, 1); accurate to ~1e-13 after one
// Halley refinement of the rational approximation.
double normal_quantile(double p);

// Regularized incomplete beta function I_x(a, b), continued-fraction
// evaluation.
double incomplete_beta(double a, double b, double x);

// Two-sided p-value of a Student-t statistic with df degrees of freedom,
// p = I_{df/(df+t^2)}(df/2, 1/2).
double student_t_two_sided_p(double t, double df);

}  // namespace cnppo
