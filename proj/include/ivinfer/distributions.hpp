#pragma once

namespace ivinfer {

// Chi-squared distribution helpers (thin wrappers over Boost.Math).
double chi2_cdf(double x, double df);
double chi2_sf(double x, double df);        // upper tail, 1 - cdf
double chi2_quantile(double p, double df);  // inverse cdf
double chi2_pdf(double x, double df);

// Regularized lower incomplete gamma P(a, x) = gamma(a, x) / Gamma(a).
double gamma_p(double a, double x);

}  // namespace ivinfer
