#pragma once

#include "ivinfer/errors.hpp"

namespace ivinfer {

// Parameters of the conditional-likelihood-ratio limiting distribution
//   Gamma(q - p, p, lambda) := 1/2 (Q_{q-p} + Q_p - lambda
//                                   + sqrt((Q_{q-p} + Q_p + lambda)^2 - 4 Q_{q-p} lambda)),
// with independent Q_{q-p} ~ chi2(q - p), Q_p ~ chi2(p). q is the total degree count.
struct GammaCVF {
    int q = 1;            // total degrees (k - mw)
    int p = 1;            // mx, 1 <= p <= q
    double lambda = 0.0;  // conditioning statistic s_min >= 0
};

// CDF via the Beta-mixture representation
//   P[Gamma <= z] = E_{x ~ Beta((q-p)/2, p/2)}[F_{chi2(q)}(z / (1 - a x))], a = lambda/(z+lambda),
// integrated by a Gauss-Jacobi rule that carries the algebraic endpoint weights exactly,
// with the node count doubled until two successive estimates agree to 1e-9.
// If eval_count is non-null it receives the number of incomplete-gamma evaluations used.
double cdf_quadrature(const GammaCVF& g, double z, int* eval_count = nullptr);

// Truncated power series (1-a)^{p/2} sum_{j=0}^{J} a^j (p/2)_j / j! F_{chi2(q+2j)}(z+lambda).
double cdf_series(const GammaCVF& g, double z, int J);

// Upper bound for the truncation error of cdf_series at J:
//   F_{chi2(q+2J+2)}(z+lambda) a^{J+1} (p/2)_{J+1} / (J+1)! (1 + 2 / sqrt(-log a)).
double series_error_bound(const GammaCVF& g, double z, int J);

// z such that cdf(z) = 1 - alpha, via root-finding bracketed by the
// chi2(p) and chi2(q) quantiles.
double quantile(const GammaCVF& g, double alpha);

// CDF of the independent sum chi2(md) + Gamma(q - p, p, lambda) by 1-D quadrature
// of the Gamma CDF against the chi2(md) density.
double cdf_gamma_plus_chi2(const GammaCVF& g, int md, double z);

}  // namespace ivinfer
