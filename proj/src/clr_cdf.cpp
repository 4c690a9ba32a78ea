#include "ivinfer/clr_cdf.hpp"

#include <Eigen/Dense>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "ivinfer/distributions.hpp"

namespace ivinfer {
namespace {

void check_params(const GammaCVF& g) {
    if (g.q < 1 || g.p < 1 || g.p > g.q)
        throw ConfigError("gamma_cvf: requires 1 <= p <= q, got q = " +
                          std::to_string(g.q) + ", p = " + std::to_string(g.p));
    if (!(g.lambda >= 0.0))
        throw ConfigError("gamma_cvf: lambda must be nonnegative, got " +
                          std::to_string(g.lambda));
}

struct QuadRule {
    std::vector<double> nodes;    // on [-1, 1]
    std::vector<double> weights;  // normalized to sum to 1
};

// Gauss rule for the Jacobi weight (1-t)^a (1+t)^b on [-1, 1], computed from
// the three-term recurrence via the eigen-decomposition of its tridiagonal
// matrix; weights are returned normalized so the rule computes an expectation.
QuadRule compute_gauss_jacobi(int n, double a, double b) {
    Eigen::VectorXd diag(n);
    Eigen::VectorXd subdiag(n > 1 ? n - 1 : 0);
    const double apb = a + b;
    for (int i = 0; i < n; ++i) {
        if (i == 0)
            diag(i) = (b - a) / (apb + 2.0);
        else
            diag(i) = (b * b - a * a) /
                      ((2.0 * i + apb) * (2.0 * i + apb + 2.0));
        if (i + 1 < n) {
            const int j = i + 1;  // off-diagonal index, j >= 1
            double beta;
            if (j == 1)
                beta = 4.0 * (a + 1.0) * (b + 1.0) /
                       ((apb + 2.0) * (apb + 2.0) * (apb + 3.0));
            else
                beta = 4.0 * j * (j + a) * (j + b) * (j + apb) /
                       ((2.0 * j + apb) * (2.0 * j + apb) *
                        (2.0 * j + apb + 1.0) * (2.0 * j + apb - 1.0));
            subdiag(i) = std::sqrt(beta);
        }
    }
    // The Jacobi matrix is symmetric tridiagonal; the dedicated solver is
    // O(n^2) instead of O(n^3), which matters at the finest refinement levels.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(diag, subdiag);
    if (es.info() != Eigen::Success)
        throw NumericalError("gamma_cvf: quadrature rule construction failed");
    QuadRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        rule.nodes[i] = es.eigenvalues()(i);
        const double v0 = es.eigenvectors()(0, i);
        rule.weights[i] = v0 * v0;
    }
    return rule;
}

// The exponents only take a handful of values per process (they depend on the
// distribution's degrees of freedom, not on the evaluation point), while the
// eigen-decomposition at the finest level costs seconds. Memoize the rules.
const QuadRule& gauss_jacobi(int n, double a, double b) {
    thread_local std::map<std::tuple<int, double, double>, QuadRule> cache;
    auto [it, inserted] = cache.try_emplace(std::make_tuple(n, a, b));
    if (inserted) it->second = compute_gauss_jacobi(n, a, b);
    return it->second;
}

}  // namespace

double cdf_quadrature(const GammaCVF& g, double z, int* eval_count) {
    check_params(g);
    int evals = 0;
    double result;
    if (z <= 0.0) {
        result = 0.0;
    } else if (g.lambda == 0.0 || g.p == g.q) {
        // lambda = 0 collapses to chi2(q); with p = q the chi2(q - p) part
        // vanishes and the max simplifies to the chi2(p) = chi2(q) variate.
        result = chi2_cdf(z, static_cast<double>(g.q));
        evals = 1;
    } else {
        const double amix = g.lambda / (z + g.lambda);
        // x = (1 + t)/2 ~ Beta((q-p)/2, p/2): Jacobi exponents a = p/2 - 1 on
        // the (1-t) side, b = (q-p)/2 - 1 on the (1+t) side.
        const double ja = 0.5 * g.p - 1.0;
        const double jb = 0.5 * (g.q - g.p) - 1.0;
        double prev = std::numeric_limits<double>::quiet_NaN();
        result = std::numeric_limits<double>::quiet_NaN();
        for (int n = 16; n <= 2048; n *= 2) {
            const QuadRule& rule = gauss_jacobi(n, ja, jb);
            double acc = 0.0;
            for (int i = 0; i < n; ++i) {
                const double x = 0.5 * (1.0 + rule.nodes[i]);
                acc += rule.weights[i] *
                       chi2_cdf(z / (1.0 - amix * x), static_cast<double>(g.q));
            }
            evals += n;
            result = acc;
            if (std::isfinite(prev) && std::abs(result - prev) < 1e-9) break;
            prev = result;
        }
    }
    if (eval_count != nullptr) *eval_count = evals;
    return std::min(1.0, std::max(0.0, result));
}

double cdf_series(const GammaCVF& g, double z, int J) {
    check_params(g);
    if (J < 0) throw ConfigError("gamma_cvf: series order must be nonnegative");
    if (z <= 0.0) return 0.0;
    const double amix = g.lambda / (z + g.lambda);
    double coef = std::pow(1.0 - amix, 0.5 * g.p);
    double acc = 0.0;
    for (int j = 0; j <= J; ++j) {
        if (coef > 0.0)
            acc += coef * chi2_cdf(z + g.lambda, static_cast<double>(g.q + 2 * j));
        coef *= amix * (0.5 * g.p + j) / (j + 1.0);
    }
    return acc;
}

double series_error_bound(const GammaCVF& g, double z, int J) {
    check_params(g);
    if (J < 0) throw ConfigError("gamma_cvf: series order must be nonnegative");
    if (z <= 0.0) return 0.0;
    const double amix = g.lambda / (z + g.lambda);
    if (amix == 0.0) return 0.0;
    const double tail_cdf =
        chi2_cdf(z + g.lambda, static_cast<double>(g.q + 2 * J + 2));
    if (tail_cdf == 0.0) return 0.0;
    // a^{J+1} (p/2)_{J+1} / (J+1)! in log space to survive large J.
    const double log_coef = (J + 1.0) * std::log(amix) +
                            std::lgamma(0.5 * g.p + J + 1.0) -
                            std::lgamma(0.5 * g.p) - std::lgamma(J + 2.0);
    const double neg_log_a = -std::log(amix);
    if (neg_log_a <= 0.0) return std::numeric_limits<double>::infinity();
    const double factor = 1.0 + 2.0 / std::sqrt(neg_log_a);
    return tail_cdf * std::exp(log_coef) * factor;
}

double quantile(const GammaCVF& g, double alpha) {
    check_params(g);
    if (!(alpha > 0.0 && alpha < 1.0))
        throw ConfigError("gamma_cvf: alpha must lie in (0, 1)");
    const double target = 1.0 - alpha;
    if (g.lambda == 0.0 || g.p == g.q)
        return chi2_quantile(target, static_cast<double>(g.q));

    // The distribution interpolates chi2(q) at lambda = 0 and chi2(p) as
    // lambda grows, so the two chi-squared quantiles bracket the root.
    double lo = chi2_quantile(target, static_cast<double>(g.p));
    double hi = chi2_quantile(target, static_cast<double>(g.q));
    lo *= 0.5;  // safety margins; expanded further below if still not bracketing
    hi *= 2.0;
    while (cdf_quadrature(g, lo) > target && lo > 1e-300) lo *= 0.5;
    while (cdf_quadrature(g, hi) < target && hi < 1e300) hi *= 2.0;

    double mid = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        mid = 0.5 * (lo + hi);
        const double f = cdf_quadrature(g, mid);
        if (std::abs(f - target) < 1e-8) return mid;
        if (f < target)
            lo = mid;
        else
            hi = mid;
    }
    return mid;
}

double cdf_gamma_plus_chi2(const GammaCVF& g, int md, double z) {
    check_params(g);
    if (md < 0) throw ConfigError("gamma_cvf: md must be nonnegative");
    if (md == 0) return cdf_quadrature(g, z);
    if (z <= 0.0) return 0.0;
    boost::math::quadrature::tanh_sinh<double> integrator;
    const double dmd = static_cast<double>(md);
    const auto f = [&](double t) {
        return chi2_pdf(t, dmd) * cdf_quadrature(g, z - t);
    };
    const double value = integrator.integrate(f, 0.0, z, 1e-9);
    return std::min(1.0, std::max(0.0, value));
}

}  // namespace ivinfer
