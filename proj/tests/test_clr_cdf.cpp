#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "ivinfer/clr_cdf.hpp"
#include "ivinfer/distributions.hpp"

using namespace ivinfer;

namespace {

// J large enough that the truncation bound certifies the requested accuracy.
int order_from_bound(const GammaCVF& g, double z, double target) {
    int J = 1;
    while (J < 200000 && series_error_bound(g, z, J) > target) J *= 2;
    return J;
}

}  // namespace

TEST_CASE("quadrature CDF collapses to chi2(q) at lambda = 0 and at p = q") {
    for (const int q : {2, 5, 20}) {
        for (const double z : {0.5, 2.0, 5.0, 20.0}) {
            CHECK(cdf_quadrature(GammaCVF{q, 1, 0.0}, z) ==
                  doctest::Approx(chi2_cdf(z, q)).epsilon(1e-10));
            CHECK(cdf_quadrature(GammaCVF{q, q, 7.5}, z) ==
                  doctest::Approx(chi2_cdf(z, q)).epsilon(1e-10));
        }
    }
}

TEST_CASE("series with bound-certified order agrees with quadrature to 1e-6") {
    for (const int q : {2, 5, 20}) {
        for (const int p : {1, 2, 5}) {
            if (p > q) continue;
            for (const double lambda : {0.1, 1.0, 10.0, 100.0, 1000.0}) {
                for (const double z : {0.5, 2.0, 5.0, 20.0}) {
                    const GammaCVF g{q, p, lambda};
                    const int J = order_from_bound(g, z, 1e-8);
                    const double series = cdf_series(g, z, J);
                    const double quad = cdf_quadrature(g, z);
                    CAPTURE(q); CAPTURE(p); CAPTURE(lambda); CAPTURE(z);
                    CHECK(std::abs(series - quad) < 1e-6);
                }
            }
        }
    }
}

TEST_CASE("the (20, 5) reference point: bound and series crossings") {
    const GammaCVF g{20, 5, 1000.0};
    const double z = 5.0;
    const double quad = cdf_quadrature(g, z);

    // Bound decays below 1e-6 by J = 643 and the series has converged by then.
    CHECK(series_error_bound(g, z, 643) < 1e-6);
    CHECK(series_error_bound(g, z, 600) > 0.0);
    CHECK(std::abs(cdf_series(g, z, 643) - quad) < 1e-6);
    // The actual series error is already below 1e-6 well before the bound says so.
    CHECK(std::abs(cdf_series(g, z, 575) - quad) < 1e-6);

    // Far in the tail of the truncation order the bound has fully collapsed.
    CHECK(series_error_bound(g, z, 5495) < 1e-6);
    CHECK(std::abs(cdf_series(g, z, 5227) - quad) < 1e-6);
}

TEST_CASE("bound is a true upper bound on the series truncation error") {
    const GammaCVF g{10, 3, 50.0};
    const double z = 8.0;
    const double reference = cdf_series(g, z, 5000);
    for (const int J : {1, 5, 20, 100}) {
        CHECK(std::abs(cdf_series(g, z, J) - reference) <=
              series_error_bound(g, z, J) * (1.0 + 1e-9));
    }
}

TEST_CASE("CDF basic shape: monotone in z, bounded, zero at the origin") {
    const GammaCVF g{8, 2, 25.0};
    CHECK(cdf_quadrature(g, 0.0) == 0.0);
    CHECK(cdf_quadrature(g, -3.0) == 0.0);
    double prev = 0.0;
    for (double z = 0.5; z < 40.0; z += 0.5) {
        const double c = cdf_quadrature(g, z);
        CHECK(c >= prev - 1e-12);
        CHECK(c <= 1.0);
        prev = c;
    }
}

TEST_CASE("quadrature CDF matches Monte Carlo draws of the defining variable") {
    const GammaCVF g{7, 2, 12.0};
    std::mt19937_64 rng(99);
    std::chi_squared_distribution<double> chi_qp(g.q - g.p);
    std::chi_squared_distribution<double> chi_p(g.p);
    const int reps = 200000;
    const double zs[] = {2.0, 5.0, 9.0, 15.0};
    int counts[4] = {0, 0, 0, 0};
    for (int i = 0; i < reps; ++i) {
        const double a = chi_qp(rng);
        const double b = chi_p(rng);
        const double v =
            0.5 * (a + b - g.lambda +
                   std::sqrt((a + b + g.lambda) * (a + b + g.lambda) -
                             4.0 * a * g.lambda));
        for (int j = 0; j < 4; ++j)
            if (v <= zs[j]) ++counts[j];
    }
    for (int j = 0; j < 4; ++j) {
        const double empirical = static_cast<double>(counts[j]) / reps;
        const double exact = cdf_quadrature(g, zs[j]);
        CHECK(std::abs(empirical - exact) < 0.005);  // ~4.5 MC standard errors
    }
}

TEST_CASE("quantile inverts the CDF") {
    for (const double alpha : {0.01, 0.05, 0.5, 0.9}) {
        const GammaCVF g{9, 3, 30.0};
        const double z = quantile(g, alpha);
        CHECK(cdf_quadrature(g, z) == doctest::Approx(1.0 - alpha).epsilon(1e-6));
    }
    CHECK(quantile(GammaCVF{6, 2, 0.0}, 0.05) ==
          doctest::Approx(chi2_quantile(0.95, 6)).epsilon(1e-10));
}

TEST_CASE("distribution interpolates between chi2(q) and chi2(p)") {
    const int q = 10, p = 2;
    const double z_mid = 8.0;
    // Weak end: close to chi2(q).
    CHECK(cdf_quadrature(GammaCVF{q, p, 1e-8}, z_mid) ==
          doctest::Approx(chi2_cdf(z_mid, q)).epsilon(1e-6));
    // Strong end: approaches chi2(p) from below in z-probability.
    CHECK(std::abs(cdf_quadrature(GammaCVF{q, p, 1e7}, z_mid) -
                   chi2_cdf(z_mid, p)) < 1e-3);
    // In between the CDF is sandwiched.
    const double mid = cdf_quadrature(GammaCVF{q, p, 15.0}, z_mid);
    CHECK(mid >= chi2_cdf(z_mid, q) - 1e-12);
    CHECK(mid <= chi2_cdf(z_mid, p) + 1e-12);
}

TEST_CASE("gamma-plus-chi2 CDF: exact convolution oracle at lambda = 0") {
    // With lambda = 0 the sum is chi2(q) + chi2(md) = chi2(q + md).
    for (const int md : {1, 2, 4}) {
        for (const double z : {1.0, 4.0, 10.0}) {
            CHECK(cdf_gamma_plus_chi2(GammaCVF{5, 2, 0.0}, md, z) ==
                  doctest::Approx(chi2_cdf(z, 5 + md)).epsilon(1e-7));
        }
    }
    // md = 0 reduces to the plain CDF.
    CHECK(cdf_gamma_plus_chi2(GammaCVF{5, 2, 3.0}, 0, 4.0) ==
          doctest::Approx(cdf_quadrature(GammaCVF{5, 2, 3.0}, 4.0)));
}

TEST_CASE("gamma-plus-chi2 CDF matches Monte Carlo") {
    const GammaCVF g{6, 2, 8.0};
    const int md = 2;
    std::mt19937_64 rng(7);
    std::chi_squared_distribution<double> chi_qp(g.q - g.p);
    std::chi_squared_distribution<double> chi_p(g.p);
    std::chi_squared_distribution<double> chi_md(md);
    const int reps = 200000;
    const double z = 12.0;
    int count = 0;
    for (int i = 0; i < reps; ++i) {
        const double a = chi_qp(rng);
        const double b = chi_p(rng);
        const double v =
            0.5 * (a + b - g.lambda +
                   std::sqrt((a + b + g.lambda) * (a + b + g.lambda) -
                             4.0 * a * g.lambda)) +
            chi_md(rng);
        if (v <= z) ++count;
    }
    CHECK(std::abs(static_cast<double>(count) / reps -
                   cdf_gamma_plus_chi2(g, md, z)) < 0.005);
}

TEST_CASE("parameter validation") {
    CHECK_THROWS_AS(cdf_quadrature(GammaCVF{2, 3, 1.0}, 1.0), ConfigError);
    CHECK_THROWS_AS(cdf_quadrature(GammaCVF{2, 0, 1.0}, 1.0), ConfigError);
    CHECK_THROWS_AS(cdf_quadrature(GammaCVF{2, 1, -1.0}, 1.0), ConfigError);
    CHECK_THROWS_AS(quantile(GammaCVF{2, 1, 1.0}, 0.0), ConfigError);
    CHECK_THROWS_AS(cdf_gamma_plus_chi2(GammaCVF{2, 1, 1.0}, -1, 1.0), ConfigError);
    CHECK_THROWS_AS(cdf_series(GammaCVF{2, 1, 1.0}, 1.0, -1), ConfigError);
}
