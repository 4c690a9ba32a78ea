#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "ivinfer/distributions.hpp"
#include "ivinfer/kclass.hpp"
#include "ivinfer/montecarlo.hpp"
#include "ivinfer/tests.hpp"

using namespace ivinfer;
using testutil::randn;
using testutil::randn_vec;

namespace {

Eigen::VectorXd vec1(double x) {
    Eigen::VectorXd v(1);
    v(0) = x;
    return v;
}

double ks_distance(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    double d = 0.0;
    const double n = static_cast<double>(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        d = std::max(d, std::abs((i + 1) / n - values[i]));
        d = std::max(d, std::abs(values[i] - i / n));
    }
    return d;
}

}  // namespace

TEST_CASE("p-values agree with the reference CDF and statistics are nonnegative") {
    std::mt19937_64 rng(31);
    const IVDataset d = testutil::random_instance(rng, 80, 5, 1, 1);
    const Eigen::VectorXd beta0 = vec1(0.4);
    for (const TestKind kind : {TestKind::wald, TestKind::ar, TestKind::lm,
                                TestKind::lm_plugin, TestKind::lr, TestKind::clr}) {
        const TestResult res = run_test(d, beta0, kind);
        CHECK(res.statistic >= 0.0);
        CHECK(res.p_value >= 0.0);
        CHECK(res.p_value <= 1.0);
        CHECK(std::abs(res.p_value - (1.0 - res.dist.cdf(res.statistic))) < 1e-10);
    }
}

TEST_CASE("decomposition identity: (k - mw) AR = LR + J_LIML") {
    std::mt19937_64 rng(32);
    for (int trial = 0; trial < 20; ++trial) {
        const IVDataset d = testutil::random_instance(
            rng, 60 + 10 * (trial % 4), 4 + trial % 3, 1, trial % 2);
        const Eigen::VectorXd beta0 = vec1(-1.0 + 0.2 * trial);
        const double ar = ar_test(d, beta0).statistic;
        const double lr = lr_test(d, beta0).statistic;
        const double jl = j_liml(d).statistic;
        CHECK(std::abs(ar - (lr + jl)) < 1e-8 * (1.0 + ar));
    }
}

TEST_CASE("J_LIML equals (n - k)(kappa_liml - 1) and never exceeds J") {
    std::mt19937_64 rng(33);
    for (int trial = 0; trial < 20; ++trial) {
        const IVDataset d = testutil::random_instance(rng, 70, 5, 1, 1);
        const double jl = j_liml(d).statistic;
        CHECK(jl == doctest::Approx((d.n() - d.k()) * (kappa_liml(d) - 1.0))
                        .epsilon(1e-10));
        CHECK(j_statistic(d).statistic >= jl - 1e-10);
    }
}

TEST_CASE("just-identified J statistics collapse to zero with p = 1") {
    std::mt19937_64 rng(34);
    const IVDataset d = testutil::random_instance(rng, 50, 2, 1, 1, 2.0);
    for (const TestResult& res : {j_statistic(d), j_liml(d)}) {
        CHECK(res.statistic == 0.0);
        CHECK(res.p_value == 1.0);
        REQUIRE(res.notes.size() == 1);
        CHECK(res.notes[0] == "just-identified");
    }
}

TEST_CASE("AR inner minimum equals the LIML eigenvalue of the (r0, W) system") {
    std::mt19937_64 rng(35);
    const IVDataset d = testutil::random_instance(rng, 60, 5, 1, 2);
    const Eigen::VectorXd beta0 = vec1(0.3);
    const double ar = ar_test(d, beta0).statistic;

    IVDataset inner;
    inner.y = d.y - d.X * beta0;
    inner.X = d.W;
    inner.Z = d.Z;
    inner.W.resize(d.n(), 0);
    const double oracle = (d.n() - d.k()) * (kappa_liml(inner) - 1.0);
    CHECK(ar == doctest::Approx(oracle).epsilon(1e-10));
}

TEST_CASE("AR with mw = 0 and residual orthogonal to Z is zero with p = 1") {
    IVDataset d;
    d.Z = Eigen::MatrixXd::Zero(10, 2);
    d.Z(0, 0) = 1.0;
    d.Z(1, 1) = 1.0;
    d.X = Eigen::MatrixXd::Zero(10, 1);
    d.X.col(0).tail(8) = Eigen::VectorXd::LinSpaced(8, 1.0, 8.0);
    d.y = 2.0 * d.X.col(0);  // residual at beta0 = 1 is X, orthogonal to Z
    d.W.resize(10, 0);
    const TestResult res = ar_test(d, vec1(1.0));
    CHECK(res.statistic == doctest::Approx(0.0));
    CHECK(res.p_value == doctest::Approx(1.0));
    CHECK(lm_test(d, vec1(1.0)).statistic == doctest::Approx(0.0));
}

TEST_CASE("Wald at the point estimate is zero; LR at the LIML estimate is zero") {
    std::mt19937_64 rng(36);
    const IVDataset d = testutil::random_instance(rng, 60, 4, 1, 1);
    const KClassFit tsls = kclass(d, 1.0);
    const TestResult wald = wald_test(d, tsls.coef.head(1));
    CHECK(wald.statistic == doctest::Approx(0.0));
    CHECK(wald.p_value == doctest::Approx(1.0));

    const IVDataset e = testutil::random_instance(rng, 60, 4, 1, 0);
    const KClassFit liml = kclass(e, kappa_liml(e));
    CHECK(lr_test(e, liml.coef).statistic < 1e-8);
}

TEST_CASE("mw = 0 identity: LR equals the variance-rescaled LIML Wald statistic") {
    std::mt19937_64 rng(37);
    for (int trial = 0; trial < 10; ++trial) {
        const IVDataset d = testutil::random_instance(rng, 80, 4, 2, 0);
        const Eigen::VectorXd beta0 = randn_vec(rng, 2);
        const double lr = lr_test(d, beta0).statistic;
        const double wald = wald_test(d, beta0, EstimatorSpec::liml()).statistic;
        const KClassFit liml = kclass(d, kappa_liml(d));
        const Eigen::VectorXd r = d.y - d.X * beta0;
        const double sigma2_beta =
            annih(d.Z, r).squaredNorm() / static_cast<double>(d.n() - d.k());
        CHECK(lr == doctest::Approx(liml.sigma2_wald / sigma2_beta * wald)
                        .epsilon(1e-8));
    }
}

TEST_CASE("mw = 0, k = mx: LM coincides with the AR statistic") {
    std::mt19937_64 rng(38);
    const IVDataset d = testutil::random_instance(rng, 50, 2, 2, 0, 2.0);
    const Eigen::VectorXd beta0 = randn_vec(rng, 2);
    const double lm = lm_test(d, beta0).statistic;
    const double ar = ar_test(d, beta0).statistic;
    CHECK(lm == doctest::Approx(ar).epsilon(1e-8));
}

TEST_CASE("LM minimized never exceeds the plug-in variant") {
    std::mt19937_64 rng(39);
    for (int trial = 0; trial < 10; ++trial) {
        const IVDataset d = testutil::random_instance(rng, 60, 5, 1, 1, 0.3);
        const Eigen::VectorXd beta0 = vec1(0.5 * trial - 2.0);
        CHECK(lm_test(d, beta0).statistic <=
              lm_test_plugin(d, beta0).statistic + 1e-10);
    }
}

TEST_CASE("CLR with mw = 0, k = mx collapses to the LR chi-squared p-value") {
    std::mt19937_64 rng(40);
    const IVDataset d = testutil::random_instance(rng, 60, 2, 2, 0, 2.0);
    const Eigen::VectorXd beta0 = randn_vec(rng, 2);
    const TestResult clr = clr_test(d, beta0);
    const TestResult lr = lr_test(d, beta0);
    CHECK(clr.statistic == doctest::Approx(lr.statistic).epsilon(1e-10));
    CHECK(clr.p_value == doctest::Approx(lr.p_value).epsilon(1e-8));
}

TEST_CASE("CLR at s_min = 0 calibrates against chi2(k - mw)") {
    const DistDescriptor dist = DistDescriptor::gamma_dist(6, 2, 0.0);
    for (const double z : {1.0, 4.0, 11.0})
        CHECK(dist.cdf(z) == doctest::Approx(chi2_cdf(z, 6)).epsilon(1e-10));
}

TEST_CASE("CLR under strong instruments approaches the chi2(mx) p-value") {
    std::mt19937_64 rng(41);
    const IVDataset d = testutil::random_instance(rng, 2000, 6, 1, 0, 3.0);
    const Eigen::VectorXd beta0 = vec1(1.02);
    const TestResult clr = clr_test(d, beta0);
    CHECK(clr.diagnostics.at("s_min") > 1000.0);
    const double chi2_p = chi2_sf(clr.statistic, 1.0);
    CHECK(std::abs(clr.p_value - chi2_p) < 1e-3);
}

TEST_CASE("subvector CLR carries the conjectural-calibration note") {
    std::mt19937_64 rng(42);
    const IVDataset d = testutil::random_instance(rng, 60, 5, 1, 1);
    const TestResult res = clr_test(d, vec1(0.5));
    REQUIRE(!res.notes.empty());
    CHECK(res.notes[0] == "conjectural calibration");
    CHECK(res.diagnostics.count("s_min") == 1);
}

TEST_CASE("statistics are invariant under instrument reparameterization Z -> ZG") {
    std::mt19937_64 rng(43);
    const IVDataset d = testutil::random_instance(rng, 60, 4, 1, 1);
    Eigen::MatrixXd G = randn(rng, 4, 4);
    G += 5.0 * Eigen::MatrixXd::Identity(4, 4);  // comfortably invertible
    IVDataset e = d;
    e.Z = d.Z * G;
    const Eigen::VectorXd beta0 = vec1(0.25);
    for (const TestKind kind :
         {TestKind::ar, TestKind::lm, TestKind::lr, TestKind::clr}) {
        const double a = run_test(d, beta0, kind).statistic;
        const double b = run_test(e, beta0, kind).statistic;
        CHECK(a == doctest::Approx(b).epsilon(1e-8));
    }
}

TEST_CASE("rank test: m = 1 equals the first-stage F-type statistic") {
    std::mt19937_64 rng(44);
    const IVDataset d = testutil::random_instance(rng, 80, 4, 1, 0);
    const TestResult res = rank_test(d, 1);
    const double rss_full = annih(d.Z, d.X).squaredNorm();
    const double rss_empty = d.X.squaredNorm();
    const double f_type = (d.n() - d.k()) * (rss_empty - rss_full) / rss_full;
    CHECK(res.statistic == doctest::Approx(f_type).epsilon(1e-10));
    CHECK(res.dist.df == 4);
}

TEST_CASE("rank test: a column exactly in the instrument span") {
    std::mt19937_64 rng(45);
    IVDataset d;
    d.Z = randn(rng, 50, 4);
    d.X = d.Z * randn(rng, 4, 1);  // lies exactly in the instrument span
    d.W = d.Z * randn(rng, 4, 1) + randn(rng, 50, 1);
    d.y = d.X + d.W + randn_vec(rng, 50);
    // The X direction has a diverging quotient, so the smallest eigenvalue
    // comes from the one-dimensional reduced problem in the W direction.
    const Eigen::VectorXd pw = testutil::dense_proj(d.Z, d.W);
    const double oracle =
        (d.n() - d.k()) * pw.squaredNorm() /
        (d.W.squaredNorm() - pw.squaredNorm());
    CHECK(rank_test(d, 1).statistic == doctest::Approx(oracle).epsilon(1e-10));
    // With r = m the statistic includes the diverging direction.
    CHECK(std::isinf(rank_test(d, 2).statistic));
    CHECK(rank_test(d, 2).p_value == doctest::Approx(0.0));
}

TEST_CASE("rank test argument validation and null calibration") {
    std::mt19937_64 rng(46);
    const IVDataset d = testutil::random_instance(rng, 40, 4, 1, 1);
    CHECK_THROWS_AS(rank_test(d, 0), ConfigError);
    CHECK_THROWS_AS(rank_test(d, 3), ConfigError);

    // Pi = 0: p-values approximately uniform.
    std::vector<double> pvals;
    for (int rep = 0; rep < 500; ++rep) {
        std::mt19937_64 r = replication_rng(17, rep);
        IVDataset e;
        e.Z = randn(r, 2000, 3);
        e.X = randn(r, 2000, 1);  // no first-stage signal
        e.y = randn_vec(r, 2000);
        e.W.resize(2000, 0);
        pvals.push_back(rank_test(e, 1).p_value);
    }
    CHECK(ks_distance(pvals) < 0.05);
}

TEST_CASE("plain tests reject datasets with exogenous covariates of interest") {
    std::mt19937_64 rng(47);
    IVDataset d = testutil::random_instance(rng, 40, 4, 1, 1);
    d.D = randn(rng, 40, 1);
    CHECK_THROWS_AS(ar_test(d, vec1(0.0)), ConfigError);
    CHECK_THROWS_AS(wald_test(d, vec1(0.0)), ConfigError);
    CHECK_THROWS_AS(clr_test(d, vec1(0.0)), ConfigError);
}

TEST_CASE("exogenous-of-interest: md = 0 reduces to the plain test") {
    std::mt19937_64 rng(48);
    const IVDataset d = testutil::random_instance(rng, 60, 4, 1, 1);
    const Eigen::VectorXd empty(0);
    for (const TestKind kind : {TestKind::ar, TestKind::lm, TestKind::lr}) {
        const double a =
            test_with_exogenous_of_interest(d, vec1(0.2), empty, kind).statistic;
        const double b = run_test(d, vec1(0.2), kind).statistic;
        CHECK(a == doctest::Approx(b));
    }
}

TEST_CASE("exogenous-of-interest: delta-only AR equals AR on the augmented system") {
    std::mt19937_64 rng(49);
    IVDataset d;
    d.Z = randn(rng, 60, 3);
    d.D = randn(rng, 60, 1);
    d.W = d.Z * randn(rng, 3, 1) + randn(rng, 60, 1);
    d.X.resize(60, 0);
    d.y = d.W + 0.5 * d.D + randn_vec(rng, 60);

    const Eigen::VectorXd empty(0);
    const TestResult joint =
        test_with_exogenous_of_interest(d, empty, vec1(0.5), TestKind::ar);

    IVDataset aug;
    aug.Z.resize(60, 4);
    aug.Z << d.Z, d.D;
    aug.X = d.D;
    aug.W = d.W;
    aug.y = d.y;
    const TestResult oracle = ar_test(aug, vec1(0.5));
    CHECK(joint.statistic == doctest::Approx(oracle.statistic).epsilon(1e-10));
    CHECK(joint.p_value == doctest::Approx(oracle.p_value).epsilon(1e-10));
}

TEST_CASE("exogenous-of-interest: synthetic two-block use case runs all tests") {
    // An exogenous covariate of interest alongside an endogenous nuisance,
    // mirroring a gender-coefficient-with-endogenous-income analysis.
    std::mt19937_64 rng(50);
    IVDataset d;
    d.Z = randn(rng, 200, 4);
    d.D = randn(rng, 200, 1);          // exogenous covariate of interest
    d.W = d.Z * randn(rng, 4, 1) * 0.8 + randn(rng, 200, 1);  // endogenous income
    d.X.resize(200, 0);
    d.C = randn(rng, 200, 2);
    d.y = 0.3 * d.D + d.W + d.C * Eigen::VectorXd::Ones(2) + randn_vec(rng, 200);

    const Eigen::VectorXd empty(0);
    for (const TestKind kind : {TestKind::wald, TestKind::ar, TestKind::lm}) {
        const TestResult res =
            test_with_exogenous_of_interest(d, empty, vec1(0.3), kind);
        CHECK(std::isfinite(res.statistic));
        CHECK(res.p_value > 1e-6);  // the truth should not be wildly rejected
    }
    CHECK_THROWS_AS(
        test_with_exogenous_of_interest(d, empty, vec1(0.3), TestKind::clr),
        ConfigError);
}

TEST_CASE("exogenous-of-interest CLR (mw = 0) returns the documented law") {
    std::mt19937_64 rng(51);
    IVDataset d;
    d.Z = randn(rng, 150, 4);
    d.D = randn(rng, 150, 1);
    d.X = d.Z * randn(rng, 4, 1) + randn(rng, 150, 1);
    d.W.resize(150, 0);
    d.y = d.X + 0.5 * d.D + randn_vec(rng, 150);

    const TestResult res =
        test_with_exogenous_of_interest(d, vec1(1.0), vec1(0.5), TestKind::clr);
    CHECK(res.dist.kind == DistDescriptor::Kind::gamma_cvf_plus_chi2);
    CHECK(res.dist.q == 4);
    CHECK(res.dist.p == 1);
    CHECK(res.dist.md == 1);
    CHECK(std::isfinite(res.statistic));
    CHECK(res.p_value > 1e-6);
    CHECK(res.p_value <= 1.0);
}

TEST_CASE("beta0 length validation") {
    std::mt19937_64 rng(52);
    const IVDataset d = testutil::random_instance(rng, 40, 4, 1, 1);
    CHECK_THROWS_AS(ar_test(d, Eigen::VectorXd::Zero(2)), ConfigError);
    CHECK_THROWS_AS(wald_test(d, Eigen::VectorXd::Zero(0)), ConfigError);
}
