#include "ivinfer/tests.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "ivinfer/clr_cdf.hpp"
#include "ivinfer/distributions.hpp"
#include "ivinfer/optimize.hpp"

namespace ivinfer {
namespace {

// Residualize exogenous controls and reject datasets whose exogenous
// covariates of interest require the dedicated joint test.
IVDataset prepare(const IVDataset& data, const char* op) {
    IVDataset d = residualize(data);
    if (d.md() > 0)
        throw ConfigError(std::string(op) +
                          ": dataset has exogenous covariates of interest; use "
                          "test_with_exogenous_of_interest");
    d.validate();
    return d;
}

void check_beta0(const IVDataset& d, const Eigen::VectorXd& beta0, const char* op) {
    if (beta0.size() != d.mx())
        throw ConfigError(std::string(op) + ": beta0 has length " +
                          std::to_string(beta0.size()) + ", expected mx = " +
                          std::to_string(d.mx()));
}

// Projection quotient r' P_Z r / r' M_Z r, scaled by (n - k).
double scaled_quotient(const Eigen::VectorXd& r, const ProjectionPair& pz,
                       double nk, const char* op) {
    const double total = r.squaredNorm();
    if (total == 0.0) return 0.0;
    const double num = pz.proj(r).squaredNorm();
    const double den = total - num;
    if (den <= 1e-14 * total)
        throw NumericalError(std::string(op) +
                             ": residual lies in the span of the instruments");
    return nk * num / den;
}

// k-class coefficient solve without the convexity guard; used where the
// minimizing gamma is needed even when the LIML kappa sits at the boundary.
Eigen::VectorXd solve_kclass_unguarded(const Eigen::VectorXd& r0,
                                       const Eigen::MatrixXd& W,
                                       const ProjectionPair& pz, double kappa) {
    const Eigen::MatrixXd MW = pz.annih(W);
    Eigen::MatrixXd A = W.transpose() * W - kappa * (W.transpose() * MW);
    A = 0.5 * (A + A.transpose()).eval();
    const Eigen::VectorXd b =
        W.transpose() * r0 - kappa * (W.transpose() * pz.annih(r0));
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(A);
    cod.setThreshold(kRankTol);
    return cod.solve(b);
}

TestResult make_chi2_result(double stat, int df) {
    TestResult res;
    res.statistic = stat;
    res.dist = DistDescriptor::chi2_dist(df);
    res.p_value = 1.0 - res.dist.cdf(stat);
    return res;
}

double liml_scaled_min(const IVDataset& d, const ProjectionPair& pz) {
    return static_cast<double>(d.n() - d.k()) *
           detail::liml_lambda_min(d.y, d.S(), pz);
}

}  // namespace

DistDescriptor DistDescriptor::chi2_dist(int df) {
    DistDescriptor desc;
    desc.kind = Kind::chi2;
    desc.df = df;
    return desc;
}

DistDescriptor DistDescriptor::gamma_dist(int q, int p, double lambda) {
    DistDescriptor desc;
    desc.kind = Kind::gamma_cvf;
    desc.q = q;
    desc.p = p;
    desc.lambda = lambda;
    return desc;
}

DistDescriptor DistDescriptor::gamma_plus_chi2_dist(int q, int p, double lambda,
                                                    int md) {
    DistDescriptor desc = gamma_dist(q, p, lambda);
    desc.kind = Kind::gamma_cvf_plus_chi2;
    desc.md = md;
    return desc;
}

double DistDescriptor::cdf(double x) const {
    switch (kind) {
        case Kind::chi2:
            if (df == 0) return x >= 0.0 ? 1.0 : 0.0;  // point mass at zero
            return chi2_cdf(x, static_cast<double>(df));
        case Kind::gamma_cvf:
            return cdf_quadrature(GammaCVF{q, p, lambda}, x);
        case Kind::gamma_cvf_plus_chi2:
            return cdf_gamma_plus_chi2(GammaCVF{q, p, lambda}, md, x);
    }
    return 0.0;
}

std::string DistDescriptor::name() const {
    std::ostringstream out;
    switch (kind) {
        case Kind::chi2:
            out << "chi2(" << df << ")";
            break;
        case Kind::gamma_cvf:
            out << "gamma_cvf(" << q << ", " << p << ", " << lambda << ")";
            break;
        case Kind::gamma_cvf_plus_chi2:
            out << "gamma_cvf_plus_chi2(" << q << ", " << p << ", " << lambda
                << ", " << md << ")";
            break;
    }
    return out.str();
}

TestKind test_kind_from_string(const std::string& name) {
    if (name == "wald") return TestKind::wald;
    if (name == "ar") return TestKind::ar;
    if (name == "lm") return TestKind::lm;
    if (name == "lm-plugin" || name == "lm_plugin") return TestKind::lm_plugin;
    if (name == "lr") return TestKind::lr;
    if (name == "clr") return TestKind::clr;
    throw ConfigError("unknown test kind '" + name + "'");
}

std::string to_string(TestKind kind) {
    switch (kind) {
        case TestKind::wald: return "wald";
        case TestKind::ar: return "ar";
        case TestKind::lm: return "lm";
        case TestKind::lm_plugin: return "lm-plugin";
        case TestKind::lr: return "lr";
        case TestKind::clr: return "clr";
    }
    return "?";
}

namespace detail {

InnerAR inner_ar(const Eigen::VectorXd& r0, const Eigen::MatrixXd& W,
                 const ProjectionPair& pz, Eigen::Index k) {
    const double nk = static_cast<double>(r0.size() - k);
    InnerAR out;
    if (W.cols() == 0) {
        out.stat = scaled_quotient(r0, pz, nk, "ar_test");
        out.gamma = Eigen::VectorXd(0);
        return out;
    }
    const double lam = liml_lambda_min(r0, W, pz);
    out.stat = nk * lam;
    out.gamma = solve_kclass_unguarded(r0, W, pz, 1.0 + lam);
    return out;
}

LMObjective::LMObjective(const Eigen::VectorXd& r0, const Eigen::MatrixXd& X,
                         const Eigen::MatrixXd& W, const ProjectionPair& pz,
                         Eigen::Index k) {
    const Eigen::Index m = X.cols() + W.cols();
    Eigen::MatrixXd S(r0.size(), m);
    if (X.cols() > 0) S.leftCols(X.cols()) = X;
    if (W.cols() > 0) S.rightCols(W.cols()) = W;
    nk_ = static_cast<double>(r0.size() - k);
    U_ = pz.Q.transpose() * S;
    uW_ = pz.Q.transpose() * W;
    u0_ = pz.Q.transpose() * r0;
    r0tS_ = S.transpose() * r0;
    WtS_ = W.transpose() * S;
    Wtr0_ = W.transpose() * r0;
    WtW_ = W.transpose() * W;
    r0tr0_ = r0.squaredNorm();
}

double LMObjective::operator()(const Eigen::VectorXd& gamma) const {
    Eigen::VectorXd a = u0_;
    Eigen::VectorXd rtS = r0tS_;
    double rtr = r0tr0_;
    if (gamma.size() > 0) {
        a -= uW_ * gamma;
        rtS -= WtS_.transpose() * gamma;
        rtr += -2.0 * gamma.dot(Wtr0_) + gamma.dot(WtW_ * gamma);
    }
    const double rMr = rtr - a.squaredNorm();
    if (!(rMr > 1e-14 * std::max(rtr, 1e-300)))
        return std::numeric_limits<double>::infinity();

    const Eigen::VectorXd rMS = rtS - U_.transpose() * a;
    const Eigen::MatrixXd B = U_ - a * (rMS / rMr).transpose();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(B);
    qr.setThreshold(kRankTol);
    const Eigen::VectorXd c = qr.solve(a);
    const double num = a.dot(B * c);
    const double stat = nk_ * num / rMr;
    return stat < 0.0 ? 0.0 : stat;
}

}  // namespace detail

TestResult wald_test(const IVDataset& data, const Eigen::VectorXd& beta0,
                     EstimatorSpec estimator) {
    const IVDataset d = prepare(data, "wald_test");
    check_beta0(d, beta0, "wald_test");
    const ProjectionPair pz(d.Z);
    double kappa = 1.0;
    switch (estimator.kind) {
        case EstimatorSpec::Kind::tsls: kappa = 1.0; break;
        case EstimatorSpec::Kind::liml:
            kappa = 1.0 + detail::liml_lambda_min(d.y, d.S(), pz);
            break;
        case EstimatorSpec::Kind::kappa: kappa = estimator.kappa_value; break;
    }
    const KClassFit fit = detail::kclass_fit(d.y, d.S(), pz, d.k(), kappa);
    const Eigen::VectorXd diff = beta0 - fit.coef.head(d.mx());
    const Eigen::MatrixXd V = fit.cov_scale.topLeftCorner(d.mx(), d.mx());
    Eigen::FullPivLU<Eigen::MatrixXd> lu(V);
    if (!lu.isInvertible())
        throw NumericalError("wald_test: singular covariance block");
    const double stat =
        std::max(0.0, diff.dot(lu.solve(diff)) / fit.sigma2_wald);
    TestResult res = make_chi2_result(stat, static_cast<int>(d.mx()));
    res.diagnostics["kappa"] = kappa;
    return res;
}

TestResult ar_test(const IVDataset& data, const Eigen::VectorXd& beta0) {
    const IVDataset d = prepare(data, "ar_test");
    check_beta0(d, beta0, "ar_test");
    const ProjectionPair pz(d.Z);
    const Eigen::VectorXd r0 = d.y - d.X * beta0;
    const detail::InnerAR inner = detail::inner_ar(r0, d.W, pz, d.k());
    TestResult res =
        make_chi2_result(inner.stat, static_cast<int>(d.k() - d.mw()));
    for (Eigen::Index i = 0; i < inner.gamma.size(); ++i)
        res.diagnostics["gamma_liml_" + std::to_string(i)] = inner.gamma(i);
    return res;
}

namespace {

TestResult lm_test_impl(const IVDataset& data, const Eigen::VectorXd& beta0,
                        bool plugin) {
    const char* op = plugin ? "lm_test_plugin" : "lm_test";
    const IVDataset d = prepare(data, op);
    check_beta0(d, beta0, op);
    const ProjectionPair pz(d.Z);
    const Eigen::VectorXd r0 = d.y - d.X * beta0;
    const detail::LMObjective objective(r0, d.X, d.W, pz, d.k());

    double stat = 0.0;
    Eigen::VectorXd gamma(0);
    if (d.mw() == 0) {
        stat = objective(gamma);
        if (!std::isfinite(stat))
            throw NumericalError(std::string(op) + ": degenerate residual");
    } else {
        const detail::InnerAR inner = detail::inner_ar(r0, d.W, pz, d.k());
        if (plugin) {
            gamma = inner.gamma;
            stat = objective(gamma);
            if (!std::isfinite(stat))
                throw NumericalError(std::string(op) +
                                     ": objective non-finite at the LIML gamma");
        } else {
            std::vector<Eigen::VectorXd> starts = {
                inner.gamma, Eigen::VectorXd::Zero(d.mw())};
            const MinimizeReport report = minimize_multistart(
                [&objective](const Eigen::VectorXd& g) { return objective(g); },
                starts);
            bool any_converged = false;
            for (const StartReport& run : report.starts)
                any_converged = any_converged || (!run.skipped && run.converged);
            if (!any_converged)
                throw NumericalError(
                    "lm_test: optimizer failed to converge from every start; "
                    "best value " +
                    std::to_string(report.value));
            stat = report.value;
            gamma = report.argmin;
        }
    }
    TestResult res = make_chi2_result(std::max(0.0, stat),
                                      static_cast<int>(d.mx()));
    for (Eigen::Index i = 0; i < gamma.size(); ++i)
        res.diagnostics["gamma_" + std::to_string(i)] = gamma(i);
    return res;
}

}  // namespace

TestResult lm_test(const IVDataset& data, const Eigen::VectorXd& beta0) {
    return lm_test_impl(data, beta0, false);
}

TestResult lm_test_plugin(const IVDataset& data, const Eigen::VectorXd& beta0) {
    return lm_test_impl(data, beta0, true);
}

TestResult lr_test(const IVDataset& data, const Eigen::VectorXd& beta0) {
    const IVDataset d = prepare(data, "lr_test");
    check_beta0(d, beta0, "lr_test");
    const ProjectionPair pz(d.Z);
    const Eigen::VectorXd r0 = d.y - d.X * beta0;
    const double ar = detail::inner_ar(r0, d.W, pz, d.k()).stat;
    const double jliml = liml_scaled_min(d, pz);
    // ar and jliml come from separate eigensolves, so at the minimizer their
    // difference is cancellation noise; snap it to an exact zero so the
    // p-value is exactly one there (the chi-squared CDF has infinite slope
    // at the origin, so even 1e-12 of noise is visible in the p-value).
    double stat = std::max(0.0, ar - jliml);
    if (stat <= 1e-9 * std::max(1.0, jliml)) stat = 0.0;
    TestResult res = make_chi2_result(stat, static_cast<int>(d.mx()));
    res.diagnostics["j_liml"] = jliml;
    return res;
}

TestResult clr_test(const IVDataset& data, const Eigen::VectorXd& beta0) {
    const IVDataset d = prepare(data, "clr_test");
    check_beta0(d, beta0, "clr_test");
    const ProjectionPair pz(d.Z);
    const double nk = static_cast<double>(d.n() - d.k());
    const Eigen::VectorXd r0 = d.y - d.X * beta0;
    const double ar = detail::inner_ar(r0, d.W, pz, d.k()).stat;
    const double jliml = liml_scaled_min(d, pz);
    const double stat = std::max(0.0, ar - jliml);

    double s_min;
    bool conjectural = false;
    if (d.mw() == 0) {
        const double rMr = r0.squaredNorm() - pz.proj(r0).squaredNorm();
        if (rMr <= 1e-14 * std::max(r0.squaredNorm(), 1e-300))
            throw NumericalError("clr_test: residual lies in the instrument span");
        const Eigen::RowVectorXd w = (r0.transpose() * pz.annih(d.X)) / rMr;
        const Eigen::MatrixXd Xt = d.X - r0 * w;
        s_min = nk * detail::projection_quotient_eigenvalues(Xt, pz, "clr_test")(0);
    } else {
        Eigen::MatrixXd M(d.n(), d.m() + 1);
        M.leftCols(d.m()) = d.S();
        M.col(d.m()) = d.y;
        const Eigen::VectorXd eigs =
            detail::projection_quotient_eigenvalues(M, pz, "clr_test");
        s_min = nk * (eigs(0) + eigs(1)) - ar;
        conjectural = true;
    }
    if (s_min < -1e-8)
        throw NumericalError("clr_test: negative strength statistic s_min = " +
                             std::to_string(s_min));
    s_min = std::max(0.0, s_min);

    TestResult res;
    res.statistic = stat;
    res.dist = DistDescriptor::gamma_dist(static_cast<int>(d.k() - d.mw()),
                                          static_cast<int>(d.mx()), s_min);
    res.p_value = std::max(0.0, 1.0 - res.dist.cdf(stat));
    res.diagnostics["s_min"] = s_min;
    res.diagnostics["j_liml"] = jliml;
    if (conjectural) res.notes.push_back("conjectural calibration");
    return res;
}

TestResult rank_test(const IVDataset& data, int r) {
    const IVDataset d = prepare(data, "rank_test");
    if (r < 1 || r > d.m())
        throw ConfigError("rank_test: r must satisfy 1 <= r <= m = " +
                          std::to_string(d.m()) + ", got " + std::to_string(r));
    const ProjectionPair pz(d.Z);
    const Eigen::VectorXd eigs =
        detail::projection_quotient_eigenvalues_reduced(d.S(), pz, "rank_test");
    const double nk = static_cast<double>(d.n() - d.k());
    const double stat = nk * eigs.head(r).sum();
    const int df = r * static_cast<int>(d.k() - d.m() + r);
    return make_chi2_result(std::max(0.0, stat), df);
}

TestResult j_statistic(const IVDataset& data) {
    const IVDataset d = prepare(data, "j_statistic");
    if (d.k() == d.m()) {
        TestResult res = make_chi2_result(0.0, 0);
        res.p_value = 1.0;  // point mass at zero: P(X >= 0) = 1
        res.notes.push_back("just-identified");
        return res;
    }
    const ProjectionPair pz(d.Z);
    const KClassFit fit = detail::kclass_fit(d.y, d.S(), pz, d.k(), 1.0);
    const Eigen::VectorXd u = d.y - d.S() * fit.coef;
    const double nk = static_cast<double>(d.n() - d.k());
    const double stat = scaled_quotient(u, pz, nk, "j_statistic");
    return make_chi2_result(stat, static_cast<int>(d.k() - d.m()));
}

TestResult j_liml(const IVDataset& data) {
    const IVDataset d = prepare(data, "j_liml");
    if (d.k() == d.m()) {
        TestResult res = make_chi2_result(0.0, 0);
        res.p_value = 1.0;  // point mass at zero: P(X >= 0) = 1
        res.notes.push_back("just-identified");
        return res;
    }
    const ProjectionPair pz(d.Z);
    const double stat = liml_scaled_min(d, pz);
    return make_chi2_result(stat, static_cast<int>(d.k() - d.m()));
}

TestResult run_test(const IVDataset& data, const Eigen::VectorXd& beta0,
                    TestKind kind, EstimatorSpec estimator) {
    switch (kind) {
        case TestKind::wald: return wald_test(data, beta0, estimator);
        case TestKind::ar: return ar_test(data, beta0);
        case TestKind::lm: return lm_test(data, beta0);
        case TestKind::lm_plugin: return lm_test_plugin(data, beta0);
        case TestKind::lr: return lr_test(data, beta0);
        case TestKind::clr: return clr_test(data, beta0);
    }
    throw ConfigError("run_test: unknown test kind");
}

TestResult test_with_exogenous_of_interest(const IVDataset& data,
                                           const Eigen::VectorXd& beta0,
                                           const Eigen::VectorXd& delta0,
                                           TestKind test) {
    IVDataset d = residualize(data);
    d.validate();
    if (beta0.size() != d.mx())
        throw ConfigError("test_with_exogenous_of_interest: beta0 has length " +
                          std::to_string(beta0.size()) + ", expected mx = " +
                          std::to_string(d.mx()));
    if (delta0.size() != d.md())
        throw ConfigError("test_with_exogenous_of_interest: delta0 has length " +
                          std::to_string(delta0.size()) + ", expected md = " +
                          std::to_string(d.md()));
    if (d.md() == 0) return run_test(d, beta0, test);

    // Append D to both the covariates of interest and the instruments.
    IVDataset aug;
    aug.y = d.y;
    aug.X.resize(d.n(), d.mx() + d.md());
    if (d.mx() > 0) aug.X.leftCols(d.mx()) = d.X;
    aug.X.rightCols(d.md()) = d.D;
    aug.W = d.W;
    aug.Z.resize(d.n(), d.k() + d.md());
    aug.Z.leftCols(d.k()) = d.Z;
    aug.Z.rightCols(d.md()) = d.D;
    Eigen::VectorXd theta0(d.mx() + d.md());
    if (d.mx() > 0) theta0.head(d.mx()) = beta0;
    theta0.tail(d.md()) = delta0;

    if (test != TestKind::clr && test != TestKind::lr)
        return run_test(aug, theta0, test);

    if (test == TestKind::clr && d.mw() > 0)
        throw ConfigError(
            "test_with_exogenous_of_interest: no conditional likelihood-ratio "
            "calibration is available with both an endogenous nuisance and "
            "exogenous covariates of interest");

    aug.validate();
    const ProjectionPair pzd(aug.Z);
    const ProjectionPair pd(d.D);
    const ProjectionPair pmdz(pd.annih(d.Z));
    const double nkd = static_cast<double>(d.n() - d.k() - d.md());

    // The profiled minimum over all coefficients (including the one on D).
    // Minimizing the numerator over the D coefficient replaces P_{[Z,D]} by
    // P_{M_D Z}, leaving a pencil in the original [y X W] columns whose
    // denominator Gram is nonsingular.
    Eigen::MatrixXd YS(d.n(), 1 + d.m());
    YS.col(0) = d.y;
    if (d.m() > 0) YS.rightCols(d.m()) = d.S();
    const Eigen::MatrixXd num = YS.transpose() * pmdz.proj(YS);
    const Eigen::MatrixXd den = YS.transpose() * pzd.annih(YS);
    const double jliml =
        nkd * std::max(0.0, detail::generalized_eigenvalues(
                                num, den, "test_with_exogenous_of_interest")(0));

    if (test == TestKind::lr) {
        const double ar_profiled = run_test(aug, theta0, TestKind::ar).statistic;
        TestResult res = make_chi2_result(std::max(0.0, ar_profiled - jliml),
                                          static_cast<int>(d.mx() + d.md()));
        res.diagnostics["j_liml"] = jliml;
        return res;
    }

    const Eigen::VectorXd r0 = aug.y - aug.X * theta0;
    const double ar = scaled_quotient(r0, pzd, nkd, "test_with_exogenous_of_interest");
    const double stat = std::max(0.0, ar - jliml);

    const double rMr = r0.squaredNorm() - pzd.proj(r0).squaredNorm();
    if (rMr <= 1e-14 * std::max(r0.squaredNorm(), 1e-300))
        throw NumericalError(
            "test_with_exogenous_of_interest: residual lies in the instrument span");
    const Eigen::RowVectorXd w = (r0.transpose() * pzd.annih(d.X)) / rMr;
    const Eigen::MatrixXd Xt = d.X - r0 * w;

    const Eigen::MatrixXd A = Xt.transpose() * pmdz.proj(Xt);
    const Eigen::MatrixXd B = Xt.transpose() * pzd.annih(Xt);
    double s_min =
        nkd * detail::generalized_eigenvalues(
                  A, B, "test_with_exogenous_of_interest")(0);
    if (s_min < -1e-8)
        throw NumericalError(
            "test_with_exogenous_of_interest: negative strength statistic s_min = " +
            std::to_string(s_min));
    s_min = std::max(0.0, s_min);

    TestResult res;
    res.statistic = stat;
    res.dist = DistDescriptor::gamma_plus_chi2_dist(
        static_cast<int>(d.k()), static_cast<int>(d.mx()), s_min,
        static_cast<int>(d.md()));
    res.p_value = std::max(0.0, 1.0 - res.dist.cdf(stat));
    res.diagnostics["s_min"] = s_min;
    res.diagnostics["j_liml"] = jliml;
    return res;
}

}  // namespace ivinfer
