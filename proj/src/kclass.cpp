#include "ivinfer/kclass.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>
#include <string>

namespace ivinfer {
namespace detail {

Eigen::VectorXd generalized_eigenvalues(Eigen::MatrixXd A, Eigen::MatrixXd B,
                                        const char* context) {
    A = 0.5 * (A + A.transpose()).eval();
    B = 0.5 * (B + B.transpose()).eval();

    Eigen::LLT<Eigen::MatrixXd> llt(B);
    if (llt.info() == Eigen::Success && B.diagonal().minCoeff() > 0.0) {
        Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(A, B);
        if (ges.info() == Eigen::Success) return ges.eigenvalues();
    }

    // Pseudo-inverse whitening fallback for a B that Cholesky cannot handle.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> esB(B);
    const Eigen::VectorXd d = esB.eigenvalues();
    const double dmax = d.cwiseAbs().maxCoeff();
    if (dmax <= 0.0 || d.minCoeff() < kRankTol * dmax)
        throw NumericalError(std::string(context) +
                             ": the annihilator residual matrix is not of full column rank");
    const Eigen::MatrixXd Wh =
        esB.eigenvectors() * d.cwiseSqrt().cwiseInverse().asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Wh.transpose() * A * Wh);
    return es.eigenvalues();
}

Eigen::VectorXd generalized_eigenvalues_reduced(Eigen::MatrixXd A,
                                                Eigen::MatrixXd B,
                                                const char* context) {
    A = 0.5 * (A + A.transpose()).eval();
    B = 0.5 * (B + B.transpose()).eval();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> esB(B);
    const Eigen::VectorXd d = esB.eigenvalues();
    const double dmax = d.cwiseAbs().maxCoeff();
    if (dmax <= 0.0)
        throw NumericalError(std::string(context) +
                             ": the annihilator residual matrix is not of full column rank");

    Eigen::Index first = 0;
    while (first < d.size() && d(first) < kRankTol * dmax) ++first;
    const Eigen::Index r = d.size() - first;

    const Eigen::MatrixXd Wh = esB.eigenvectors().rightCols(r) *
                               d.tail(r).cwiseSqrt().cwiseInverse().asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Wh.transpose() * A * Wh);

    Eigen::VectorXd out(d.size());
    out.head(r) = es.eigenvalues();
    out.tail(d.size() - r).setConstant(std::numeric_limits<double>::infinity());
    return out;
}

Eigen::VectorXd projection_quotient_eigenvalues(const Eigen::MatrixXd& M,
                                                const ProjectionPair& pz,
                                                const char* context) {
    const Eigen::MatrixXd PM = pz.proj(M);
    const Eigen::MatrixXd A = M.transpose() * PM;
    const Eigen::MatrixXd B = M.transpose() * (M - PM);
    return generalized_eigenvalues(A, B, context);
}

Eigen::VectorXd projection_quotient_eigenvalues_reduced(const Eigen::MatrixXd& M,
                                                        const ProjectionPair& pz,
                                                        const char* context) {
    const Eigen::MatrixXd PM = pz.proj(M);
    const Eigen::MatrixXd A = M.transpose() * PM;
    const Eigen::MatrixXd B = M.transpose() * (M - PM);
    return generalized_eigenvalues_reduced(A, B, context);
}

double liml_lambda_min(const Eigen::VectorXd& y, const Eigen::MatrixXd& S,
                       const ProjectionPair& pz) {
    Eigen::MatrixXd YS(y.size(), 1 + S.cols());
    YS.col(0) = y;
    if (S.cols() > 0) YS.rightCols(S.cols()) = S;
    const double lam = projection_quotient_eigenvalues(YS, pz, "kappa_liml")(0);
    return lam < 0.0 ? 0.0 : lam;  // eigen-noise guard; the quotient is nonnegative
}

double kappa_convexity_threshold(const Eigen::MatrixXd& S, const ProjectionPair& pz) {
    // The reduced pencil gives the convexity boundary even when some columns of
    // S lie exactly in the instrument span (their quotient direction is +inf,
    // which never binds).
    return 1.0 + projection_quotient_eigenvalues_reduced(S, pz, "kclass")(0);
}

KClassFit kclass_fit(const Eigen::VectorXd& y, const Eigen::MatrixXd& S,
                     const ProjectionPair& pz, Eigen::Index k, double kappa) {
    const Eigen::Index n = y.size();
    const Eigen::Index m = S.cols();
    if (m == 0) throw ConfigError("kclass: no endogenous covariates");

    const double threshold = kappa_convexity_threshold(S, pz);
    if (kappa >= threshold - 1e-10)
        throw NumericalError("kclass: objective not convex at kappa = " +
                             std::to_string(kappa) + "; kappa must be below " +
                             std::to_string(threshold));

    const Eigen::MatrixXd MS = pz.annih(S);
    const Eigen::VectorXd My = pz.annih(y);
    Eigen::MatrixXd A = S.transpose() * S - kappa * (S.transpose() * MS);
    A = 0.5 * (A + A.transpose()).eval();
    const Eigen::VectorXd b = S.transpose() * y - kappa * (S.transpose() * My);

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd sv = svd.singularValues();
    if (sv(sv.size() - 1) < kRankTol * sv(0))
        throw NumericalError("kclass: S'(Id - kappa M_Z)S is singular at kappa = " +
                             std::to_string(kappa));

    KClassFit fit;
    fit.kappa = kappa;
    fit.coef = svd.solve(b);
    const Eigen::VectorXd resid = y - S * fit.coef;
    fit.sigma2_wald = resid.squaredNorm() / static_cast<double>(n - m);
    fit.sigma2_mz = pz.annih(resid).squaredNorm() / static_cast<double>(n - k);
    fit.cov_scale = svd.matrixV() * sv.cwiseInverse().asDiagonal() * svd.matrixU().transpose();
    fit.cov_scale = 0.5 * (fit.cov_scale + fit.cov_scale.transpose()).eval();
    return fit;
}

}  // namespace detail

double kappa_liml(const IVDataset& data) {
    data.validate();
    ProjectionPair pz(data.Z);
    return 1.0 + detail::liml_lambda_min(data.y, data.S(), pz);
}

KClassFit kclass(const IVDataset& data, double kappa) {
    data.validate();
    ProjectionPair pz(data.Z);
    return detail::kclass_fit(data.y, data.S(), pz, data.k(), kappa);
}

KClassFit fuller(const IVDataset& data, double a) {
    if (a < 0.0) throw ConfigError("fuller: a must be nonnegative");
    const Eigen::Index n = data.n();
    const Eigen::Index k = data.k();
    if (n <= k) throw ConfigError("fuller: requires n > k");
    return kclass(data, kappa_liml(data) - a / static_cast<double>(n - k));
}

}  // namespace ivinfer
