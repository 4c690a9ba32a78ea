#pragma once

#include <Eigen/Dense>

#include "ivinfer/dataset.hpp"

namespace ivinfer {

// A fitted k-class estimate for the stacked coefficient (beta', gamma')'.
struct KClassFit {
    double kappa = 0.0;
    Eigen::VectorXd coef;      // length m = mx + mw
    double sigma2_wald = 0.0;  // ||y - S coef||^2 / (n - m)
    double sigma2_mz = 0.0;    // ||M_Z (y - S coef)||^2 / (n - k)
    Eigen::MatrixXd cov_scale; // (S' (Id - kappa M_Z) S)^{-1}
};

namespace detail {

// Eigenvalues (ascending) of the symmetric-definite pencil A v = mu B v.
// Tries a Cholesky whitening of B first and falls back to a pseudo-inverse route;
// throws NumericalError if B is rank deficient at the kRankTol threshold.
Eigen::VectorXd generalized_eigenvalues(Eigen::MatrixXd A, Eigen::MatrixXd B,
                                        const char* context);

// As generalized_eigenvalues, but tolerant of a positive-semidefinite B:
// the pencil is restricted to the range of B and directions in its null space
// (where the quotient diverges) are reported as +infinity. Throws only when B
// vanishes entirely.
Eigen::VectorXd generalized_eigenvalues_reduced(Eigen::MatrixXd A,
                                                Eigen::MatrixXd B,
                                                const char* context);

// Eigenvalues (ascending) of (M' M_Z M)^{-1} M' P_Z M for the columns of M.
Eigen::VectorXd projection_quotient_eigenvalues(const Eigen::MatrixXd& M,
                                                const ProjectionPair& pz,
                                                const char* context);

// As above but via the range-restricted pencil, so columns of M lying exactly
// in the instrument span contribute +infinity instead of an error.
Eigen::VectorXd projection_quotient_eigenvalues_reduced(const Eigen::MatrixXd& M,
                                                        const ProjectionPair& pz,
                                                        const char* context);

// lambda_min of ([y S]' M_Z [y S])^{-1} [y S]' P_Z [y S]; kappa_liml = 1 + this.
double liml_lambda_min(const Eigen::VectorXd& y, const Eigen::MatrixXd& S,
                       const ProjectionPair& pz);

// k-class coefficient on an explicit (y, S, Z-projector) triple.
KClassFit kclass_fit(const Eigen::VectorXd& y, const Eigen::MatrixXd& S,
                     const ProjectionPair& pz, Eigen::Index k, double kappa);

// Largest kappa for which S'(kappa P_Z + (1 - kappa) Id)S stays positive definite.
double kappa_convexity_threshold(const Eigen::MatrixXd& S, const ProjectionPair& pz);

}  // namespace detail

// The LIML k-class parameter, 1 + lambda_min of the [y X W] generalized eigenproblem.
double kappa_liml(const IVDataset& data);

// k-class estimator (S'(Id - kappa M_Z)S)^{-1} S'(Id - kappa M_Z) y with S = [X W].
KClassFit kclass(const IVDataset& data, double kappa);

// Fuller(a) estimator: kclass at kappa_liml - a / (n - k).
KClassFit fuller(const IVDataset& data, double a);

}  // namespace ivinfer
