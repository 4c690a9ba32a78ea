#pragma once

#include <Eigen/Dense>
#include <random>

#include "ivinfer/dataset.hpp"

namespace testutil {

inline Eigen::MatrixXd randn(std::mt19937_64& rng, Eigen::Index rows,
                             Eigen::Index cols) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
    return m;
}

inline Eigen::VectorXd randn_vec(std::mt19937_64& rng, Eigen::Index n) {
    return randn(rng, n, 1).col(0);
}

// Random identified instance y = X 1 + W 1 + eps with first stage of the given
// strength (per-column norm of the coefficient block).
inline ivinfer::IVDataset random_instance(std::mt19937_64& rng, Eigen::Index n,
                                          Eigen::Index k, Eigen::Index mx,
                                          Eigen::Index mw,
                                          double strength = 1.0) {
    ivinfer::IVDataset d;
    d.Z = randn(rng, n, k);
    const Eigen::MatrixXd pi = randn(rng, k, mx + mw) * strength;
    const Eigen::MatrixXd noise = randn(rng, n, mx + mw);
    const Eigen::MatrixXd S = d.Z * pi + noise;
    d.X = S.leftCols(mx);
    d.W = S.rightCols(mw);
    d.y = S * Eigen::VectorXd::Ones(mx + mw) + randn_vec(rng, n);
    return d;
}

// Dense projection oracle A (A'A)^{-1} A' v for a full-column-rank basis.
inline Eigen::MatrixXd dense_proj(const Eigen::MatrixXd& basis,
                                  const Eigen::MatrixXd& v) {
    return basis *
           (basis.transpose() * basis).ldlt().solve(basis.transpose() * v);
}

// AR-type projection quotient (n - k) u' P_Z u / u' M_Z u.
inline double scaled_quotient(const Eigen::VectorXd& u,
                              const ivinfer::ProjectionPair& pz, Eigen::Index k) {
    const double num = pz.proj(u).squaredNorm();
    const double den = u.squaredNorm() - num;
    return static_cast<double>(u.size() - k) * num / den;
}

}  // namespace testutil
