#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>

#include "ivinfer/errors.hpp"

namespace ivinfer {

// Relative singular-value threshold below which directions are treated as zero.
inline constexpr double kRankTol = 1e-10;

// Column roles for CSV ingestion.
enum class Role {
    outcome,               // y
    endogenous,            // X, endogenous covariates of interest
    endogenous_nuisance,   // W, endogenous covariates not of interest
    instrument,            // Z
    exogenous,             // D, exogenous covariates of interest
    exogenous_nuisance,    // C, exogenous covariates not of interest
};

// Observation matrices of the instrumental-variables model
//   y = X beta + W gamma + C alpha + D delta + eps,
//   [X W] = Z Pi + C Pi_C + D Pi_D + V.
// All blocks share the row count n; blocks other than y and Z may be empty.
struct IVDataset {
    Eigen::VectorXd y;
    Eigen::MatrixXd X;  // n x mx
    Eigen::MatrixXd W;  // n x mw
    Eigen::MatrixXd Z;  // n x k
    Eigen::MatrixXd C;  // n x mc
    Eigen::MatrixXd D;  // n x md
    bool intercept_flag = false;

    Eigen::Index n() const { return y.size(); }
    Eigen::Index k() const { return Z.cols(); }
    Eigen::Index mx() const { return X.cols(); }
    Eigen::Index mw() const { return W.cols(); }
    Eigen::Index mc() const { return C.cols(); }
    Eigen::Index md() const { return D.cols(); }
    Eigen::Index m() const { return mx() + mw(); }

    // The stacked endogenous block S = [X W].
    Eigen::MatrixXd S() const;

    // Throws ConfigError if row counts disagree or the order condition k >= m fails.
    void validate() const;
};

// Orthogonal projector onto span(basis) via a rank-revealing QR factorization.
// Never forms (basis' basis)^{-1}; rank-deficient bases get pseudoinverse semantics.
struct ProjectionPair {
    Eigen::MatrixXd basis;  // as supplied
    Eigen::MatrixXd Q;      // orthonormal basis of span(basis), n x rank
    Eigen::Index rank = 0;

    ProjectionPair() = default;
    explicit ProjectionPair(const Eigen::MatrixXd& basis_in);

    Eigen::MatrixXd proj(const Eigen::MatrixXd& v) const;
    Eigen::MatrixXd annih(const Eigen::MatrixXd& v) const;
};

// One-shot helpers.
Eigen::MatrixXd proj(const Eigen::MatrixXd& basis, const Eigen::MatrixXd& v);
Eigen::MatrixXd annih(const Eigen::MatrixXd& basis, const Eigen::MatrixXd& v);

struct LoadReport {
    IVDataset data;
    int dropped_rows = 0;  // rows with empty cells in role columns (listwise deletion)
};

// Reads a comma-separated file with a header row and assembles the dataset from the
// given column-name -> role map. Rows with an empty cell in any role column are dropped
// (count reported); a non-empty cell that fails to parse as a number is a hard error.
LoadReport load_csv(const std::string& path, const std::map<std::string, Role>& roles,
                    bool intercept);

// Replaces y, X, W, Z, D by their residuals after regressing out C (plus a constant
// column when intercept_flag is set) and drops C. Returns the input unchanged when
// there is nothing to regress out.
IVDataset residualize(const IVDataset& data);

}  // namespace ivinfer
