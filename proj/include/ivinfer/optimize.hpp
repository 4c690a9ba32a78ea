#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "ivinfer/errors.hpp"

namespace ivinfer {

using Objective = std::function<double(const Eigen::VectorXd&)>;

// One multistart run and its outcome.
struct StartReport {
    Eigen::VectorXd start;
    Eigen::VectorXd argmin;
    double value = 0.0;
    bool converged = false;
    bool skipped = false;  // objective non-finite at the start point
    int iterations = 0;
};

struct MinimizeReport {
    Eigen::VectorXd argmin;
    double value = 0.0;
    std::vector<StartReport> starts;
};

// Quasi-Newton (BFGS) minimization with a backtracking Armijo line search and
// central finite-difference gradients (step 1e-6 * (1 + |x_i|)). Convergence
// when the gradient infinity-norm drops below tol * (1 + |value|); capped at
// max_iter iterations, returning the best point seen either way.
StartReport minimize_bfgs(const Objective& objective, const Eigen::VectorXd& start,
                          double tol = 1e-8, int max_iter = 500);

// Runs minimize_bfgs from each start and returns the best terminal value.
// Starts where the objective is non-finite are skipped (flagged in the report);
// if every start is skipped a NumericalError is thrown.
MinimizeReport minimize_multistart(const Objective& objective,
                                   const std::vector<Eigen::VectorXd>& starts,
                                   double tol = 1e-8, int max_iter = 500);

}  // namespace ivinfer
