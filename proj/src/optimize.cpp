#include "ivinfer/optimize.hpp"

#include <cmath>
#include <limits>

namespace ivinfer {
namespace {

Eigen::VectorXd central_gradient(const Objective& f, const Eigen::VectorXd& x) {
    const Eigen::Index d = x.size();
    Eigen::VectorXd g(d);
    Eigen::VectorXd xp = x;
    for (Eigen::Index i = 0; i < d; ++i) {
        const double h = 1e-6 * (1.0 + std::abs(x(i)));
        xp(i) = x(i) + h;
        const double fp = f(xp);
        xp(i) = x(i) - h;
        const double fm = f(xp);
        xp(i) = x(i);
        g(i) = (fp - fm) / (2.0 * h);
    }
    return g;
}

}  // namespace

StartReport minimize_bfgs(const Objective& objective, const Eigen::VectorXd& start,
                          double tol, int max_iter) {
    StartReport report;
    report.start = start;
    report.argmin = start;

    double fx = objective(start);
    if (!std::isfinite(fx)) {
        report.skipped = true;
        report.value = std::numeric_limits<double>::quiet_NaN();
        return report;
    }
    report.value = fx;

    const Eigen::Index d = start.size();
    Eigen::VectorXd x = start;
    Eigen::VectorXd g = central_gradient(objective, x);
    Eigen::MatrixXd H = Eigen::MatrixXd::Identity(d, d);  // inverse-Hessian estimate

    for (int it = 0; it < max_iter; ++it) {
        report.iterations = it;
        if (!g.allFinite()) break;
        if (g.lpNorm<Eigen::Infinity>() < tol * (1.0 + std::abs(fx))) {
            report.converged = true;
            break;
        }

        Eigen::VectorXd p = -(H * g);
        double slope = g.dot(p);
        if (!(slope < 0.0)) {  // reset a non-descent direction to steepest descent
            p = -g;
            slope = g.dot(p);
            H.setIdentity();
        }

        // Armijo backtracking line search.
        double step = 1.0;
        double fnew = std::numeric_limits<double>::quiet_NaN();
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            fnew = objective(x + step * p);
            if (std::isfinite(fnew) && fnew <= fx + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            // The smallest trial step changed f by no more than rounding
            // noise: the iterate sits at the numerical minimum even when a
            // large curvature keeps the finite-difference gradient above the
            // gradient tolerance.
            if (std::isfinite(fnew) && fnew - fx <= 1e-10 * (1.0 + std::abs(fx)))
                report.converged = true;
            break;
        }

        const Eigen::VectorXd x_new = x + step * p;
        const Eigen::VectorXd g_new = central_gradient(objective, x_new);
        const Eigen::VectorXd s = x_new - x;
        const Eigen::VectorXd yv = g_new - g;
        const double sy = s.dot(yv);
        if (std::isfinite(sy) && sy > 1e-14 * s.norm() * yv.norm()) {
            const double rho = 1.0 / sy;
            const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(d, d);
            const Eigen::MatrixXd V = I - rho * s * yv.transpose();
            H = V * H * V.transpose() + rho * s * s.transpose();
        }

        const double decrease = fx - fnew;
        x = x_new;
        fx = fnew;
        g = g_new;
        if (fx < report.value) {
            report.value = fx;
            report.argmin = x;
        }
        // Relative function-decrease stop (ftol): progress has reached the
        // floor of double precision.
        if (decrease <= 1e-13 * (1.0 + std::abs(fx))) {
            report.converged = true;
            break;
        }
    }
    return report;
}

MinimizeReport minimize_multistart(const Objective& objective,
                                   const std::vector<Eigen::VectorXd>& starts,
                                   double tol, int max_iter) {
    if (starts.empty()) throw ConfigError("minimize_multistart: no start points given");
    MinimizeReport report;
    report.value = std::numeric_limits<double>::infinity();
    for (const Eigen::VectorXd& s : starts) {
        StartReport run = minimize_bfgs(objective, s, tol, max_iter);
        if (!run.skipped && run.value < report.value) {
            report.value = run.value;
            report.argmin = run.argmin;
        }
        report.starts.push_back(std::move(run));
    }
    if (!std::isfinite(report.value))
        throw NumericalError(
            "minimize_multistart: objective non-finite at every start point");
    return report;
}

}  // namespace ivinfer
