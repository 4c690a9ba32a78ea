#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "ivinfer/dataset.hpp"
#include "ivinfer/tests.hpp"

namespace ivinfer {

// A confidence region {beta : (beta - center)' A (beta - center) <= rhs},
// or the whole parameter space when test inversion cannot exclude anything.
struct Quadric {
    enum class Kind { region, whole_space };
    Eigen::MatrixXd A;       // symmetric mx x mx
    Eigen::VectorXd center;  // the k-class point estimate for beta
    double rhs = 0.0;
    Kind kind = Kind::region;
    std::vector<std::string> notes;
};

enum class QuadricClass { bounded_nonempty, unbounded, empty, whole_space };
std::string to_string(QuadricClass c);

// Union of disjoint closed intervals on the real line; +-infinity endpoints
// encode rays. No pieces = empty set; a single (-inf, inf) piece = the line.
struct ConfidenceSet1D {
    struct Interval {
        double lo = 0.0;
        double hi = 0.0;
    };
    std::vector<Interval> pieces;
    std::vector<std::string> notes;

    bool contains(double x) const;
};

// Which closed-form inversion to perform.
struct ClosedFormTest {
    enum class Kind { wald, ar, lr };
    Kind kind = Kind::ar;
    double kappa = 1.0;  // only used for Wald

    static ClosedFormTest wald(double kappa) { return {Kind::wald, kappa}; }
    static ClosedFormTest ar() { return {Kind::ar, 0.0}; }
    static ClosedFormTest lr() { return {Kind::lr, 0.0}; }
};

// Closed-form confidence set for beta at level 1 - alpha by inverting the
// Wald (at the supplied kappa), AR, or LR test. The nuisance gamma is profiled
// out through the Schur complement of S'(Id - kappa(alpha) M_Z)S.
Quadric invert_closed_form(const IVDataset& data, ClosedFormTest test, double alpha);

// Shape classification from the eigenvalues of A and the sign of rhs.
QuadricClass classify(const Quadric& q);

struct BoundednessReport {
    bool bounded_nonempty = false;
    double j_liml = 0.0;    // (n - k)(kappa_liml - 1)
    double lambda = 0.0;    // rank statistic, r = 1
    double critical = 0.0;  // the chi-squared critical value of the inverted test
};

// Analytic boundedness/nonemptiness criterion for the AR or LR set:
// AR: J_LIML <= critical < lambda; LR: critical < lambda - J_LIML.
BoundednessReport boundedness_condition(const IVDataset& data,
                                        ClosedFormTest::Kind test, double alpha);

struct LevelMap {
    double kappa_ar = 0.0;
    double alpha_wald = 0.0;
    double alpha_lr = 0.0;
};

// Levels at which the Wald set at kappa_AR(alpha) and the LR set coincide with
// the AR set at level 1 - alpha. Requires the AR set to be bounded and nonempty.
LevelMap ar_wald_level_map(const IVDataset& data, double alpha);

// Solves the scalar quadratic a (beta - b)^2 <= c (mx = 1 only).
ConfidenceSet1D project_to_interval(const Quadric& q);

// Grid inversion for tests without closed forms (mx = 1): collects maximal
// runs of grid points with p >= alpha and bisects each boundary down to width
// (hi - lo) / 1e6. Runs touching the window edge are extended to +-infinity.
ConfidenceSet1D grid_invert(const IVDataset& data, TestKind test, double alpha,
                            double lo, double hi, int points);

}  // namespace ivinfer
