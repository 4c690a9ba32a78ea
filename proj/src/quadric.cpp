#include "ivinfer/quadric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ivinfer/distributions.hpp"
#include "ivinfer/kclass.hpp"

namespace ivinfer {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

IVDataset prepare(const IVDataset& data, const char* op) {
    IVDataset d = residualize(data);
    if (d.md() > 0)
        throw ConfigError(std::string(op) +
                          ": dataset has exogenous covariates of interest; "
                          "confidence sets cover the endogenous beta only");
    d.validate();
    if (d.mx() < 1)
        throw ConfigError(std::string(op) + ": no covariates of interest");
    return d;
}

// Unguarded k-class solve and the associated pieces of the quadric:
// the Schur complement A of S'(Id - kappa M_Z)S, the full coefficient, and
// the objective value u'(Id - kappa M_Z)u at the minimizer.
struct QuadricPieces {
    Eigen::MatrixXd A;
    Eigen::VectorXd coef;
    double objective = 0.0;   // min_b (y - Sb)'(Id - kappa M_Z)(y - Sb)
    double sigma2_wald = 0.0;
};

QuadricPieces quadric_pieces(const IVDataset& d, const ProjectionPair& pz,
                             double kappa) {
    const Eigen::MatrixXd S = d.S();
    const Eigen::Index mx = d.mx();
    const Eigen::Index mw = d.mw();

    Eigen::MatrixXd G = S.transpose() * S - kappa * (S.transpose() * pz.annih(S));
    G = 0.5 * (G + G.transpose()).eval();
    const Eigen::VectorXd b =
        S.transpose() * d.y - kappa * (S.transpose() * pz.annih(d.y));

    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(G);
    cod.setThreshold(kRankTol);

    QuadricPieces out;
    out.coef = cod.solve(b);

    if (mw == 0) {
        out.A = G;
    } else {
        const Eigen::MatrixXd Axx = G.topLeftCorner(mx, mx);
        const Eigen::MatrixXd Axw = G.topRightCorner(mx, mw);
        const Eigen::MatrixXd Aww = G.bottomRightCorner(mw, mw);
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> codw(Aww);
        codw.setThreshold(kRankTol);
        out.A = Axx - Axw * codw.solve(Axw.transpose());
        out.A = 0.5 * (out.A + out.A.transpose()).eval();
    }

    const Eigen::VectorXd u = d.y - S * out.coef;
    out.objective = u.squaredNorm() - kappa * pz.annih(u).squaredNorm();
    out.sigma2_wald = u.squaredNorm() / static_cast<double>(d.n() - d.m());
    return out;
}

double kappa_max_nuisance(const IVDataset& d, const ProjectionPair& pz) {
    if (d.mw() == 0) return kInf;
    return 1.0 +
           detail::projection_quotient_eigenvalues(d.W, pz, "invert_closed_form")(0);
}

double round_rhs(double rhs) { return (rhs < 0.0 && rhs > -1e-10) ? 0.0 : rhs; }

}  // namespace

std::string to_string(QuadricClass c) {
    switch (c) {
        case QuadricClass::bounded_nonempty: return "bounded_nonempty";
        case QuadricClass::unbounded: return "unbounded";
        case QuadricClass::empty: return "empty";
        case QuadricClass::whole_space: return "whole_space";
    }
    return "?";
}

bool ConfidenceSet1D::contains(double x) const {
    for (const Interval& piece : pieces)
        if (x >= piece.lo && x <= piece.hi) return true;
    return false;
}

Quadric invert_closed_form(const IVDataset& data, ClosedFormTest test, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw ConfigError("invert_closed_form: alpha must lie in (0, 1)");
    const IVDataset d = prepare(data, "invert_closed_form");
    const ProjectionPair pz(d.Z);
    const double nk = static_cast<double>(d.n() - d.k());

    double kappa;
    switch (test.kind) {
        case ClosedFormTest::Kind::wald:
            kappa = test.kappa;
            break;
        case ClosedFormTest::Kind::ar:
            kappa = 1.0 + chi2_quantile(1.0 - alpha,
                                        static_cast<double>(d.k() - d.mw())) /
                              nk;
            break;
        case ClosedFormTest::Kind::lr:
            kappa = 1.0 + detail::liml_lambda_min(d.y, d.S(), pz) +
                    chi2_quantile(1.0 - alpha, static_cast<double>(d.mx())) / nk;
            break;
    }

    Quadric q;
    if (test.kind != ClosedFormTest::Kind::wald) {
        const double kmax = kappa_max_nuisance(d, pz);
        if (kappa > kmax) {
            q.kind = Quadric::Kind::whole_space;
            q.A = Eigen::MatrixXd::Zero(d.mx(), d.mx());
            q.center = Eigen::VectorXd::Zero(d.mx());
            q.rhs = kInf;
            return q;
        }
        if (kappa == kmax) {
            q.kind = Quadric::Kind::whole_space;
            q.A = Eigen::MatrixXd::Zero(d.mx(), d.mx());
            q.center = Eigen::VectorXd::Zero(d.mx());
            q.rhs = kInf;
            q.notes.push_back(
                "boundary degeneracy: kappa equals kappa_max exactly");
            return q;
        }
    }

    const QuadricPieces pieces = quadric_pieces(d, pz, kappa);
    q.A = pieces.A;
    q.center = pieces.coef.head(d.mx());
    if (test.kind == ClosedFormTest::Kind::wald) {
        q.rhs = pieces.sigma2_wald *
                chi2_quantile(1.0 - alpha, static_cast<double>(d.mx()));
    } else {
        q.rhs = -pieces.objective;
    }
    q.rhs = round_rhs(q.rhs);
    return q;
}

QuadricClass classify(const Quadric& q) {
    if (q.kind == Quadric::Kind::whole_space) return QuadricClass::whole_space;
    const Eigen::MatrixXd A = 0.5 * (q.A + q.A.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
    const Eigen::VectorXd eigs = es.eigenvalues();
    const double scale = std::max(eigs.cwiseAbs().maxCoeff(), 1e-300);
    const double rhs = round_rhs(q.rhs);
    // A flat or negative direction always escapes to infinity (such a set is
    // never empty: points far along the direction satisfy the inequality).
    if (eigs(0) <= kRankTol * scale) return QuadricClass::unbounded;
    return rhs >= 0.0 ? QuadricClass::bounded_nonempty : QuadricClass::empty;
}

BoundednessReport boundedness_condition(const IVDataset& data,
                                        ClosedFormTest::Kind test, double alpha) {
    if (test == ClosedFormTest::Kind::wald)
        throw ConfigError("boundedness_condition: applies to ar and lr only");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw ConfigError("boundedness_condition: alpha must lie in (0, 1)");
    const IVDataset d = prepare(data, "boundedness_condition");
    const ProjectionPair pz(d.Z);
    const double nk = static_cast<double>(d.n() - d.k());

    BoundednessReport report;
    report.j_liml = nk * detail::liml_lambda_min(d.y, d.S(), pz);
    // Same eigensolver path as rank_test so the two values agree bit for bit.
    report.lambda =
        nk * detail::projection_quotient_eigenvalues_reduced(
                 d.S(), pz, "boundedness_condition")(0);
    if (test == ClosedFormTest::Kind::ar) {
        report.critical =
            chi2_quantile(1.0 - alpha, static_cast<double>(d.k() - d.mw()));
        report.bounded_nonempty =
            report.j_liml <= report.critical && report.critical < report.lambda;
    } else {
        report.critical = chi2_quantile(1.0 - alpha, static_cast<double>(d.mx()));
        report.bounded_nonempty = report.critical < report.lambda - report.j_liml;
    }
    return report;
}

LevelMap ar_wald_level_map(const IVDataset& data, double alpha) {
    const IVDataset d = prepare(data, "ar_wald_level_map");
    const BoundednessReport cond =
        boundedness_condition(d, ClosedFormTest::Kind::ar, alpha);
    if (cond.j_liml > cond.critical)
        throw ConfigError("ar_wald_level_map: requires J_LIML <= critical, got " +
                          std::to_string(cond.j_liml) + " > " +
                          std::to_string(cond.critical));
    if (cond.critical >= cond.lambda)
        throw ConfigError("ar_wald_level_map: requires critical < lambda, got " +
                          std::to_string(cond.critical) + " >= " +
                          std::to_string(cond.lambda));

    const ProjectionPair pz(d.Z);
    const double nk = static_cast<double>(d.n() - d.k());
    LevelMap map;
    map.kappa_ar = 1.0 + cond.critical / nk;
    const QuadricPieces pieces = quadric_pieces(d, pz, map.kappa_ar);
    // s(kappa) = min_b (y - Sb)'(Id - kappa M_Z)(y - Sb) is nonpositive here.
    map.alpha_wald = 1.0 - chi2_cdf(-pieces.objective / pieces.sigma2_wald,
                                    static_cast<double>(d.mx()));
    map.alpha_lr = 1.0 - chi2_cdf(cond.critical - cond.j_liml,
                                  static_cast<double>(d.mx()));
    return map;
}

ConfidenceSet1D project_to_interval(const Quadric& q) {
    ConfidenceSet1D set;
    set.notes = q.notes;
    if (q.kind == Quadric::Kind::whole_space) {
        set.pieces.push_back({-kInf, kInf});
        return set;
    }
    if (q.A.rows() != 1 || q.A.cols() != 1)
        throw ConfigError("project_to_interval: requires a 1-dimensional quadric");
    const double a = q.A(0, 0);
    const double b = q.center(0);
    const double c = round_rhs(q.rhs);
    if (a == 0.0) {
        if (c >= 0.0) set.pieces.push_back({-kInf, kInf});
        return set;
    }
    if (a > 0.0) {
        if (c >= 0.0) {
            const double r = std::sqrt(c / a);
            set.pieces.push_back({b - r, b + r});
        }
        return set;
    }
    // a < 0: the set is a complement of an open interval, or the whole line.
    if (c >= 0.0) {
        set.pieces.push_back({-kInf, kInf});
    } else {
        const double r = std::sqrt(c / a);
        set.pieces.push_back({-kInf, b - r});
        set.pieces.push_back({b + r, kInf});
    }
    return set;
}

ConfidenceSet1D grid_invert(const IVDataset& data, TestKind test, double alpha,
                            double lo, double hi, int points) {
    if (points < 3) throw ConfigError("grid_invert: points must be >= 3");
    if (!(lo < hi)) throw ConfigError("grid_invert: requires lo < hi");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw ConfigError("grid_invert: alpha must lie in (0, 1)");
    const IVDataset d = prepare(data, "grid_invert");
    if (d.mx() != 1)
        throw ConfigError("grid_invert: requires mx = 1");

    ConfidenceSet1D set;
    const auto accepted = [&](double beta) -> bool {
        Eigen::VectorXd b(1);
        b(0) = beta;
        try {
            return run_test(d, b, test).p_value >= alpha;
        } catch (const NumericalError&) {
            return false;  // treated as rejected
        }
    };

    std::vector<double> grid(points);
    std::vector<char> accept(points);
    bool any_failure = false;
    for (int i = 0; i < points; ++i) {
        grid[i] = lo + (hi - lo) * i / (points - 1);
        Eigen::VectorXd b(1);
        b(0) = grid[i];
        try {
            accept[i] = run_test(d, b, test).p_value >= alpha ? 1 : 0;
        } catch (const NumericalError&) {
            accept[i] = 0;
            any_failure = true;
        }
    }
    if (any_failure)
        set.notes.push_back("test evaluation failed at some grid points; "
                            "those points were treated as rejected");

    const double width_tol = (hi - lo) / 1e6;
    const auto refine = [&](double in, double out) {
        // `in` is accepted, `out` rejected; return the acceptance boundary.
        while (std::abs(out - in) > width_tol) {
            const double mid = 0.5 * (in + out);
            (accepted(mid) ? in : out) = mid;
        }
        return in;
    };

    int i = 0;
    while (i < points) {
        if (!accept[i]) {
            ++i;
            continue;
        }
        int j = i;
        while (j + 1 < points && accept[j + 1]) ++j;
        ConfidenceSet1D::Interval piece;
        if (i == 0) {
            piece.lo = -kInf;
            set.notes.push_back("unbounded at window edge");
        } else {
            piece.lo = refine(grid[i], grid[i - 1]);
        }
        if (j == points - 1) {
            piece.hi = kInf;
            set.notes.push_back("unbounded at window edge");
        } else {
            piece.hi = refine(grid[j], grid[j + 1]);
        }
        set.pieces.push_back(piece);
        i = j + 1;
    }
    return set;
}

}  // namespace ivinfer
