#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "ivinfer/dataset.hpp"
#include "ivinfer/kclass.hpp"

namespace ivinfer {

// Reference distribution of a test statistic.
struct DistDescriptor {
    enum class Kind { chi2, gamma_cvf, gamma_cvf_plus_chi2 };
    Kind kind = Kind::chi2;
    int df = 1;           // chi2 degrees of freedom (0 = point mass at zero)
    int q = 1;            // gamma_cvf total degrees
    int p = 1;            // gamma_cvf partial degrees
    double lambda = 0.0;  // gamma_cvf conditioning statistic
    int md = 0;           // extra chi2 degrees for gamma_cvf_plus_chi2

    static DistDescriptor chi2_dist(int df);
    static DistDescriptor gamma_dist(int q, int p, double lambda);
    static DistDescriptor gamma_plus_chi2_dist(int q, int p, double lambda, int md);

    double cdf(double x) const;
    std::string name() const;  // e.g. "chi2(3)", "gamma_cvf(5, 2, 1.25)"
};

struct TestResult {
    double statistic = 0.0;
    DistDescriptor dist;
    double p_value = 1.0;
    std::map<std::string, double> diagnostics;
    std::vector<std::string> notes;
};

// Which k-class fit a Wald test centers on.
struct EstimatorSpec {
    enum class Kind { tsls, liml, kappa };
    Kind kind = Kind::tsls;
    double kappa_value = 1.0;

    static EstimatorSpec tsls() { return {Kind::tsls, 1.0}; }
    static EstimatorSpec liml() { return {Kind::liml, 0.0}; }
    static EstimatorSpec with_kappa(double k) { return {Kind::kappa, k}; }
};

enum class TestKind { wald, ar, lm, lm_plugin, lr, clr };

TestKind test_kind_from_string(const std::string& name);
std::string to_string(TestKind kind);

// Subvector Wald test of beta = beta0 centered on the chosen k-class fit.
TestResult wald_test(const IVDataset& data, const Eigen::VectorXd& beta0,
                     EstimatorSpec estimator = EstimatorSpec::tsls());

// Subvector Anderson-Rubin test; the nuisance gamma is profiled out in closed
// form through the LIML eigenproblem of (y - X beta0) on W.
TestResult ar_test(const IVDataset& data, const Eigen::VectorXd& beta0);

// Subvector Lagrange multiplier test with the nuisance gamma minimized out
// numerically (two starts: inner-LIML gamma and zero). With mw = 0 the
// minimization is skipped and the classic score statistic is returned.
TestResult lm_test(const IVDataset& data, const Eigen::VectorXd& beta0);

// LM variant with gamma fixed at the inner LIML estimate instead of minimized;
// provided only to reproduce its documented size inflation.
TestResult lm_test_plugin(const IVDataset& data, const Eigen::VectorXd& beta0);

// (Subvector) likelihood-ratio test; chi2(mx) calibration.
TestResult lr_test(const IVDataset& data, const Eigen::VectorXd& beta0);

// Conditional likelihood-ratio test: the LR statistic calibrated against the
// Gamma(k - mw - mx, mx, s_min) law conditional on the strength statistic s_min.
TestResult clr_test(const IVDataset& data, const Eigen::VectorXd& beta0);

// Rank test of rank(Pi) <= m - r for the first stage: sum of the r smallest
// eigenvalues of (n - k) (S' M_Z S)^{-1} S' P_Z S against chi2(r (k - m + r)).
TestResult rank_test(const IVDataset& data, int r);

// Overidentification statistics: J = k AR(beta_tsls), J_LIML = (n-k)(kappa_liml - 1),
// both against chi2(k - m). Just-identified models return 0 with p = 1.
TestResult j_statistic(const IVDataset& data);
TestResult j_liml(const IVDataset& data);

// Joint test of (beta, delta) = (beta0, delta0) where delta is the coefficient
// of the exogenous covariates of interest D. D is appended to both the
// covariates of interest and the instruments; CLR (mw = 0 only) is calibrated
// against the independent sum chi2(md) + Gamma.
TestResult test_with_exogenous_of_interest(const IVDataset& data,
                                           const Eigen::VectorXd& beta0,
                                           const Eigen::VectorXd& delta0,
                                           TestKind test);

// Dispatch helper used by the CLI and the confidence-set machinery.
TestResult run_test(const IVDataset& data, const Eigen::VectorXd& beta0,
                    TestKind kind, EstimatorSpec estimator = EstimatorSpec::tsls());

namespace detail {

// Profiled AR ingredients for r0 = y - X beta0: the scaled minimum
// (n - k) lambda_min and the minimizing gamma (empty when mw = 0).
struct InnerAR {
    double stat = 0.0;           // (n - k) lambda_min
    Eigen::VectorXd gamma;       // argmin over the nuisance
};
InnerAR inner_ar(const Eigen::VectorXd& r0, const Eigen::MatrixXd& W,
                 const ProjectionPair& pz, Eigen::Index k);

// The subvector LM objective (n - k) r' P_{P_Z S~} r / (r' M_Z r) as a function
// of gamma, with all Gram matrices precomputed for cheap repeated evaluation.
class LMObjective {
  public:
    LMObjective(const Eigen::VectorXd& r0, const Eigen::MatrixXd& X,
                const Eigen::MatrixXd& W, const ProjectionPair& pz, Eigen::Index k);
    double operator()(const Eigen::VectorXd& gamma) const;

  private:
    double nk_;
    Eigen::MatrixXd U_;    // Q_Z' [X W]
    Eigen::MatrixXd uW_;   // Q_Z' W
    Eigen::VectorXd u0_;   // Q_Z' r0
    Eigen::VectorXd r0tS_;  // [X W]' r0
    Eigen::MatrixXd WtS_;   // W' [X W]
    Eigen::VectorXd Wtr0_;
    Eigen::MatrixXd WtW_;
    double r0tr0_;
};

}  // namespace detail

}  // namespace ivinfer
