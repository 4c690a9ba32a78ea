#include "ivinfer/montecarlo.hpp"

#include <cmath>

namespace ivinfer {
namespace {

std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

Eigen::VectorXd standard_normal(Eigen::Index n, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
    return v;
}

Eigen::MatrixXd standard_normal(Eigen::Index rows, Eigen::Index cols,
                                std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
    return m;
}

double run_sim_test(SimTest test, const IVDataset& data, double beta0) {
    Eigen::VectorXd b(1);
    b(0) = beta0;
    switch (test) {
        case SimTest::ar: return ar_test(data, b).p_value;
        case SimTest::lm: return lm_test(data, b).p_value;
        case SimTest::lm_plugin: return lm_test_plugin(data, b).p_value;
        case SimTest::lr: return lr_test(data, b).p_value;
        case SimTest::clr: return clr_test(data, b).p_value;
        case SimTest::wald_tsls:
            return wald_test(data, b, EstimatorSpec::tsls()).p_value;
        case SimTest::wald_liml:
            return wald_test(data, b, EstimatorSpec::liml()).p_value;
    }
    throw ConfigError("unknown simulation test");
}

}  // namespace

DGPSpec DGPSpec::guggenberger_default() {
    DGPSpec spec;
    spec.family = Family::guggenberger;
    spec.n = 1000;
    spec.k = 5;
    spec.omega << 1.0, 0.0, 0.95,
                  0.0, 1.0, 0.3,
                  0.95, 0.3, 1.0;
    spec.pi_x_norm = 100.0;
    spec.pi_w_norm = 1.0;
    spec.pi_inner = 95.0;
    return spec;
}

DGPSpec DGPSpec::guggenberger_power() {
    DGPSpec spec = guggenberger_default();
    spec.pi_w_norm = 10.0;
    spec.pi_inner = 950.0;
    return spec;
}

SimTest sim_test_from_string(const std::string& name) {
    if (name == "ar") return SimTest::ar;
    if (name == "lm") return SimTest::lm;
    if (name == "lm-plugin" || name == "lm_plugin") return SimTest::lm_plugin;
    if (name == "lr") return SimTest::lr;
    if (name == "clr") return SimTest::clr;
    if (name == "wald-tsls" || name == "wald_tsls") return SimTest::wald_tsls;
    if (name == "wald-liml" || name == "wald_liml") return SimTest::wald_liml;
    throw ConfigError("unknown simulation test '" + name + "'");
}

std::string to_string(SimTest test) {
    switch (test) {
        case SimTest::ar: return "ar";
        case SimTest::lm: return "lm";
        case SimTest::lm_plugin: return "lm-plugin";
        case SimTest::lr: return "lr";
        case SimTest::clr: return "clr";
        case SimTest::wald_tsls: return "wald-tsls";
        case SimTest::wald_liml: return "wald-liml";
    }
    return "?";
}

std::mt19937_64 replication_rng(std::uint64_t seed, std::uint64_t rep) {
    const std::uint64_t state =
        mix64(seed + 0x9E3779B97F4A7C15ULL * (rep + 1));
    return std::mt19937_64(state);
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> sample_pi(int k, double pi_x_norm,
                                                      double pi_w_norm,
                                                      double pi_inner, int n,
                                                      std::mt19937_64& rng) {
    if (k < 2)
        throw ConfigError("sample_pi: k >= 2 required to orthogonalize directions");
    if (n < 1) throw ConfigError("sample_pi: n must be positive");
    if (pi_x_norm < 0.0 || pi_w_norm < 0.0)
        throw ConfigError("sample_pi: norms must be nonnegative");

    const double prod = pi_x_norm * pi_w_norm;
    double rho = 0.0;
    if (prod == 0.0) {
        if (pi_inner != 0.0)
            throw ConfigError("sample_pi: pi_inner must be 0 when a norm is 0");
    } else {
        rho = pi_inner / prod;
        if (std::abs(rho) > 1.0 + 1e-12)
            throw ConfigError(
                "sample_pi: |pi_inner| must not exceed pi_x_norm * pi_w_norm");
        rho = std::max(-1.0, std::min(1.0, rho));
    }

    Eigen::VectorXd pi1 = standard_normal(k, rng);
    Eigen::VectorXd pi2 = standard_normal(k, rng);
    pi1.array() -= pi1.mean();
    pi2.array() -= pi2.mean();
    const Eigen::VectorXd dir_x = pi1 / pi1.norm();
    const double orth_weight = std::sqrt(std::max(0.0, 1.0 - rho * rho));
    Eigen::VectorXd dir_w = rho * dir_x;
    if (orth_weight > 0.0) {
        // De-meaned k = 2 vectors are collinear, so a second direction with
        // the requested correlation cannot be constructed.
        const Eigen::VectorXd resid = pi2 - dir_x * dir_x.dot(pi2);
        if (resid.norm() <= 1e-12 * pi2.norm())
            throw ConfigError(
                "sample_pi: degenerate orthogonalization; the de-meaned draws "
                "span a single direction (requires k >= 3 unless |rho| = 1)");
        dir_w += orth_weight * (resid / resid.norm());
    }

    const double root_n = std::sqrt(static_cast<double>(n));
    return {dir_x * (pi_x_norm / root_n), dir_w * (pi_w_norm / root_n)};
}

IVDataset draw_guggenberger(const DGPSpec& spec, std::mt19937_64& rng) {
    const Eigen::Index n = spec.n;
    const Eigen::Index k = spec.k;
    const auto [pi_x, pi_w] =
        sample_pi(spec.k, spec.pi_x_norm, spec.pi_w_norm, spec.pi_inner, spec.n, rng);

    const Eigen::MatrixXd Z = standard_normal(n, k, rng);
    Eigen::LLT<Eigen::Matrix3d> llt(spec.omega);
    if (llt.info() != Eigen::Success)
        throw ConfigError("draw_guggenberger: omega is not positive definite");
    const Eigen::MatrixXd noise =
        standard_normal(n, 3, rng) * llt.matrixL().transpose();

    IVDataset data;
    data.Z = Z;
    data.X = Z * pi_x + noise.col(1);
    data.W = Z * pi_w + noise.col(2);
    data.y = data.X * spec.beta_true + data.W * spec.gamma_true + noise.col(0);
    return data;
}

IVDataset draw_kleibergen(const DGPSpec& spec, std::mt19937_64& rng) {
    if (spec.lambda1 < 0.0 || spec.lambda2 < 0.0)
        throw ConfigError("draw_kleibergen: lambda1, lambda2 must be nonnegative");

    // Partial noise covariance of (V_X, V_W) given eps.
    const double var_eps = spec.omega(0, 0);
    if (var_eps <= 0.0)
        throw ConfigError("draw_kleibergen: Var(eps) must be positive");
    const Eigen::Matrix2d omega_vv = spec.omega.bottomRightCorner<2, 2>();
    const Eigen::Vector2d omega_ve = spec.omega.bottomLeftCorner<2, 1>();
    const Eigen::Matrix2d partial =
        omega_vv - omega_ve * omega_ve.transpose() / var_eps;

    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(partial);
    if (es.eigenvalues().minCoeff() <= 0.0)
        throw ConfigError("draw_kleibergen: partial noise covariance not positive definite");
    const Eigen::Matrix2d sqrt_partial = es.operatorSqrt();

    Eigen::Matrix2d R;
    R << std::cos(spec.tau), -std::sin(spec.tau),
         std::sin(spec.tau), std::cos(spec.tau);
    const Eigen::Matrix2d lam =
        Eigen::Vector2d(spec.lambda1, spec.lambda2).asDiagonal();
    const Eigen::Matrix2d target =
        sqrt_partial * R * lam * R.transpose() * sqrt_partial;

    const double g_xx = target(0, 0);
    const double g_ww = target(1, 1);
    if (g_xx < -1e-12 || g_ww < -1e-12)
        throw ConfigError("draw_kleibergen: implied Gram matrix not positive semidefinite");

    DGPSpec draw_spec = spec;
    draw_spec.pi_x_norm = std::sqrt(std::max(0.0, g_xx));
    draw_spec.pi_w_norm = std::sqrt(std::max(0.0, g_ww));
    draw_spec.pi_inner = target(0, 1);
    return draw_guggenberger(draw_spec, rng);
}

IVDataset draw_dataset(const DGPSpec& spec, std::mt19937_64& rng) {
    switch (spec.family) {
        case DGPSpec::Family::guggenberger: return draw_guggenberger(spec, rng);
        case DGPSpec::Family::kleibergen: return draw_kleibergen(spec, rng);
    }
    throw ConfigError("unknown DGP family");
}

SizeResult empirical_size(SimTest test, const DGPSpec& spec, int reps,
                          double alpha, std::uint64_t seed) {
    if (reps < 1) throw ConfigError("empirical_size: reps must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw ConfigError("empirical_size: alpha must lie in (0, 1)");
    SizeResult result;
    result.reps = reps;
    int rejections = 0;
    int successes = 0;
    for (int rep = 0; rep < reps; ++rep) {
        std::mt19937_64 rng =
            replication_rng(seed, static_cast<std::uint64_t>(rep));
        const IVDataset data = draw_dataset(spec, rng);
        try {
            if (run_sim_test(test, data, spec.beta_true) < alpha) ++rejections;
            ++successes;
        } catch (const NumericalError&) {
            ++result.failures;
        }
    }
    if (successes > 0) {
        result.rate = static_cast<double>(rejections) / successes;
        result.mc_stderr =
            std::sqrt(result.rate * (1.0 - result.rate) / successes);
    }
    return result;
}

std::vector<PowerPoint> power_curve(SimTest test, const DGPSpec& spec,
                                    const std::vector<double>& beta_grid,
                                    int reps, double alpha, std::uint64_t seed) {
    if (reps < 1) throw ConfigError("power_curve: reps must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw ConfigError("power_curve: alpha must lie in (0, 1)");
    std::vector<int> rejections(beta_grid.size(), 0);
    std::vector<int> successes(beta_grid.size(), 0);
    std::vector<int> failures(beta_grid.size(), 0);
    for (int rep = 0; rep < reps; ++rep) {
        std::mt19937_64 rng =
            replication_rng(seed, static_cast<std::uint64_t>(rep));
        const IVDataset data = draw_dataset(spec, rng);
        for (std::size_t i = 0; i < beta_grid.size(); ++i) {
            try {
                if (run_sim_test(test, data, beta_grid[i]) < alpha)
                    ++rejections[i];
                ++successes[i];
            } catch (const NumericalError&) {
                ++failures[i];
            }
        }
    }
    std::vector<PowerPoint> curve(beta_grid.size());
    for (std::size_t i = 0; i < beta_grid.size(); ++i) {
        curve[i].beta = beta_grid[i];
        curve[i].failures = failures[i];
        if (successes[i] > 0) {
            curve[i].rate = static_cast<double>(rejections[i]) / successes[i];
            curve[i].mc_stderr =
                std::sqrt(curve[i].rate * (1.0 - curve[i].rate) / successes[i]);
        }
    }
    return curve;
}

}  // namespace ivinfer
