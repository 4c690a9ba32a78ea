#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "helpers.hpp"
#include "ivinfer/montecarlo.hpp"
#include "ivinfer/optimize.hpp"
#include "ivinfer/tests.hpp"

using namespace ivinfer;

namespace {

Eigen::VectorXd vec1(double x) {
    Eigen::VectorXd v(1);
    v(0) = x;
    return v;
}

}  // namespace

TEST_CASE("quadratic objective from two starts") {
    const Objective f = [](const Eigen::VectorXd& g) {
        return (g(0) - 3.0) * (g(0) - 3.0);
    };
    const MinimizeReport report = minimize_multistart(f, {vec1(0.0), vec1(10.0)});
    CHECK(report.argmin(0) == doctest::Approx(3.0).epsilon(1e-6));
    CHECK(report.value < 1e-10);
    CHECK(report.starts.size() == 2);
    for (const StartReport& run : report.starts) {
        CHECK(run.converged);
        CHECK_FALSE(run.skipped);
    }
}

TEST_CASE("Rosenbrock from the classic start") {
    const Objective f = [](const Eigen::VectorXd& v) {
        const double x = v(0), y = v(1);
        return 100.0 * (y - x * x) * (y - x * x) + (1.0 - x) * (1.0 - x);
    };
    Eigen::VectorXd start(2);
    start << -1.2, 1.0;
    const MinimizeReport report = minimize_multistart(f, {start});
    CHECK(report.value < 1e-8);
    CHECK(report.argmin(0) == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(report.argmin(1) == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("best-of-starts contract") {
    // A double-well picks the better basin among the starts.
    const Objective f = [](const Eigen::VectorXd& v) {
        const double x = v(0);
        return (x * x - 1.0) * (x * x - 1.0) + 0.1 * x;  // deeper well near -1
    };
    const MinimizeReport report =
        minimize_multistart(f, {vec1(0.9), vec1(-0.9), vec1(4.0)});
    CHECK(report.value <= f(vec1(0.9)) + 1e-12);
    CHECK(report.value <= f(vec1(-0.9)) + 1e-12);
    CHECK(report.value <= f(vec1(4.0)) + 1e-12);
    CHECK(report.argmin(0) < 0.0);  // the global well
    double best = std::numeric_limits<double>::infinity();
    for (const StartReport& run : report.starts)
        if (!run.skipped) best = std::min(best, run.value);
    CHECK(report.value == doctest::Approx(best));
}

TEST_CASE("non-finite starts are skipped; all-skipped is an error") {
    const Objective f = [](const Eigen::VectorXd& v) {
        if (v(0) < 0.0) return std::numeric_limits<double>::quiet_NaN();
        return (v(0) - 2.0) * (v(0) - 2.0);
    };
    const MinimizeReport report = minimize_multistart(f, {vec1(-1.0), vec1(5.0)});
    CHECK(report.starts[0].skipped);
    CHECK_FALSE(report.starts[1].skipped);
    CHECK(report.value < 1e-10);

    const Objective all_bad = [](const Eigen::VectorXd&) {
        return std::numeric_limits<double>::quiet_NaN();
    };
    CHECK_THROWS_AS(minimize_multistart(all_bad, {vec1(0.0)}), NumericalError);
    CHECK_THROWS_AS(minimize_multistart(f, {}), ConfigError);
}

TEST_CASE("determinism: identical inputs produce identical outputs") {
    const Objective f = [](const Eigen::VectorXd& v) {
        return std::sin(3.0 * v(0)) + 0.1 * v(0) * v(0);
    };
    const MinimizeReport a = minimize_multistart(f, {vec1(1.0), vec1(-2.0)});
    const MinimizeReport b = minimize_multistart(f, {vec1(1.0), vec1(-2.0)});
    CHECK(a.value == b.value);
    CHECK(a.argmin(0) == b.argmin(0));
}

TEST_CASE("subvector LM objective: minimized value beats plug-in and a grid scan") {
    const DGPSpec spec = DGPSpec::guggenberger_default();
    std::mt19937_64 rng = replication_rng(12345, 0);
    const IVDataset data = draw_dataset(spec, rng);
    const Eigen::VectorXd beta0 = Eigen::VectorXd::Zero(1);

    const double minimized = lm_test(data, beta0).statistic;
    const double plugin = lm_test_plugin(data, beta0).statistic;
    CHECK(minimized <= plugin + 1e-10);

    // 10^4-point 1-D scan over a wide nuisance window (mw = 1).
    const ProjectionPair pz(data.Z);
    const Eigen::VectorXd r0 = data.y - data.X * beta0;
    const detail::LMObjective objective(r0, data.X, data.W, pz, data.k());
    double grid_min = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 10000; ++i) {
        const double gamma = -20.0 + 40.0 * i / 9999.0;
        grid_min = std::min(grid_min, objective(vec1(gamma)));
    }
    CHECK(minimized <= grid_min + 1e-4);
    CHECK(std::abs(minimized - grid_min) < 1e-4);
}
