#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ivinfer/dataset.hpp"
#include "ivinfer/tests.hpp"

namespace ivinfer {

// Simulation designs: one endogenous covariate of interest, one endogenous
// nuisance, jointly Gaussian noise (eps, V_X, V_W) with covariance omega.
struct DGPSpec {
    enum class Family { guggenberger, kleibergen };
    Family family = Family::guggenberger;
    int n = 1000;
    int k = 5;
    Eigen::Matrix3d omega;       // Cov(eps, V_X, V_W)
    double pi_x_norm = 100.0;    // sqrt(n) ||Pi_X||
    double pi_w_norm = 1.0;      // sqrt(n) ||Pi_W||
    double pi_inner = 95.0;      // n <Pi_X, Pi_W>
    double lambda1 = 0.0;        // kleibergen family only
    double lambda2 = 0.0;
    double tau = 0.0;
    double beta_true = 0.0;
    double gamma_true = 0.0;

    // The weak-nuisance benchmark design: n = 1000, k = 5,
    // omega = [[1, 0, 0.95], [0, 1, 0.3], [0.95, 0.3, 1]], norms (100, 1, 95).
    static DGPSpec guggenberger_default();
    // Its strong-nuisance power variant: pi_w_norm = 10, pi_inner = 950.
    static DGPSpec guggenberger_power();
};

// Tests the simulation harness can exercise.
enum class SimTest { ar, lm, lm_plugin, lr, clr, wald_tsls, wald_liml };
SimTest sim_test_from_string(const std::string& name);
std::string to_string(SimTest test);

// Deterministic per-replication stream: identical (seed, rep) gives an
// identical generator regardless of how replications are scheduled.
std::mt19937_64 replication_rng(std::uint64_t seed, std::uint64_t rep);

// Draws first-stage coefficient vectors with exact norms and inner product:
// sqrt(n) ||Pi_X|| = pi_x_norm, sqrt(n) ||Pi_W|| = pi_w_norm,
// n <Pi_X, Pi_W> = pi_inner. Directions are uniform on the sphere.
std::pair<Eigen::VectorXd, Eigen::VectorXd> sample_pi(int k, double pi_x_norm,
                                                      double pi_w_norm,
                                                      double pi_inner, int n,
                                                      std::mt19937_64& rng);

// One simulated dataset from the family selected in the DGPSpec.
IVDataset draw_dataset(const DGPSpec& spec, std::mt19937_64& rng);
IVDataset draw_guggenberger(const DGPSpec& spec, std::mt19937_64& rng);
IVDataset draw_kleibergen(const DGPSpec& spec, std::mt19937_64& rng);

struct SizeResult {
    double rate = 0.0;       // fraction of successful replications with p < alpha
    double mc_stderr = 0.0;  // sqrt(rate (1 - rate) / successful)
    int reps = 0;
    int failures = 0;        // replications where the test threw, excluded from rate
};

// Rejection rate of the test at the true beta.
SizeResult empirical_size(SimTest test, const DGPSpec& spec, int reps,
                          double alpha, std::uint64_t seed);

struct PowerPoint {
    double beta = 0.0;  // the tested null value
    double rate = 0.0;
    double mc_stderr = 0.0;
    int failures = 0;
};

// Rejection rate of H0: beta = b for each b in beta_grid; the data are drawn
// at beta_true, so the curve's value at beta_true is the empirical size.
std::vector<PowerPoint> power_curve(SimTest test, const DGPSpec& spec,
                                    const std::vector<double>& beta_grid,
                                    int reps, double alpha, std::uint64_t seed);

}  // namespace ivinfer
