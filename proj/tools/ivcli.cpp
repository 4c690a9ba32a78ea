// ivcli: command-line front end for weak-instrument-robust inference in
// linear instrumental-variables regression.
#include <cmath>
#include <cstdint>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ivinfer/dataset.hpp"
#include "ivinfer/distributions.hpp"
#include "ivinfer/kclass.hpp"
#include "ivinfer/montecarlo.hpp"
#include "ivinfer/quadric.hpp"
#include "ivinfer/tests.hpp"

using nlohmann::json;

namespace {

struct DataOptions {
    std::string path;
    std::string outcome;
    std::vector<std::string> endogenous;
    std::vector<std::string> nuisance;
    std::vector<std::string> instruments;
    std::vector<std::string> exogenous;  // of interest (D)
    std::vector<std::string> controls;   // not of interest (C)
    bool intercept = false;
};

void add_data_flags(CLI::App* cmd, DataOptions& opts) {
    cmd->add_option("--data", opts.path, "CSV file with a header row")->required();
    cmd->add_option("--outcome", opts.outcome, "outcome column")->required();
    cmd->add_option("--endogenous", opts.endogenous,
                    "endogenous covariates of interest (X)");
    cmd->add_option("--nuisance-endogenous", opts.nuisance,
                    "endogenous covariates not of interest (W)");
    cmd->add_option("--instruments", opts.instruments, "instrument columns (Z)")
        ->required();
    cmd->add_option("--exogenous", opts.exogenous,
                    "exogenous covariates of interest (D)");
    cmd->add_option("--controls", opts.controls,
                    "exogenous covariates not of interest (C)");
    cmd->add_flag("--intercept", opts.intercept, "include an intercept control");
}

json data_config_json(const DataOptions& opts) {
    return json{{"data", opts.path},
                {"outcome", opts.outcome},
                {"endogenous", opts.endogenous},
                {"nuisance_endogenous", opts.nuisance},
                {"instruments", opts.instruments},
                {"exogenous", opts.exogenous},
                {"controls", opts.controls},
                {"intercept", opts.intercept}};
}

ivinfer::LoadReport load_data(const DataOptions& opts) {
    std::map<std::string, ivinfer::Role> roles;
    auto assign = [&roles](const std::vector<std::string>& names, ivinfer::Role r) {
        for (const std::string& name : names) {
            if (roles.count(name))
                throw ivinfer::ConfigError("column '" + name +
                                           "' assigned more than one role");
            roles[name] = r;
        }
    };
    assign({opts.outcome}, ivinfer::Role::outcome);
    assign(opts.endogenous, ivinfer::Role::endogenous);
    assign(opts.nuisance, ivinfer::Role::endogenous_nuisance);
    assign(opts.instruments, ivinfer::Role::instrument);
    assign(opts.exogenous, ivinfer::Role::exogenous);
    assign(opts.controls, ivinfer::Role::exogenous_nuisance);
    return ivinfer::load_csv(opts.path, roles, opts.intercept);
}

json dist_json(const ivinfer::DistDescriptor& dist) {
    json out{{"name", dist.name()}};
    switch (dist.kind) {
        case ivinfer::DistDescriptor::Kind::chi2:
            out["family"] = "chi2";
            out["df"] = dist.df;
            break;
        case ivinfer::DistDescriptor::Kind::gamma_cvf:
            out["family"] = "gamma_cvf";
            out["q"] = dist.q;
            out["p"] = dist.p;
            out["lambda"] = dist.lambda;
            break;
        case ivinfer::DistDescriptor::Kind::gamma_cvf_plus_chi2:
            out["family"] = "gamma_cvf_plus_chi2";
            out["q"] = dist.q;
            out["p"] = dist.p;
            out["lambda"] = dist.lambda;
            out["md"] = dist.md;
            break;
    }
    return out;
}

json result_json(const ivinfer::TestResult& res) {
    json out{{"statistic", res.statistic},
             {"dist", dist_json(res.dist)},
             {"p_value", res.p_value}};
    if (!res.diagnostics.empty()) out["diagnostics"] = res.diagnostics;
    if (!res.notes.empty()) out["notes"] = res.notes;
    return out;
}

json interval_json(const ivinfer::ConfidenceSet1D& set) {
    json pieces = json::array();
    for (const auto& piece : set.pieces) {
        json lo = std::isinf(piece.lo) ? json() : json(piece.lo);
        json hi = std::isinf(piece.hi) ? json() : json(piece.hi);
        pieces.push_back(json::array({lo, hi}));
    }
    json out{{"pieces", pieces}};
    if (!set.notes.empty()) out["notes"] = set.notes;
    return out;
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
    return out;
}

ivinfer::EstimatorSpec parse_estimator(const std::string& name, double kappa,
                                       bool kappa_given) {
    if (name == "tsls") return ivinfer::EstimatorSpec::tsls();
    if (name == "liml") return ivinfer::EstimatorSpec::liml();
    if (name == "kappa") {
        if (!kappa_given)
            throw ivinfer::ConfigError("--kappa is required with --estimator kappa");
        return ivinfer::EstimatorSpec::with_kappa(kappa);
    }
    throw ivinfer::ConfigError("unknown estimator '" + name + "'");
}

// ---------------------------------------------------------------- fit

int run_fit(const DataOptions& data_opts, const std::string& estimator,
            double kappa, bool kappa_given, double fuller_a, bool fuller_given) {
    const ivinfer::LoadReport report = load_data(data_opts);
    const ivinfer::IVDataset d = ivinfer::residualize(report.data);

    ivinfer::KClassFit fit;
    std::string used = estimator;
    if (fuller_given) {
        fit = ivinfer::fuller(d, fuller_a);
        used = "fuller";
    } else if (estimator == "tsls") {
        fit = ivinfer::kclass(d, 1.0);
    } else if (estimator == "liml") {
        fit = ivinfer::kclass(d, ivinfer::kappa_liml(d));
    } else if (estimator == "kappa") {
        if (!kappa_given)
            throw ivinfer::ConfigError("--kappa is required with --estimator kappa");
        fit = ivinfer::kclass(d, kappa);
    } else {
        throw ivinfer::ConfigError("unknown estimator '" + estimator + "'");
    }

    json coef = json::array();
    for (Eigen::Index i = 0; i < fit.coef.size(); ++i) {
        const double se = std::sqrt(fit.sigma2_wald * fit.cov_scale(i, i));
        coef.push_back(json{{"index", i},
                            {"block", i < d.mx() ? "X" : "W"},
                            {"estimate", fit.coef(i)},
                            {"std_error", se}});
    }
    json out{{"command", "fit"},
             {"estimator", used},
             {"kappa", fit.kappa},
             {"coefficients", coef},
             {"sigma2_wald", fit.sigma2_wald},
             {"sigma2_mz", fit.sigma2_mz},
             {"dropped_rows", report.dropped_rows},
             {"config", data_config_json(data_opts)}};
    if (fuller_given) out["config"]["fuller_a"] = fuller_a;
    std::cout << out.dump(2) << "\n";
    return 0;
}

// ---------------------------------------------------------------- test

int run_test_cmd(const DataOptions& data_opts, const std::vector<std::string>& tests,
                 const std::vector<double>& beta0, const std::vector<double>& delta0,
                 const std::string& estimator, double kappa, bool kappa_given,
                 double grid_lo, double grid_hi, int grid_points, bool grid_given) {
    const ivinfer::LoadReport report = load_data(data_opts);
    const ivinfer::IVDataset& d = report.data;
    const ivinfer::EstimatorSpec est = parse_estimator(estimator, kappa, kappa_given);

    json config = data_config_json(data_opts);
    config["tests"] = tests;
    config["estimator"] = estimator;
    config["dropped_rows"] = report.dropped_rows;

    if (grid_given) {
        // p-value grid: one CSV row per (test, beta).
        if (grid_points < 2)
            throw ivinfer::ConfigError("--grid-points must be >= 2");
        std::cout << "# config " << config.dump() << "\n";
        std::cout << "test,beta,p_value\n";
        for (const std::string& name : tests) {
            const ivinfer::TestKind kind = ivinfer::test_kind_from_string(name);
            for (int i = 0; i < grid_points; ++i) {
                const double b =
                    grid_lo + (grid_hi - grid_lo) * i / (grid_points - 1);
                Eigen::VectorXd beta(1);
                beta(0) = b;
                const ivinfer::TestResult res = ivinfer::run_test(d, beta, kind, est);
                std::cout << name << "," << b << "," << res.p_value << "\n";
            }
        }
        return 0;
    }

    json results = json::object();
    for (const std::string& name : tests) {
        const ivinfer::TestKind kind = ivinfer::test_kind_from_string(name);
        ivinfer::TestResult res;
        if (!delta0.empty()) {
            res = ivinfer::test_with_exogenous_of_interest(
                d, to_vector(beta0), to_vector(delta0), kind);
        } else {
            res = ivinfer::run_test(d, to_vector(beta0), kind, est);
        }
        results[name] = result_json(res);
    }
    config["beta0"] = beta0;
    config["delta0"] = delta0;
    json out{{"command", "test"}, {"results", results}, {"config", config}};
    std::cout << out.dump(2) << "\n";
    return 0;
}

// ---------------------------------------------------------------- confset

int run_confset(const DataOptions& data_opts, const std::string& test, double alpha,
                double grid_lo, double grid_hi, int grid_points, bool grid_given) {
    const ivinfer::LoadReport report = load_data(data_opts);
    const ivinfer::IVDataset d = ivinfer::residualize(report.data);

    json config = data_config_json(data_opts);
    config["test"] = test;
    config["alpha"] = alpha;
    json out{{"command", "confset"}, {"config", config}};

    if (test == "wald" || test == "ar" || test == "lr") {
        ivinfer::ClosedFormTest spec = ivinfer::ClosedFormTest::ar();
        if (test == "wald") spec = ivinfer::ClosedFormTest::wald(1.0);
        if (test == "lr") spec = ivinfer::ClosedFormTest::lr();
        const ivinfer::Quadric q = ivinfer::invert_closed_form(d, spec, alpha);
        out["classification"] = ivinfer::to_string(ivinfer::classify(q));
        if (q.kind == ivinfer::Quadric::Kind::region) {
            json A = json::array();
            for (Eigen::Index i = 0; i < q.A.rows(); ++i) {
                json row = json::array();
                for (Eigen::Index j = 0; j < q.A.cols(); ++j) row.push_back(q.A(i, j));
                A.push_back(row);
            }
            json center = json::array();
            for (Eigen::Index i = 0; i < q.center.size(); ++i)
                center.push_back(q.center(i));
            out["quadric"] = json{{"A", A}, {"center", center}, {"rhs", q.rhs}};
        }
        if (!q.notes.empty()) out["notes"] = q.notes;
        if (d.mx() == 1 || q.kind == ivinfer::Quadric::Kind::whole_space)
            out["set"] = interval_json(ivinfer::project_to_interval(q));
    } else if (test == "lm" || test == "clr") {
        double lo = grid_lo;
        double hi = grid_hi;
        if (!grid_given) {
            // Default window: Wald center +- 20 standard errors.
            const ivinfer::Quadric wq =
                ivinfer::invert_closed_form(d, ivinfer::ClosedFormTest::wald(1.0), alpha);
            if (wq.A.rows() != 1 || wq.A(0, 0) <= 0.0)
                throw ivinfer::ConfigError(
                    "confset: supply --grid-lo/--grid-hi for this instance");
            const double se =
                std::sqrt(wq.rhs / wq.A(0, 0) /
                          ivinfer::chi2_quantile(1.0 - alpha, 1.0));
            lo = wq.center(0) - 20.0 * se;
            hi = wq.center(0) + 20.0 * se;
        }
        config["grid_lo"] = lo;
        config["grid_hi"] = hi;
        config["grid_points"] = grid_points;
        const ivinfer::ConfidenceSet1D set = ivinfer::grid_invert(
            d, ivinfer::test_kind_from_string(test), alpha, lo, hi, grid_points);
        out["set"] = interval_json(set);
    } else {
        throw ivinfer::ConfigError("confset: unknown test '" + test + "'");
    }
    out["config"] = config;
    std::cout << out.dump(2) << "\n";
    return 0;
}

// ---------------------------------------------------------------- rank

int run_rank(const DataOptions& data_opts, int r) {
    const ivinfer::LoadReport report = load_data(data_opts);
    const ivinfer::TestResult res = ivinfer::rank_test(report.data, r);
    json config = data_config_json(data_opts);
    config["r"] = r;
    json out{{"command", "rank"},
             {"result", result_json(res)},
             {"config", config}};
    std::cout << out.dump(2) << "\n";
    return 0;
}

// ---------------------------------------------------------------- simulate

struct SimOptions {
    std::string family = "guggenberger";
    int n = 1000;
    int k = 5;
    int reps = 2000;
    double alpha = 0.05;
    std::uint64_t seed = 0;
    double pi_x_norm = 100.0;
    double pi_w_norm = 1.0;
    double pi_inner = 95.0;
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    double tau = 0.0;
    double beta_true = 0.0;
    double gamma_true = 0.0;
    std::vector<std::string> tests;
};

void add_sim_flags(CLI::App* cmd, SimOptions& opts) {
    cmd->add_option("--family", opts.family, "guggenberger or kleibergen");
    cmd->add_option("--n", opts.n, "sample size");
    cmd->add_option("--k", opts.k, "number of instruments");
    cmd->add_option("--reps", opts.reps, "replications");
    cmd->add_option("--alpha", opts.alpha, "nominal level");
    cmd->add_option("--seed", opts.seed, "RNG seed");
    cmd->add_option("--pi-x-norm", opts.pi_x_norm, "sqrt(n) ||Pi_X||");
    cmd->add_option("--pi-w-norm", opts.pi_w_norm, "sqrt(n) ||Pi_W||");
    cmd->add_option("--pi-inner", opts.pi_inner, "n <Pi_X, Pi_W>");
    cmd->add_option("--lambda1", opts.lambda1, "kleibergen lambda_1");
    cmd->add_option("--lambda2", opts.lambda2, "kleibergen lambda_2");
    cmd->add_option("--tau", opts.tau, "kleibergen rotation angle");
    cmd->add_option("--beta-true", opts.beta_true, "true beta");
    cmd->add_option("--gamma-true", opts.gamma_true, "true gamma");
    cmd->add_option("--tests", opts.tests,
                    "tests to run (default: ar lm lm-plugin lr clr wald-tsls wald-liml)");
}

ivinfer::DGPSpec make_spec(const SimOptions& opts) {
    ivinfer::DGPSpec spec = ivinfer::DGPSpec::guggenberger_default();
    if (opts.family == "guggenberger") {
        spec.family = ivinfer::DGPSpec::Family::guggenberger;
    } else if (opts.family == "kleibergen") {
        spec.family = ivinfer::DGPSpec::Family::kleibergen;
    } else {
        throw ivinfer::ConfigError("unknown DGP family '" + opts.family + "'");
    }
    spec.n = opts.n;
    spec.k = opts.k;
    spec.pi_x_norm = opts.pi_x_norm;
    spec.pi_w_norm = opts.pi_w_norm;
    spec.pi_inner = opts.pi_inner;
    spec.lambda1 = opts.lambda1;
    spec.lambda2 = opts.lambda2;
    spec.tau = opts.tau;
    spec.beta_true = opts.beta_true;
    spec.gamma_true = opts.gamma_true;
    return spec;
}

json sim_config_json(const SimOptions& opts) {
    return json{{"family", opts.family},     {"n", opts.n},
                {"k", opts.k},               {"reps", opts.reps},
                {"alpha", opts.alpha},       {"seed", opts.seed},
                {"pi_x_norm", opts.pi_x_norm}, {"pi_w_norm", opts.pi_w_norm},
                {"pi_inner", opts.pi_inner}, {"lambda1", opts.lambda1},
                {"lambda2", opts.lambda2},   {"tau", opts.tau},
                {"beta_true", opts.beta_true}, {"gamma_true", opts.gamma_true}};
}

std::vector<std::string> default_tests() {
    return {"ar", "lm", "lm-plugin", "lr", "clr", "wald-tsls", "wald-liml"};
}

int run_simulate_size(const SimOptions& opts) {
    const ivinfer::DGPSpec spec = make_spec(opts);
    const std::vector<std::string> tests =
        opts.tests.empty() ? default_tests() : opts.tests;
    std::cout << "# config " << sim_config_json(opts).dump() << "\n";
    std::cout << "test,rate,mc_stderr,failures\n";
    for (const std::string& name : tests) {
        const ivinfer::SizeResult res = ivinfer::empirical_size(
            ivinfer::sim_test_from_string(name), spec, opts.reps, opts.alpha,
            opts.seed);
        std::cout << name << "," << res.rate << "," << res.mc_stderr << ","
                  << res.failures << "\n";
    }
    return 0;
}

int run_simulate_power(const SimOptions& opts, double beta_lo, double beta_hi,
                       int beta_points) {
    if (beta_points < 2)
        throw ivinfer::ConfigError("--beta-points must be >= 2");
    const ivinfer::DGPSpec spec = make_spec(opts);
    const std::vector<std::string> tests =
        opts.tests.empty() ? default_tests() : opts.tests;
    std::vector<double> grid(beta_points);
    for (int i = 0; i < beta_points; ++i)
        grid[i] = beta_lo + (beta_hi - beta_lo) * i / (beta_points - 1);

    json config = sim_config_json(opts);
    config["beta_lo"] = beta_lo;
    config["beta_hi"] = beta_hi;
    config["beta_points"] = beta_points;
    std::cout << "# config " << config.dump() << "\n";
    std::cout << "test,beta,rate,mc_stderr,failures\n";
    for (const std::string& name : tests) {
        const std::vector<ivinfer::PowerPoint> curve = ivinfer::power_curve(
            ivinfer::sim_test_from_string(name), spec, grid, opts.reps,
            opts.alpha, opts.seed);
        for (const ivinfer::PowerPoint& point : curve)
            std::cout << name << "," << point.beta << "," << point.rate << ","
                      << point.mc_stderr << "," << point.failures << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Weak-instrument-robust inference for linear IV regression"};
    app.require_subcommand(1);

    // fit
    DataOptions fit_data;
    std::string fit_estimator = "tsls";
    double fit_kappa = 1.0;
    double fit_fuller_a = 1.0;
    CLI::App* fit = app.add_subcommand("fit", "k-class estimation");
    add_data_flags(fit, fit_data);
    fit->add_option("--estimator", fit_estimator, "tsls, liml, or kappa");
    CLI::Option* fit_kappa_opt = fit->add_option("--kappa", fit_kappa, "k-class kappa");
    CLI::Option* fit_fuller_opt =
        fit->add_option("--fuller-a", fit_fuller_a, "Fuller(a) parameter");

    // test
    DataOptions test_data;
    std::vector<std::string> test_tests = {"ar"};
    std::vector<double> test_beta0;
    std::vector<double> test_delta0;
    std::string test_estimator = "tsls";
    double test_kappa = 1.0;
    double test_grid_lo = -1.0, test_grid_hi = 1.0;
    int test_grid_points = 100;
    CLI::App* test = app.add_subcommand("test", "hypothesis tests at beta0");
    add_data_flags(test, test_data);
    test->add_option("--test", test_tests,
                     "tests: wald, ar, lm, lm-plugin, lr, clr");
    test->add_option("--beta0", test_beta0, "null value for beta");
    test->add_option("--delta0", test_delta0,
                     "null value for the exogenous-of-interest delta");
    test->add_option("--estimator", test_estimator, "Wald estimator");
    CLI::Option* test_kappa_opt = test->add_option("--kappa", test_kappa);
    CLI::Option* test_grid_lo_opt =
        test->add_option("--grid-lo", test_grid_lo, "p-value grid lower edge");
    test->add_option("--grid-hi", test_grid_hi, "p-value grid upper edge");
    test->add_option("--grid-points", test_grid_points, "p-value grid size");

    // confset
    DataOptions conf_data;
    std::string conf_test = "ar";
    double conf_alpha = 0.05;
    double conf_grid_lo = -1.0, conf_grid_hi = 1.0;
    int conf_grid_points = 2000;
    CLI::App* confset = app.add_subcommand("confset", "confidence sets for beta");
    add_data_flags(confset, conf_data);
    confset->add_option("--test", conf_test, "wald, ar, lr, lm, or clr");
    confset->add_option("--alpha", conf_alpha, "1 - confidence level");
    CLI::Option* conf_grid_lo_opt = confset->add_option("--grid-lo", conf_grid_lo);
    confset->add_option("--grid-hi", conf_grid_hi);
    confset->add_option("--grid-points", conf_grid_points);

    // rank
    DataOptions rank_data;
    int rank_r = 1;
    CLI::App* rank = app.add_subcommand("rank", "first-stage rank test");
    add_data_flags(rank, rank_data);
    rank->add_option("--r", rank_r, "rank deficiency under test");

    // simulate-size / simulate-power
    SimOptions size_opts;
    CLI::App* sim_size =
        app.add_subcommand("simulate-size", "empirical size table (CSV)");
    add_sim_flags(sim_size, size_opts);

    SimOptions power_opts;
    double power_beta_lo = -1.0, power_beta_hi = 1.0;
    int power_beta_points = 21;
    CLI::App* sim_power =
        app.add_subcommand("simulate-power", "power curves (CSV)");
    add_sim_flags(sim_power, power_opts);
    sim_power->add_option("--beta-lo", power_beta_lo, "tested-beta grid lower edge");
    sim_power->add_option("--beta-hi", power_beta_hi, "tested-beta grid upper edge");
    sim_power->add_option("--beta-points", power_beta_points, "tested-beta grid size");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (fit->parsed())
            return run_fit(fit_data, fit_estimator, fit_kappa,
                           fit_kappa_opt->count() > 0, fit_fuller_a,
                           fit_fuller_opt->count() > 0);
        if (test->parsed())
            return run_test_cmd(test_data, test_tests, test_beta0, test_delta0,
                                test_estimator, test_kappa,
                                test_kappa_opt->count() > 0, test_grid_lo,
                                test_grid_hi, test_grid_points,
                                test_grid_lo_opt->count() > 0);
        if (confset->parsed())
            return run_confset(conf_data, conf_test, conf_alpha, conf_grid_lo,
                               conf_grid_hi, conf_grid_points,
                               conf_grid_lo_opt->count() > 0);
        if (rank->parsed()) return run_rank(rank_data, rank_r);
        if (sim_size->parsed()) return run_simulate_size(size_opts);
        if (sim_power->parsed())
            return run_simulate_power(power_opts, power_beta_lo, power_beta_hi,
                                      power_beta_points);
        std::cerr << "error: no subcommand given\n";
        return 2;
    } catch (const ivinfer::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ivinfer::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
