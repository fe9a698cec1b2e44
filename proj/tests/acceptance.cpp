// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance <path to rslq binary> <configs dir> <scratch dir>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "fixtures.hpp"

using namespace rslq;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeed = 20240601;

struct Verdict {
    bool passed = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point start)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string fmt(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

struct Canonical {
    const char* name;
    ProblemSpec problem;
};

std::vector<Canonical> canonical_problems()
{
    return {{"scalar", fixtures::scalar_problem()},
            {"coupling", fixtures::coupling_problem()},
            {"lqr", fixtures::lqr_problem()}};
}

CheckOptions options(std::size_t paths, std::uint64_t index)
{
    return CheckOptions{200, paths, check_seed(kSeed, index), default_workers()};
}

Verdict scalar_riccati()
{
    const auto p = fixtures::scalar_problem();
    const auto start = std::chrono::steady_clock::now();
    const auto grid = solve_riccati(p, 200);
    const double elapsed = seconds_since(start);
    double err = 0.0;
    for (std::size_t i = 0; i < grid.times.size(); ++i)
        err = std::max(err, std::abs(grid.P[i][0](0, 0) - fixtures::scalar_exact(grid.times[i])));
    return {err <= 1e-8 && elapsed < 0.1, "max node error " + fmt(err) + ", " + fmt(elapsed) + " s"};
}

Verdict regime_coupling()
{
    const auto grid = solve_riccati(fixtures::coupling_problem(), 200);
    const double e1 = std::abs(grid.P[0][0](0, 0) - (1.0 + std::exp(-2.0)));
    const double e2 = std::abs(grid.P[0][1](0, 0) - (1.0 - std::exp(-2.0)));
    return {e1 <= 1e-8 && e2 <= 1e-8, "P_1(0) error " + fmt(e1) + ", P_2(0) error " + fmt(e2)};
}

Verdict rhat_certificate_criterion()
{
    bool ok = true;
    std::string detail;
    for (const auto& c : canonical_problems()) {
        const double eps = rhat_certificate(solve_riccati(c.problem, 200));
        ok = ok && eps > 0.0;
        detail += std::string(c.name) + " eps_hat=" + fmt(eps) + "; ";
    }
    const auto bad = fixtures::nonconvex_problem();
    bool singular = false;
    try {
        solve_riccati(bad, 200);
    } catch (const Error& e) {
        singular = e.kind() == ErrorKind::SingularRhat;
    }
    const auto probe = convexity_probe(bad, 10, options(10000, 30));
    const bool detected = singular || probe.min_ratio < 0.0;
    detail += "nonconvex: SingularRhat=" + std::string(singular ? "yes" : "no") +
              " min probe ratio=" + fmt(probe.min_ratio);
    return {ok && detected, detail};
}

Verdict value_identity()
{
    bool ok = true;
    std::string detail;
    for (const auto& c : canonical_problems()) {
        const auto start = std::chrono::steady_clock::now();
        const auto grid = solve_riccati(c.problem, 200);
        const auto r = value_identity_check(c.problem, grid, options(100000, 40));
        const double elapsed = seconds_since(start);
        ok = ok && r.passed && elapsed < 30.0;
        detail += std::string(c.name) + " |diff|=" + fmt(r.statistic) + " <= " + fmt(r.stderr_term) + "+" +
                  fmt(r.bias_allowance) + " (" + fmt(elapsed) + " s); ";
    }
    return {ok, detail};
}

Verdict stationarity()
{
    bool ok = true;
    std::string detail;
    std::vector<Canonical> problems = canonical_problems();
    problems.push_back({"two_regime", fixtures::stochastic_problem()});
    for (const auto& c : problems) {
        const auto r = stationarity_check(c.problem, solve_riccati(c.problem, 200), options(100000, 50));
        ok = ok && r.passed;
        detail += std::string(c.name) + " max rel residual=" + fmt(r.statistic) + "; ";
    }
    return {ok, detail};
}

Verdict perturbation()
{
    bool ok = true;
    std::string detail;
    for (const auto& c : canonical_problems()) {
        const auto res = perturbation_test(c.problem, solve_riccati(c.problem, 200), 10, options(10000, 60));
        bool all = res.deltas.size() == 10;
        for (const auto& d : res.deltas)
            all = all && d.mean >= -3.0 * d.stderr_;
        ok = ok && all;
        detail += std::string(c.name) + " min Delta=" + fmt(res.check.statistic) + " eps_emp=" +
                  fmt(res.empirical_epsilon) + "; ";
    }
    return {ok, detail};
}

Verdict lyapunov()
{
    bool ok = true;
    std::string detail;
    std::vector<Canonical> problems = canonical_problems();
    problems.push_back({"two_regime", fixtures::stochastic_problem()});
    for (const auto& c : problems) {
        const auto r = lyapunov_identity_check(c.problem, lyapunov_solve(c.problem, 200), options(100000, 70));
        ok = ok && r.passed;
        detail += std::string(c.name) + " |diff|=" + fmt(r.statistic) + " <= " + fmt(r.tolerance) + "; ";
    }
    return {ok, detail};
}

Verdict bsde_oracle()
{
    const auto start = std::chrono::steady_clock::now();
    const auto model = validate_random_model(fixtures::constant_random_model());
    const auto bundle = generate_training_paths(model, 100000, 100, check_seed(kSeed, 80), 3, default_workers());
    const auto sol = backward_regression_solve(model, bundle, 3);
    const double elapsed = seconds_since(start);
    const auto grid = solve_riccati(model.to_problem(), 1000);
    double worst = 0.0;
    for (int k = 0; k < model.regimes(); ++k) {
        const double exact = grid.P[0][k](0, 0);
        worst = std::max(worst, std::abs(bsde_value(model, sol, 0, k, model.driver().y0) / exact - 1.0));
    }
    return {worst <= 5e-3 && elapsed < 120.0, "max relative error " + fmt(worst) + ", " + fmt(elapsed) + " s"};
}

Verdict mean_variance()
{
    const auto market = fixtures::reference_market();
    const std::vector<double> targets{1.2};
    const auto frontier = efficient_frontier(market, targets, 200);
    const auto& pt = frontier.points[0];
    const double exact = fixtures::market_variance(1.2, 1.0, 0.06, 0.09, 1.0);
    const double var_err = std::abs(pt.variance - exact);
    const double duality = std::abs(pt.second_moment - pt.riccati_second_moment) / std::abs(pt.riccati_second_moment);
    const auto mc = mv_simulate_check(market, frontier.grid, pt, options(100000, 90));
    const bool ok = var_err <= 1e-6 && duality <= 1e-8 && mc.mean_check.passed && mc.variance_check.passed;
    return {ok, "Var=" + fmt(pt.variance) + " (closed form " + fmt(exact) + ", error " + fmt(var_err) +
                    "); MC mean " + fmt(mc.mc_mean) + " +- " + fmt(mc.mean_check.tolerance) + "; MC var " +
                    fmt(mc.mc_variance) + " +- " + fmt(mc.variance_check.tolerance) + "; duality rel " +
                    fmt(duality)};
}

std::string slurp(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Verdict determinism(const std::string& cli, const fs::path& configs, const fs::path& scratch)
{
    std::string bytes[2];
    const char* workers[2] = {"1", "4"};
    for (int run = 0; run < 2; ++run) {
        const fs::path out = scratch / ("verify_" + std::to_string(run));
        fs::remove_all(out);
        const std::string cmd = "\"" + cli + "\" verify --config \"" + (configs / "two_regime.json").string() +
                                "\" --paths 20000 --grid 100 --seed 42 --workers " + workers[run] + " --out \"" +
                                out.string() + "\"";
        const int status = std::system(cmd.c_str());
        if (status != 0)
            return {false, "verify run " + std::to_string(run) + " exited with status " + std::to_string(status)};
        bytes[run] = slurp(out / "report.json");
    }
    const bool same = !bytes[0].empty() && bytes[0] == bytes[1];
    return {same, "report.json " + std::to_string(bytes[0].size()) + " bytes, workers 1 vs 4 " +
                      (same ? "identical" : "differ")};
}

} // namespace

int main(int argc, char** argv)
{
    if (argc != 4) {
        std::cerr << "usage: acceptance <rslq binary> <configs dir> <scratch dir>\n";
        return 2;
    }
    const std::string cli = argv[1];
    const fs::path configs = argv[2];
    const fs::path scratch = argv[3];
    fs::create_directories(scratch);

    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"scalar analytic Riccati", scalar_riccati},
        {"regime coupling closed form", regime_coupling},
        {"Rhat certificate and nonconvex detection", rhat_certificate_criterion},
        {"value identity", value_identity},
        {"stationarity", stationarity},
        {"open-loop optimality", perturbation},
        {"Lyapunov representation", lyapunov},
        {"BSDE/ODE oracle equivalence", bsde_oracle},
        {"mean-variance frontier", mean_variance},
        {"determinism", [&] { return determinism(cli, configs, scratch); }},
    };

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        failures += v.passed ? 0 : 1;
        std::cout << (v.passed ? "PASS" : "FAIL") << " criterion " << i + 1 << " (" << criteria[i].first
                  << "): " << v.detail << std::endl;
    }
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << '\n';
    return failures == 0 ? 0 : 1;
}
