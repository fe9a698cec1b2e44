#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rslq/rslq.hpp"

namespace rslq::cli {

enum ExitCode : int { Ok = 0, ValidationFailure = 1, NumericalFailure = 2, CheckFailure = 3 };

struct RunConfig {
    std::string subcommand;
    std::string config_path;
    int grid = 200;
    std::optional<std::size_t> paths;
    std::optional<std::uint64_t> seed;
    std::string out_dir = ".";
    unsigned workers = default_workers();
    std::size_t dump_paths = 0;
    int degree = 3;
    bool verbose = false;
};

namespace detail {

inline void emit_error(std::ostream& err, const std::string& kind, const std::string& category,
                       const std::string& message)
{
    json j = {{"error", kind}, {"category", category}, {"message", message}};
    err << j.dump() << '\n';
}

inline std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorKind::BadConfig, "cannot read config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::ofstream open_output(const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error(ErrorKind::InvalidArgument, "cannot write " + path.string());
    return out;
}

inline std::uint64_t require_seed(const RunConfig& cfg)
{
    if (!cfg.seed)
        throw Error(ErrorKind::InvalidArgument, "seed required");
    return *cfg.seed;
}

inline std::size_t require_paths(const RunConfig& cfg, std::size_t fallback)
{
    const std::size_t paths = cfg.paths.value_or(fallback);
    if (paths < 100)
        throw Error(ErrorKind::InvalidArgument, "at least 100 paths are required");
    return paths;
}

inline void write_json(const std::filesystem::path& path, const json& j)
{
    auto out = open_output(path);
    out << j.dump(2) << '\n';
}

inline int run_solve(const RunConfig& cfg, const json& config, OutputHeader header, std::ostream& log)
{
    const ProblemSpec problem = load_problem(config);
    const RiccatiGrid grid = solve_riccati(problem, cfg.grid);
    auto out = open_output(std::filesystem::path(cfg.out_dir) / "riccati.csv");
    write_riccati_csv(out, grid, header);
    if (cfg.verbose)
        log << "solve: " << grid.times.size() << " nodes, epsilon_hat=" << format_double(rhat_certificate(grid))
            << '\n';
    return Ok;
}

inline int run_simulate(const RunConfig& cfg, const json& config, OutputHeader header, std::ostream& log)
{
    const std::uint64_t seed = require_seed(cfg);
    const std::size_t paths = require_paths(cfg, 100000);
    const ProblemSpec problem = load_problem(config);
    const RiccatiGrid grid = solve_riccati(problem, cfg.grid);
    const FeedbackLaw law(problem, grid);
    const MCEstimate est = mc_cost(problem, law, cfg.grid, paths, seed, cfg.workers);
    write_json(std::filesystem::path(cfg.out_dir) / "estimate.json", estimate_to_json(est, header));

    if (cfg.dump_paths > 0) {
        const auto dir = std::filesystem::path(cfg.out_dir) / "paths";
        std::filesystem::create_directories(dir);
        const GainTable gains = GainTable::from_law(law, cfg.grid);
        for (std::size_t p = 0; p < std::min(cfg.dump_paths, paths); ++p) {
            auto out = open_output(dir / ("path_" + std::to_string(p) + ".csv"));
            write_path_csv(out, simulate_path(problem, cfg.grid, gains, seed, p), header);
        }
    }
    if (cfg.verbose)
        log << "simulate: mean=" << format_double(est.mean) << " stderr=" << format_double(est.stderr_)
            << " value=" << format_double(quadratic_form(grid.P.front()[problem.i0], problem.x0)) << '\n';
    return Ok;
}

inline int run_verify(const RunConfig& cfg, const json& config, OutputHeader header, std::ostream& log)
{
    const std::uint64_t seed = require_seed(cfg);
    const ProblemSpec problem = load_problem(config);
    SuiteOptions opt;
    opt.N = cfg.grid;
    opt.paths = require_paths(cfg, 100000);
    opt.perturbation_paths = std::min<std::size_t>(opt.paths, 10000);
    opt.seed = seed;
    opt.workers = cfg.workers;
    const VerifyReport report = run_verification(problem, opt);
    write_json(std::filesystem::path(cfg.out_dir) / "report.json", report_to_json(report, header));
    if (cfg.verbose)
        for (const auto& c : report.checks)
            log << c.name << ": " << (c.passed ? "pass" : "fail") << " statistic=" << format_double(c.statistic)
                << " tolerance=" << format_double(c.tolerance) << '\n';
    return report.all_passed() ? Ok : CheckFailure;
}

/// Deterministic frontier; with --paths the Monte Carlo check also runs and
/// needs a seed.
inline int run_frontier(const RunConfig& cfg, const json& config, OutputHeader header, std::ostream& log)
{
    const MarketConfig parsed = parse_market(config);
    const MarketSpec market = validate_market(parsed.market);
    if (parsed.targets.empty())
        throw Error(ErrorKind::BadConfig, "market config needs a non-empty \"targets\" array");
    const FrontierSolution frontier = efficient_frontier(market, parsed.targets, cfg.grid);

    std::vector<FrontierRow> rows;
    bool all_passed = true;
    for (std::size_t i = 0; i < frontier.points.size(); ++i) {
        FrontierRow row{frontier.points[i], false, {}};
        if (cfg.paths) {
            const CheckOptions opt{cfg.grid, require_paths(cfg, 0), check_seed(require_seed(cfg), i),
                                   cfg.workers};
            row.mc = mv_simulate_check(market, frontier.grid, row.point, opt);
            row.has_mc = true;
            all_passed = all_passed && row.mc.mean_check.passed && row.mc.variance_check.passed;
        }
        if (cfg.verbose)
            log << "frontier: d=" << format_double(row.point.d) << " variance=" << format_double(row.point.variance)
                << '\n';
        rows.push_back(row);
    }
    auto out = open_output(std::filesystem::path(cfg.out_dir) / "frontier.csv");
    write_frontier_csv(out, rows, header);
    return all_passed ? Ok : CheckFailure;
}

inline int run_bsde(const RunConfig& cfg, const json& config, OutputHeader header, std::ostream& log)
{
    const std::uint64_t seed = require_seed(cfg);
    const std::size_t paths = require_paths(cfg, 100000);
    const RandomCoefficientModel model = validate_random_model(parse_random_model(config));
    const PathBundle bundle =
        generate_training_paths(model, static_cast<int>(paths), cfg.grid, seed, cfg.degree, cfg.workers);
    const BsdeSolution sol = backward_regression_solve(model, bundle, cfg.degree);
    auto out = open_output(std::filesystem::path(cfg.out_dir) / "bsde.csv");
    write_bsde_csv(out, sol, header);
    if (cfg.verbose)
        log << "bsde: P(0, i0) = "
            << format_double(bsde_value(model, sol, 0, model.i0(), model.driver().y0)) << '\n';
    return Ok;
}

} // namespace detail

/// Parses argv, dispatches, and maps errors to exit codes. Diagnostics go to
/// err as single-line JSON.
inline int run(int argc, const char* const* argv, std::ostream& err = std::cerr)
{
    RunConfig cfg;
    CLI::App app{"Regime-switching stochastic LQ solver and verification harness", "rslq"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kToolVersion));

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", cfg.config_path, "JSON config file")->required();
        sub->add_option("--grid", cfg.grid, "time steps N")->check(CLI::Range(2, 10000000));
        sub->add_option("--paths", cfg.paths, "Monte Carlo paths");
        sub->add_option("--seed", cfg.seed, "master seed");
        sub->add_option("--out", cfg.out_dir, "output directory");
        sub->add_option("--workers", cfg.workers, "worker threads")->check(CLI::Range(1u, 4096u));
        sub->add_flag("--verbose", cfg.verbose, "progress on standard error");
    };
    auto* solve = app.add_subcommand("solve", "Riccati solve, writes riccati.csv");
    auto* simulate = app.add_subcommand("simulate", "closed-loop cost estimate, writes estimate.json");
    auto* verify = app.add_subcommand("verify", "verification suite, writes report.json");
    auto* frontier = app.add_subcommand("frontier", "mean-variance frontier, writes frontier.csv");
    auto* bsde = app.add_subcommand("bsde", "regression BSDE solve, writes bsde.csv");
    for (auto* sub : {solve, simulate, verify, frontier, bsde})
        add_common(sub);
    simulate->add_option("--dump-paths", cfg.dump_paths, "write the first K paths as CSV");
    bsde->add_option("--degree", cfg.degree, "polynomial basis degree")->check(CLI::Range(0, 8));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        return Ok;
    } catch (const CLI::CallForVersion&) {
        std::cout << kToolVersion << '\n';
        return Ok;
    } catch (const CLI::ParseError& e) {
        detail::emit_error(err, "usage", "validation", e.what());
        return ValidationFailure;
    }
    for (auto* sub : {solve, simulate, verify, frontier, bsde})
        if (sub->parsed())
            cfg.subcommand = sub->get_name();

    try {
        const bool needs_seed = cfg.subcommand == "simulate" || cfg.subcommand == "verify" ||
                                cfg.subcommand == "bsde" || (cfg.subcommand == "frontier" && cfg.paths);
        if (needs_seed)
            detail::require_seed(cfg);
        const std::string bytes = detail::read_file(cfg.config_path);
        const json config = parse_json(bytes);
        OutputHeader header;
        header.config_hash = fnv1a64(bytes);
        header.has_seed = cfg.seed.has_value();
        header.seed = cfg.seed.value_or(0);
        std::filesystem::create_directories(cfg.out_dir);

        if (cfg.subcommand == "solve")
            return detail::run_solve(cfg, config, header, err);
        if (cfg.subcommand == "simulate")
            return detail::run_simulate(cfg, config, header, err);
        if (cfg.subcommand == "verify")
            return detail::run_verify(cfg, config, header, err);
        if (cfg.subcommand == "frontier")
            return detail::run_frontier(cfg, config, header, err);
        return detail::run_bsde(cfg, config, header, err);
    } catch (const Error& e) {
        const bool numerical = e.category() == ErrorCategory::Numerical;
        detail::emit_error(err, to_string(e.kind()), numerical ? "numerical" : "validation", e.detail());
        return numerical ? NumericalFailure : ValidationFailure;
    } catch (const std::filesystem::filesystem_error& e) {
        detail::emit_error(err, "io", "validation", e.what());
        return ValidationFailure;
    } catch (const json::exception& e) {
        detail::emit_error(err, "BadConfig", "validation", e.what());
        return ValidationFailure;
    }
}

} // namespace rslq::cli
