#pragma once

// Statistical and algebraic checks of the optimality structure of a solved
// problem. Every check reports |statistic| against 3 * stderr plus a
// declared discretization allowance, and keeps both terms separately.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rslq/error.hpp"
#include "rslq/model.hpp"
#include "rslq/random.hpp"
#include "rslq/riccati.hpp"
#include "rslq/simulate.hpp"

namespace rslq {

struct CheckResult {
    std::string name;
    bool passed = false;
    double statistic = 0.0;
    /// Total tolerance = stderr_term + bias_allowance.
    double tolerance = 0.0;
    double stderr_term = 0.0;
    double bias_allowance = 0.0;
    std::size_t n = 0;
    std::uint64_t seed = 0;
    std::string note;
};

struct VerifyReport {
    std::vector<CheckResult> checks;

    bool all_passed() const
    {
        for (const auto& c : checks)
            if (!c.passed)
                return false;
        return true;
    }
};

struct CheckOptions {
    int N = 200;
    std::size_t paths = 100000;
    std::uint64_t seed = 0;
    unsigned workers = 1;
};

/// Richardson estimate c*h of the weak bias of the discrete scheme at N,
/// from the exact discrete expectations at N and 2N: bias(N) ~ 2 (E_N - E_2N).
inline double richardson_allowance(double value_N, double value_2N)
{
    return 2.0 * std::abs(value_N - value_2N);
}

inline double quadratic_form(const Eigen::MatrixXd& M, const Eigen::VectorXd& x)
{
    return x.dot(M * x);
}

/// Monte Carlo cost under the feedback law against x0' P(0, i0) x0.
inline CheckResult value_identity_check(const ProblemSpec& problem, const RiccatiGrid& grid, const CheckOptions& opt)
{
    const FeedbackLaw law(problem, grid);
    const GainTable gains = GainTable::from_law(law, opt.N);
    const MCEstimate est = mc_cost(problem, gains, opt.N, opt.paths, opt.seed, opt.workers);
    const double target = quadratic_form(grid.P.front()[problem.i0], problem.x0);
    const double e_n = discrete_scheme_moments(problem, gains).expected_cost;
    const double e_2n = discrete_scheme_moments(problem, GainTable::from_law(law, 2 * opt.N)).expected_cost;

    CheckResult r;
    r.name = "value_identity";
    r.statistic = std::abs(est.mean - target);
    r.stderr_term = 3.0 * est.stderr_;
    r.bias_allowance = richardson_allowance(e_n, e_2n);
    r.tolerance = r.stderr_term + r.bias_allowance;
    r.passed = r.statistic <= r.tolerance;
    r.n = est.n;
    r.seed = opt.seed;
    r.note = "mc_mean=" + std::to_string(est.mean) + " target=" + std::to_string(target);
    return r;
}

struct StationarityResidual {
    double max_residual = 0.0;
    double max_state_norm = 0.0;

    bool within(double relative) const { return max_residual <= relative * max_state_norm; }
};

/// Stationarity F = B'Y + D'Z + S X + R u along a simulated path, with the
/// adjoint pair taken as Y = P X and Z = P (C X + D u). Under u = Theta X
/// this equals (Shat + Rhat Theta) X, which vanishes identically.
inline StationarityResidual stationarity_residual(const PathRecord& path, const ProblemSpec& problem,
                                                  const GainTable& gains)
{
    StationarityResidual out;
    for (int i = 0; i < path.steps(); ++i) {
        const int k = path.regimes[i];
        const CoefficientSet& c = coeff_at(problem, path.times[i], k);
        const Eigen::MatrixXd& P = gains.P[i][k];
        const Eigen::VectorXd x = path.X.col(i);
        const Eigen::VectorXd u = path.u.col(i);
        const Eigen::VectorXd Y = P * x;
        const Eigen::VectorXd Z = P * (c.C * x + c.D * u);
        const Eigen::VectorXd F = c.B.transpose() * Y + c.D.transpose() * Z + c.S * x + c.R * u;
        out.max_residual = std::max(out.max_residual, F.norm());
        out.max_state_norm = std::max(out.max_state_norm, x.norm());
    }
    out.max_state_norm = std::max(out.max_state_norm, path.X.col(path.steps()).norm());
    return out;
}

inline StationarityResidual stationarity_residual(const PathRecord& path, const FeedbackLaw& law)
{
    return stationarity_residual(path, law.problem(), GainTable::from_law(law, path.steps()));
}

/// Worst relative stationarity residual over closed-loop paths; pure
/// algebra, so the tolerance is 1e-8 relative with no statistical term.
inline CheckResult stationarity_check(const ProblemSpec& problem, const RiccatiGrid& grid, const CheckOptions& opt)
{
    const FeedbackLaw law(problem, grid);
    const GainTable gains = GainTable::from_law(law, opt.N);
    std::vector<double> ratio(opt.paths);
    parallel_for_index(opt.paths, opt.workers, [&](std::size_t p) {
        const auto path = simulate_path(problem, opt.N, gains, opt.seed, p);
        const auto res = stationarity_residual(path, problem, gains);
        ratio[p] = res.max_state_norm > 0.0 ? res.max_residual / res.max_state_norm : res.max_residual;
    });
    double worst = 0.0;
    for (double r : ratio)
        worst = std::max(worst, r);
    CheckResult r;
    r.name = "stationarity";
    r.statistic = worst;
    r.tolerance = 1e-8;
    r.passed = worst <= 1e-8;
    r.n = opt.paths;
    r.seed = opt.seed;
    r.note = "max ||F|| / max ||X|| over paths";
    return r;
}

/// Piecewise-constant random table on `pieces` equal blocks, entries uniform
/// in [-1, 1], scaled so that int |v|^2 ds = norm_sq.
inline ControlTable random_control_table(int m, int N, double horizon, int pieces, double norm_sq, Engine& stream)
{
    pieces = std::clamp(pieces, 1, N);
    std::uniform_real_distribution<double> uniform(-1.0, 1.0);
    std::vector<Eigen::VectorXd> levels(pieces, Eigen::VectorXd(m));
    for (auto& level : levels)
        for (int j = 0; j < m; ++j)
            level(j) = uniform(stream);
    ControlTable table;
    table.u.resize(N);
    for (int i = 0; i < N; ++i)
        table.u[i] = levels[static_cast<std::size_t>(i) * pieces / N];
    const double energy = table.energy(horizon / N);
    if (energy > 0.0)
        for (auto& v : table.u)
            v *= std::sqrt(norm_sq / energy);
    return table;
}

struct PerturbationResult {
    std::vector<MCEstimate> deltas;
    std::vector<double> norms_sq;
    /// min_k Delta_k / ||v_k||^2: an empirical lower-bound estimate of the
    /// convexity constant.
    double empirical_epsilon = std::numeric_limits<double>::infinity();
    CheckResult check;
};

/// Delta_k = J(u* + v_k) - J(u*) with u* the optimal open-loop control of
/// each path (the closed-loop control recorded along the optimal state) and
/// common random numbers for both runs. Passes when every
/// Delta_k >= -3 stderr_k.
inline PerturbationResult perturbation_test(const ProblemSpec& problem, const RiccatiGrid& grid,
                                            std::span<const ControlTable> directions, const CheckOptions& opt)
{
    const FeedbackLaw law(problem, grid);
    const GainTable gains = GainTable::from_law(law, opt.N);
    const double h = problem.horizon / opt.N;
    PerturbationResult out;
    out.check.name = "perturbation";
    out.check.passed = true;
    out.check.statistic = std::numeric_limits<double>::infinity();
    out.check.n = opt.paths;
    out.check.seed = opt.seed;
    double worst_margin = std::numeric_limits<double>::infinity();
    for (const auto& v : directions) {
        const auto est = mc_estimate(opt.paths, opt.seed, opt.workers, [&](std::size_t p) {
            const auto optimal = simulate_path(problem, opt.N, gains, opt.seed, p);
            ControlTable perturbed;
            perturbed.u.resize(opt.N);
            for (int i = 0; i < opt.N; ++i)
                perturbed.u[i] = optimal.u.col(i) + v.u[i];
            const auto moved = simulate_path(problem, opt.N, perturbed, opt.seed, p);
            return moved.cost() - optimal.cost();
        });
        const double norm_sq = v.energy(h);
        out.deltas.push_back(est);
        out.norms_sq.push_back(norm_sq);
        if (norm_sq > 0.0)
            out.empirical_epsilon = std::min(out.empirical_epsilon, est.mean / norm_sq);
        const double margin = est.mean + 3.0 * est.stderr_;
        if (margin < 0.0)
            out.check.passed = false;
        if (margin < worst_margin) {
            worst_margin = margin;
            out.check.statistic = est.mean;
            out.check.stderr_term = 3.0 * est.stderr_;
        }
    }
    out.check.tolerance = out.check.stderr_term;
    out.check.note = "statistic = min Delta_k; pass iff every Delta_k >= -3 stderr_k; empirical_epsilon=" +
                     std::to_string(out.empirical_epsilon);
    return out;
}

inline PerturbationResult perturbation_test(const ProblemSpec& problem, const RiccatiGrid& grid, int K,
                                            const CheckOptions& opt, double norm_sq = 1.0)
{
    if (K < 5)
        throw Error(ErrorKind::InvalidArgument, "perturbation_test needs K >= 5 directions");
    std::vector<ControlTable> directions;
    for (int k = 0; k < K; ++k) {
        Engine stream = make_stream(opt.seed, static_cast<std::uint64_t>(k), Lane::Control);
        directions.push_back(random_control_table(problem.m, opt.N, problem.horizon, 10, norm_sq, stream));
    }
    return perturbation_test(problem, grid, directions, opt);
}

/// Solution M of the coupled Lyapunov system (Riccati without the quadratic
/// term): the zero-control cost is <M(0, i0) x0, x0>.
struct LyapunovGrid {
    std::vector<double> times;
    std::vector<std::vector<Eigen::MatrixXd>> M;
};

inline LyapunovGrid lyapunov_solve(const ProblemSpec& problem, int N)
{
    LyapunovGrid out;
    out.times = detail::uniform_nodes(problem.horizon, N);
    out.M = detail::integrate_backward(problem, N, false, 0.0);
    return out;
}

inline CheckResult lyapunov_identity_check(const ProblemSpec& problem, const LyapunovGrid& lyap,
                                           const CheckOptions& opt)
{
    const GainTable zero = GainTable::zero(problem, opt.N);
    const MCEstimate est = mc_cost(problem, zero, opt.N, opt.paths, opt.seed, opt.workers);
    const double target = quadratic_form(lyap.M.front()[problem.i0], problem.x0);
    const double e_n = discrete_scheme_moments(problem, zero).expected_cost;
    const double e_2n = discrete_scheme_moments(problem, GainTable::zero(problem, 2 * opt.N)).expected_cost;

    CheckResult r;
    r.name = "lyapunov_identity";
    r.statistic = std::abs(est.mean - target);
    r.stderr_term = 3.0 * est.stderr_;
    r.bias_allowance = richardson_allowance(e_n, e_2n);
    r.tolerance = r.stderr_term + r.bias_allowance;
    r.passed = r.statistic <= r.tolerance;
    r.n = est.n;
    r.seed = opt.seed;
    r.note = "mc_mean=" + std::to_string(est.mean) + " target=" + std::to_string(target);
    return r;
}

struct ConvexityProbe {
    std::vector<double> ratios;
    std::vector<double> ratio_stderr;
    /// Empirical lower-bound estimate of the uniform convexity constant.
    double min_ratio = std::numeric_limits<double>::infinity();
    CheckResult check;
};

inline ConvexityProbe convexity_probe(const ProblemSpec& problem, std::span<const ControlTable> controls,
                                      const CheckOptions& opt)
{
    ProblemSpec from_zero = problem;
    from_zero.x0 = Eigen::VectorXd::Zero(problem.n);
    const double h = problem.horizon / opt.N;
    ConvexityProbe out;
    out.check.name = "convexity_probe";
    out.check.passed = true;
    out.check.n = opt.paths;
    out.check.seed = opt.seed;
    for (const auto& u : controls) {
        const double energy = u.energy(h);
        if (!(energy > 0.0))
            throw Error(ErrorKind::InvalidArgument, "convexity probe controls must be non-zero");
        const MCEstimate est = mc_cost(from_zero, u, opt.N, opt.paths, opt.seed, opt.workers);
        const double ratio = est.mean / energy;
        const double se = est.stderr_ / energy;
        out.ratios.push_back(ratio);
        out.ratio_stderr.push_back(se);
        if (ratio < out.min_ratio) {
            out.min_ratio = ratio;
            out.check.statistic = ratio;
            out.check.stderr_term = 3.0 * se;
        }
        if (ratio < -3.0 * se)
            out.check.passed = false;
    }
    out.check.tolerance = out.check.stderr_term;
    out.check.note = "statistic = min_k J0(u_k) / E int |u_k|^2 (empirical lower-bound estimate)";
    return out;
}

inline ConvexityProbe convexity_probe(const ProblemSpec& problem, int K, const CheckOptions& opt)
{
    if (K < 5)
        throw Error(ErrorKind::InvalidArgument, "convexity_probe needs K >= 5 controls");
    std::vector<ControlTable> controls;
    for (int k = 0; k < K; ++k) {
        Engine stream = make_stream(splitmix64(opt.seed ^ 0x636f6e766578ULL), static_cast<std::uint64_t>(k),
                                    Lane::Control);
        controls.push_back(random_control_table(problem.m, opt.N, problem.horizon, 10, 1.0, stream));
    }
    return convexity_probe(problem, controls, opt);
}

inline CheckResult rhat_certificate_check(const RiccatiGrid& grid)
{
    CheckResult r;
    r.name = "rhat_certificate";
    r.statistic = rhat_certificate(grid);
    r.tolerance = 0.0;
    r.passed = r.statistic > 0.0;
    r.n = grid.times.size();
    r.note = "epsilon_hat = min eigenvalue of Rhat over the grid; pass iff > 0";
    return r;
}

/// Seed owned by one named check, derived from the run's master seed.
inline std::uint64_t check_seed(std::uint64_t master, std::uint64_t check_index)
{
    return derive_seed(master, check_index, Lane::Control);
}

struct SuiteOptions {
    int N = 200;
    std::size_t paths = 100000;
    std::size_t perturbation_paths = 10000;
    int directions = 10;
    std::uint64_t seed = 0;
    unsigned workers = 1;
};

/// Full verification of an SLQ problem: certificate, value identity,
/// stationarity, perturbation optimality, Lyapunov representation and the
/// convexity probe. A Riccati failure is recorded as a failed check.
inline VerifyReport run_verification(const ProblemSpec& problem, const SuiteOptions& opt)
{
    VerifyReport report;
    auto options_for = [&](std::uint64_t index, std::size_t paths) {
        return CheckOptions{opt.N, paths, check_seed(opt.seed, index), opt.workers};
    };

    std::optional<RiccatiGrid> grid;
    try {
        grid = solve_riccati(problem, opt.N);
    } catch (const Error& e) {
        if (e.category() != ErrorCategory::Numerical)
            throw;
        CheckResult failed;
        failed.name = "riccati_solve";
        failed.statistic = std::numeric_limits<double>::quiet_NaN();
        failed.note = e.what();
        report.checks.push_back(failed);
    }
    if (grid) {
        report.checks.push_back(rhat_certificate_check(*grid));
        report.checks.push_back(value_identity_check(problem, *grid, options_for(1, opt.paths)));
        report.checks.push_back(stationarity_check(problem, *grid, options_for(2, opt.paths)));
        report.checks.push_back(
            perturbation_test(problem, *grid, opt.directions, options_for(3, opt.perturbation_paths)).check);
    }
    const LyapunovGrid lyap = lyapunov_solve(problem, opt.N);
    report.checks.push_back(lyapunov_identity_check(problem, lyap, options_for(4, opt.paths)));
    report.checks.push_back(convexity_probe(problem, opt.directions, options_for(5, opt.perturbation_paths)).check);
    return report;
}

} // namespace rslq
