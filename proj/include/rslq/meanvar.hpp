#pragma once

// Mean-variance portfolio selection in a regime-switching market with one
// bond (rate r) and one stock (appreciation b_k, volatility sigma_k).
//
// With gamma = d + mu and X~(s) = X(s) - gamma exp(-int_s^T r), minimizing
// Var X(T) subject to E X(T) = d reduces to minimizing E X~(T)^2 for the SLQ
// problem A = r, B = b - r, C = 0, D = sigma, Q = S = R = 0, G = 1.
//
// Mean and second moment of the optimally controlled X~ are propagated with
// the forward (Kolmogorov) equations, which couple regimes through the
// transposed generator: for m_k = E[X~ 1{alpha = k}], v_k = E[X~^2 1{alpha = k}],
//   m_k' = a_k m_k + sum_l lambda_lk m_l,       a_k = r + (b_k - r) Theta_k,
//   v_k' = (2 a_k + sigma_k^2 Theta_k^2) v_k + sum_l lambda_lk v_l.

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rslq/error.hpp"
#include "rslq/model.hpp"
#include "rslq/riccati.hpp"
#include "rslq/simulate.hpp"
#include "rslq/verify.hpp"

namespace rslq {

struct MarketSegment {
    double t_start = 0.0;
    double r = 0.0;
    std::vector<double> b;
    std::vector<double> sigma;
};

struct RawMarket {
    double horizon = 0.0;
    Eigen::MatrixXd generator;
    std::vector<MarketSegment> segments;
    double delta = 0.0;
    double x0 = 0.0;
    int i0 = 0;
};

struct MarketSpec {
    double horizon = 0.0;
    GeneratorMatrix generator;
    std::vector<MarketSegment> segments;
    double delta = 0.0;
    double x0 = 0.0;
    int i0 = 0;

    int regimes() const { return generator.size(); }
};

inline MarketSpec validate_market(const RawMarket& raw)
{
    MarketSpec market;
    if (!(raw.horizon > 0.0) || !std::isfinite(raw.horizon))
        throw Error(ErrorKind::BadSegments, "market horizon must be positive");
    market.horizon = raw.horizon;
    market.generator = validate_generator(raw.generator);
    const int K = market.generator.size();
    if (raw.segments.empty() || raw.segments.front().t_start != 0.0)
        throw Error(ErrorKind::BadSegments, "market segments must start at 0");
    for (std::size_t j = 0; j < raw.segments.size(); ++j) {
        const auto& seg = raw.segments[j];
        if (j > 0 && !(seg.t_start > raw.segments[j - 1].t_start))
            throw Error(ErrorKind::BadSegments, "market segment starts must increase");
        if (!(seg.t_start < raw.horizon))
            throw Error(ErrorKind::BadSegments, "market segment starts after T");
        if (!(seg.r > 0.0) || !std::isfinite(seg.r))
            throw Error(ErrorKind::InvalidArgument, "interest rate must be positive and finite");
        if (static_cast<int>(seg.b.size()) != K || static_cast<int>(seg.sigma.size()) != K)
            throw Error(ErrorKind::DimensionMismatch, "need b and sigma for every regime");
        for (int k = 0; k < K; ++k) {
            if (!std::isfinite(seg.b[k]) || !std::isfinite(seg.sigma[k]))
                throw Error(ErrorKind::InvalidArgument, "market coefficients must be finite");
            if (!(seg.sigma[k] * seg.sigma[k] >= raw.delta))
                throw Error(ErrorKind::InvalidArgument, "sigma^2 below the declared lower bound delta");
        }
    }
    if (!(raw.delta > 0.0))
        throw Error(ErrorKind::InvalidArgument, "delta must be positive");
    if (!(raw.x0 > 0.0))
        throw Error(ErrorKind::InvalidArgument, "initial wealth must be positive");
    if (raw.i0 < 0 || raw.i0 >= K)
        throw Error(ErrorKind::InvalidArgument, "initial regime out of range");
    market.segments = raw.segments;
    market.delta = raw.delta;
    market.x0 = raw.x0;
    market.i0 = raw.i0;
    return market;
}

/// The shifted-wealth SLQ problem, started from x~0.
inline ProblemSpec to_problem(const MarketSpec& market, double x_tilde0)
{
    RawProblem raw;
    raw.n = raw.m = 1;
    raw.regimes = market.regimes();
    raw.horizon = market.horizon;
    raw.generator = market.generator.rates();
    for (const auto& seg : market.segments) {
        raw.segment_starts.push_back(seg.t_start);
        std::vector<CoefficientSet> row;
        for (int k = 0; k < market.regimes(); ++k) {
            CoefficientSet c = CoefficientSet::zeros(1, 1);
            c.A(0, 0) = seg.r;
            c.B(0, 0) = seg.b[k] - seg.r;
            c.D(0, 0) = seg.sigma[k];
            row.push_back(c);
        }
        raw.coefficients.push_back(std::move(row));
    }
    raw.terminal_weights.assign(market.regimes(), Eigen::MatrixXd::Ones(1, 1));
    raw.x0 = Eigen::VectorXd::Constant(1, x_tilde0);
    raw.i0 = market.i0;
    return validate_problem(raw);
}

/// exp(-int_0^T r ds).
inline double discount_factor(const MarketSpec& market)
{
    double integral = 0.0;
    for (std::size_t j = 0; j < market.segments.size(); ++j) {
        const double end = j + 1 < market.segments.size() ? market.segments[j + 1].t_start : market.horizon;
        integral += market.segments[j].r * (end - market.segments[j].t_start);
    }
    return std::exp(-integral);
}

inline RiccatiGrid mv_riccati(const MarketSpec& market, int N)
{
    // R = 0 is admissible: Rhat = sigma^2 P stays positive while P > 0.
    const ProblemSpec problem = to_problem(market, 1.0);
    RiccatiGrid grid = solve_riccati(problem, N);
    for (std::size_t i = 0; i < grid.P.size(); ++i)
        for (int k = 0; k < grid.regimes(); ++k)
            if (!(grid.P[i][k](0, 0) > 1e-12))
                throw Error(ErrorKind::NonPositiveP, "P(" + std::to_string(grid.times[i]) + ", " +
                                                         std::to_string(k + 1) + ") is not positive");
    return grid;
}

/// kappa = E[X~(T)] / x~0 and rho = E[X~(T)^2] / x~0^2 under the optimal
/// feedback, both started in regime i0.
struct MomentFactors {
    double kappa = 0.0;
    double rho = 0.0;
};

inline MomentFactors mv_moment_odes(const MarketSpec& market, const RiccatiGrid& grid)
{
    const ProblemSpec problem = to_problem(market, 1.0);
    const FeedbackLaw law(problem, grid);
    const int K = market.regimes();
    const int N = grid.intervals();
    const Eigen::MatrixXd lambda_t = market.generator.rates().transpose();

    Eigen::VectorXd m = Eigen::VectorXd::Zero(K);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(K);
    m(market.i0) = 1.0;
    v(market.i0) = 1.0;
    for (int i = 0; i < N; ++i) {
        const double h = grid.times[i + 1] - grid.times[i];
        const double mid = grid.times[i] + 0.5 * h;
        Eigen::MatrixXd Am = lambda_t;
        Eigen::MatrixXd Av = lambda_t;
        for (int k = 0; k < K; ++k) {
            const CoefficientSet& c = coeff_at(problem, mid, k);
            const double theta = law.at(mid, k).Theta(0, 0);
            const double drift = c.A(0, 0) + c.B(0, 0) * theta;
            const double vol = c.D(0, 0) * theta;
            Am(k, k) += drift;
            Av(k, k) += 2.0 * drift + vol * vol;
        }
        auto rk4 = [h](const Eigen::MatrixXd& M, const Eigen::VectorXd& y) -> Eigen::VectorXd {
            const Eigen::VectorXd k1 = M * y;
            const Eigen::VectorXd k2 = M * (y + 0.5 * h * k1);
            const Eigen::VectorXd k3 = M * (y + 0.5 * h * k2);
            const Eigen::VectorXd k4 = M * (y + h * k3);
            return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        };
        m = rk4(Am, m);
        v = rk4(Av, v);
        if (!m.allFinite() || !v.allFinite())
            throw Error(ErrorKind::NonFiniteState, "moment equations left the finite range");
    }
    return {m.sum(), v.sum()};
}

struct LagrangeSolution {
    double mu = 0.0;
    double gamma = 0.0;
    double x_tilde0 = 0.0;
};

/// E X(T) = kappa x~0 + gamma with x~0 = x0 - gamma e^{-int r}, solved for gamma.
inline LagrangeSolution lagrange_solve(const MarketSpec& market, const MomentFactors& factors, double d)
{
    const double disc = discount_factor(market);
    const double denom = 1.0 - factors.kappa * disc;
    if (std::abs(denom) < 1e-12)
        throw Error(ErrorKind::DegenerateConstraint, "expected terminal wealth cannot be steered (b = r)");
    LagrangeSolution out;
    out.gamma = (d - market.x0 * factors.kappa) / denom;
    out.mu = out.gamma - d;
    out.x_tilde0 = market.x0 - out.gamma * disc;
    return out;
}

struct FrontierPoint {
    double d = 0.0;
    double mu = 0.0;
    double gamma = 0.0;
    double x_tilde0 = 0.0;
    double variance = 0.0;
    /// rho x~0^2 from the forward moment equations.
    double second_moment = 0.0;
    /// P(0, i0) x~0^2 from the Riccati solve.
    double riccati_second_moment = 0.0;
    /// Duality form P(0, i0) x~0^2 - mu^2; agrees with variance.
    double riccati_value_check = 0.0;
};

struct FrontierSolution {
    RiccatiGrid grid;
    MomentFactors factors;
    std::vector<FrontierPoint> points;
};

inline FrontierPoint frontier_point(const MarketSpec& market, const RiccatiGrid& grid, const MomentFactors& factors,
                                    double d)
{
    const LagrangeSolution sol = lagrange_solve(market, factors, d);
    FrontierPoint p;
    p.d = d;
    p.mu = sol.mu;
    p.gamma = sol.gamma;
    p.x_tilde0 = sol.x_tilde0;
    const double x2 = sol.x_tilde0 * sol.x_tilde0;
    const double mean_tilde = factors.kappa * sol.x_tilde0;
    p.second_moment = factors.rho * x2;
    p.variance = p.second_moment - mean_tilde * mean_tilde;
    p.riccati_second_moment = grid.P.front()[market.i0](0, 0) * x2;
    p.riccati_value_check = p.riccati_second_moment - sol.mu * sol.mu;
    return p;
}

inline FrontierSolution efficient_frontier(const MarketSpec& market, std::span<const double> targets, int N)
{
    FrontierSolution out;
    out.grid = mv_riccati(market, N);
    out.factors = mv_moment_odes(market, out.grid);
    for (double d : targets) {
        if (!std::isfinite(d))
            throw Error(ErrorKind::InvalidArgument, "frontier targets must be finite");
        out.points.push_back(frontier_point(market, out.grid, out.factors, d));
    }
    return out;
}

struct MeanVarianceCheck {
    double mc_mean = 0.0;
    double mean_stderr = 0.0;
    double mc_variance = 0.0;
    double variance_stderr = 0.0;
    CheckResult mean_check;
    CheckResult variance_check;
};

/// Simulates the optimal closed-loop wealth X = X~ + gamma e^{-int_s^T r} and
/// compares the terminal mean and variance with d and the frontier value.
inline MeanVarianceCheck mv_simulate_check(const MarketSpec& market, const RiccatiGrid& grid,
                                           const FrontierPoint& point, const CheckOptions& opt)
{
    const ProblemSpec problem = to_problem(market, point.x_tilde0);
    const FeedbackLaw law(problem, grid);
    const GainTable gains = GainTable::from_law(law, opt.N);
    std::vector<double> terminal(opt.paths);
    parallel_for_index(opt.paths, opt.workers, [&](std::size_t p) {
        terminal[p] = simulate_path(problem, opt.N, gains, opt.seed, p).X(0, opt.N) + point.gamma;
    });
    const MCEstimate mean = summarize(terminal, opt.seed);
    const double n = static_cast<double>(opt.paths);
    double m2 = 0.0, m4 = 0.0;
    for (double x : terminal) {
        const double dev = (x - mean.mean) * (x - mean.mean);
        m2 += dev;
        m4 += dev * dev;
    }
    m2 /= n;
    m4 /= n;

    MeanVarianceCheck out;
    out.mc_mean = mean.mean;
    out.mean_stderr = mean.stderr_;
    out.mc_variance = m2 * n / (n - 1.0);
    out.variance_stderr = std::sqrt(std::max(0.0, m4 - m2 * m2) / n);

    auto discrete = [&](int N) {
        const auto mom = discrete_scheme_moments(problem, GainTable::from_law(law, N));
        const double mean_x = mom.terminal_mean(0) + point.gamma;
        const double var = mom.terminal_second_moment(0, 0) - mom.terminal_mean(0) * mom.terminal_mean(0);
        return std::pair{mean_x, var};
    };
    const auto [mean_n, var_n] = discrete(opt.N);
    const auto [mean_2n, var_2n] = discrete(2 * opt.N);

    auto& mc = out.mean_check;
    mc.name = "mv_mean";
    mc.statistic = std::abs(out.mc_mean - point.d);
    mc.stderr_term = 3.0 * out.mean_stderr;
    mc.bias_allowance = richardson_allowance(mean_n, mean_2n);
    mc.tolerance = mc.stderr_term + mc.bias_allowance;
    mc.passed = mc.statistic <= mc.tolerance;
    mc.n = opt.paths;
    mc.seed = opt.seed;
    mc.note = "mc_mean=" + std::to_string(out.mc_mean) + " target=" + std::to_string(point.d);

    auto& vc = out.variance_check;
    vc.name = "mv_variance";
    vc.statistic = std::abs(out.mc_variance - point.variance);
    vc.stderr_term = 3.0 * out.variance_stderr;
    vc.bias_allowance = richardson_allowance(var_n, var_2n);
    vc.tolerance = vc.stderr_term + vc.bias_allowance;
    vc.passed = vc.statistic <= vc.tolerance;
    vc.n = opt.paths;
    vc.seed = opt.seed;
    vc.note = "mc_var=" + std::to_string(out.mc_variance) + " target=" + std::to_string(point.variance);
    return out;
}

} // namespace rslq
