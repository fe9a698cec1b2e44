#pragma once

// Joint simulation of (W, alpha, X, u) on a uniform grid. The chain is
// sampled exactly and read at the left endpoint of every step; controls are
// evaluated at left endpoints as well (explicit Euler-Maruyama).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rslq/chain.hpp"
#include "rslq/error.hpp"
#include "rslq/model.hpp"
#include "rslq/random.hpp"
#include "rslq/riccati.hpp"

namespace rslq {

struct PathRecord {
    std::vector<double> times;
    std::vector<double> dW;
    ChainPath chain;
    std::vector<int> regimes;
    /// States, one column per node (n x (N+1)).
    Eigen::MatrixXd X;
    /// Controls at left endpoints, one column per step (m x N).
    Eigen::MatrixXd u;
    double running_cost = 0.0;
    double terminal_cost = 0.0;

    double cost() const { return running_cost + terminal_cost; }
    int steps() const { return static_cast<int>(dW.size()); }
};

struct MCEstimate {
    double mean = 0.0;
    double stderr_ = 0.0;
    std::size_t n = 0;
    std::uint64_t seed = 0;
};

/// Mean and standard error (sample std / sqrt(n)) accumulated in index order.
inline MCEstimate summarize(std::span<const double> samples, std::uint64_t seed)
{
    if (samples.size() < 2)
        throw Error(ErrorKind::EmptySample, "an MC estimate needs at least two samples");
    MCEstimate est;
    est.n = samples.size();
    est.seed = seed;
    if (std::all_of(samples.begin(), samples.end(), [&](double x) { return x == samples.front(); })) {
        est.mean = samples.front();
        return est;
    }
    double sum = 0.0;
    for (double x : samples)
        sum += x;
    est.mean = sum / static_cast<double>(est.n);
    double ss = 0.0;
    for (double x : samples)
        ss += (x - est.mean) * (x - est.mean);
    est.stderr_ = std::sqrt(ss / static_cast<double>(est.n - 1) / static_cast<double>(est.n));
    return est;
}

inline Eigen::VectorXd euler_maruyama_step(const Eigen::VectorXd& x, const Eigen::VectorXd& u, const CoefficientSet& c,
                                           double dW, double h)
{
    if (!(h > 0.0))
        throw Error(ErrorKind::InvalidArgument, "step size must be positive");
    Eigen::VectorXd next = x + (c.A * x + c.B * u) * h + (c.C * x + c.D * u) * dW;
    if (!next.allFinite())
        throw Error(ErrorKind::NonFiniteState, "state left the finite range");
    return next;
}

/// Linear feedback u_i = Theta(t_i, k) x_i tabulated on a simulation grid,
/// together with the P each gain was solved from.
struct GainTable {
    std::vector<double> times;
    std::vector<std::vector<Eigen::MatrixXd>> Theta;
    std::vector<std::vector<Eigen::MatrixXd>> P;

    static GainTable from_law(const FeedbackLaw& law, int N)
    {
        GainTable table;
        table.times = detail::uniform_nodes(law.problem().horizon, N);
        const int K = law.problem().regimes;
        table.Theta.resize(N + 1, std::vector<Eigen::MatrixXd>(K));
        table.P.resize(N + 1, std::vector<Eigen::MatrixXd>(K));
        for (int i = 0; i <= N; ++i)
            for (int k = 0; k < K; ++k) {
                auto point = law.at(table.times[i], k);
                table.Theta[i][k] = std::move(point.Theta);
                table.P[i][k] = std::move(point.P);
            }
        return table;
    }

    static GainTable zero(const ProblemSpec& problem, int N)
    {
        GainTable table;
        table.times = detail::uniform_nodes(problem.horizon, N);
        table.Theta.assign(N + 1, std::vector<Eigen::MatrixXd>(problem.regimes,
                                                               Eigen::MatrixXd::Zero(problem.m, problem.n)));
        table.P.assign(N + 1, std::vector<Eigen::MatrixXd>(problem.regimes,
                                                           Eigen::MatrixXd::Zero(problem.n, problem.n)));
        return table;
    }

    int intervals() const { return static_cast<int>(times.size()) - 1; }

    void operator()(int step, double, int k, const Eigen::Ref<const Eigen::VectorXd>& x,
                    Eigen::Ref<Eigen::VectorXd> u) const
    {
        u.noalias() = Theta[step][k] * x;
    }
};

/// Open-loop control: u_i given per step, identical in every regime.
struct ControlTable {
    std::vector<Eigen::VectorXd> u;

    void operator()(int step, double, int, const Eigen::Ref<const Eigen::VectorXd>&,
                    Eigen::Ref<Eigen::VectorXd> out) const
    {
        out = u[step];
    }

    /// E int |u|^2 ds for a deterministic table on a step of length h.
    double energy(double h) const
    {
        double e = 0.0;
        for (const auto& v : u)
            e += v.squaredNorm() * h;
        return e;
    }
};

/// Simulates one path of the controlled system. The path's chain and
/// Brownian draws come from stream(seed, path_index), so two policies run
/// with the same (seed, path_index) see common random numbers.
///
/// A policy is called as policy(step, t, regime, x, u_out) and writes the
/// control for the step starting at t into u_out.
template <typename Policy>
PathRecord simulate_path(const ProblemSpec& problem, int N, const Policy& policy, std::uint64_t seed,
                         std::uint64_t path_index)
{
    if (N < 1)
        throw Error(ErrorKind::InvalidArgument, "simulation grid needs N >= 1");
    PathRecord path;
    path.times = detail::uniform_nodes(problem.horizon, N);
    const double h = problem.horizon / N;

    Engine chain_stream = make_stream(seed, path_index, Lane::Chain);
    path.chain = sample_chain_path(problem.generator, problem.i0, 0.0, problem.horizon, chain_stream);

    Engine brownian = make_stream(seed, path_index, Lane::Brownian);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double sqrt_h = std::sqrt(h);
    path.dW.resize(N);
    for (int i = 0; i < N; ++i)
        path.dW[i] = sqrt_h * normal(brownian);

    path.regimes.resize(N + 1);
    path.X.resize(problem.n, N + 1);
    path.u.resize(problem.m, N);
    path.X.col(0) = problem.x0;
    Eigen::VectorXd Qx(problem.n), Sx(problem.m), Ru(problem.m), drift(problem.n), diffusion(problem.n);
    std::size_t next_jump = 0;
    int k = path.chain.initial;
    for (int i = 0; i < N; ++i) {
        const double t = path.times[i];
        while (next_jump < path.chain.jump_times.size() && path.chain.jump_times[next_jump] <= t)
            k = path.chain.states[next_jump++];
        path.regimes[i] = k;
        const CoefficientSet& c = coeff_at(problem, t, k);
        const auto x = path.X.col(i);
        auto u = path.u.col(i);
        policy(i, t, k, x, u);
        Qx.noalias() = c.Q * x;
        Sx.noalias() = c.S * x;
        Ru.noalias() = c.R * u;
        path.running_cost += (x.dot(Qx) + 2.0 * u.dot(Sx) + u.dot(Ru)) * h;
        drift.noalias() = c.A * x;
        drift.noalias() += c.B * u;
        diffusion.noalias() = c.C * x;
        diffusion.noalias() += c.D * u;
        path.X.col(i + 1) = x + drift * h + diffusion * path.dW[i];
    }
    if (!path.X.allFinite())
        throw Error(ErrorKind::NonFiniteState, "state left the finite range");
    path.regimes[N] = path.chain.state_at(problem.horizon);
    const auto xT = path.X.col(N);
    path.terminal_cost = xT.dot(problem.terminal_weight(path.regimes[N]) * xT);
    if (!std::isfinite(path.running_cost) || !std::isfinite(path.terminal_cost))
        throw Error(ErrorKind::NonFiniteState, "path cost is not finite");
    return path;
}

inline PathRecord simulate_closed_loop(const ProblemSpec& problem, const FeedbackLaw& law, int N, std::uint64_t seed,
                                       std::uint64_t path_index = 0)
{
    if (law.grid().intervals() < N)
        throw Error(ErrorKind::InvalidArgument, "feedback law must be solved on a grid at least as fine as N");
    return simulate_path(problem, N, GainTable::from_law(law, N), seed, path_index);
}

/// Cost of a finished path recomputed from its states and controls:
/// <G X_N, X_N> + sum_i <[Q S'; S R](X_i, u_i), (X_i, u_i)> h.
inline double evaluate_cost(const PathRecord& path, const ProblemSpec& problem)
{
    const int N = path.steps();
    const double h = problem.horizon / N;
    double running = 0.0;
    for (int i = 0; i < N; ++i) {
        const CoefficientSet& c = coeff_at(problem, path.times[i], path.regimes[i]);
        const Eigen::VectorXd x = path.X.col(i);
        const Eigen::VectorXd u = path.u.col(i);
        running += (x.dot(c.Q * x) + 2.0 * u.dot(c.S * x) + u.dot(c.R * u)) * h;
    }
    const Eigen::VectorXd xT = path.X.col(N);
    return running + xT.dot(problem.terminal_weight(path.regimes[N]) * xT);
}

/// Evaluates fn(path_index) for every path and summarizes in index order.
template <typename Fn>
MCEstimate mc_estimate(std::size_t paths, std::uint64_t seed, unsigned workers, Fn&& fn)
{
    std::vector<double> samples(paths);
    parallel_for_index(paths, workers, [&](std::size_t p) { samples[p] = fn(p); });
    return summarize(samples, seed);
}

template <typename Policy>
MCEstimate mc_cost(const ProblemSpec& problem, const Policy& policy, int N, std::size_t paths, std::uint64_t seed,
                   unsigned workers = 1)
{
    if (paths < 100)
        throw Error(ErrorKind::InvalidArgument, "mc_cost needs at least 100 paths");
    return mc_estimate(paths, seed, workers,
                       [&](std::size_t p) { return simulate_path(problem, N, policy, seed, p).cost(); });
}

inline MCEstimate mc_cost(const ProblemSpec& problem, const FeedbackLaw& law, int N, std::size_t paths,
                          std::uint64_t seed, unsigned workers = 1)
{
    return mc_cost(problem, GainTable::from_law(law, N), N, paths, seed, workers);
}

/// Exact first and second moments of the discrete closed-loop scheme
/// X_{i+1} = (I + (A + B Theta) h) X_i + (C + D Theta) X_i dW_i with the
/// grid-projected chain, which is a discrete-time chain with transition
/// matrix exp(lambda h). No sampling error; used to calibrate the O(h)
/// discretization allowance of Monte Carlo checks.
struct DiscreteMoments {
    double expected_cost = 0.0;
    Eigen::VectorXd terminal_mean;
    Eigen::MatrixXd terminal_second_moment;
};

inline DiscreteMoments discrete_scheme_moments(const ProblemSpec& problem, const GainTable& gains)
{
    const int N = gains.intervals();
    const int K = problem.regimes;
    const double h = problem.horizon / N;
    const Eigen::MatrixXd trans = problem.generator.transition_matrix(h);
    std::vector<Eigen::VectorXd> m(K, Eigen::VectorXd::Zero(problem.n));
    std::vector<Eigen::MatrixXd> S(K, Eigen::MatrixXd::Zero(problem.n, problem.n));
    m[problem.i0] = problem.x0;
    S[problem.i0] = problem.x0 * problem.x0.transpose();
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(problem.n, problem.n);

    DiscreteMoments out;
    for (int i = 0; i < N; ++i) {
        const double t = gains.times[i];
        std::vector<Eigen::VectorXd> m_next(K, Eigen::VectorXd::Zero(problem.n));
        std::vector<Eigen::MatrixXd> S_next(K, Eigen::MatrixXd::Zero(problem.n, problem.n));
        for (int k = 0; k < K; ++k) {
            const CoefficientSet& c = coeff_at(problem, t, k);
            const Eigen::MatrixXd& Th = gains.Theta[i][k];
            const Eigen::MatrixXd L = c.Q + c.S.transpose() * Th + Th.transpose() * c.S + Th.transpose() * c.R * Th;
            out.expected_cost += (L * S[k]).trace() * h;
            const Eigen::MatrixXd F = I + (c.A + c.B * Th) * h;
            const Eigen::MatrixXd H = c.C + c.D * Th;
            const Eigen::VectorXd fm = F * m[k];
            const Eigen::MatrixXd fs = F * S[k] * F.transpose() + h * H * S[k] * H.transpose();
            for (int l = 0; l < K; ++l) {
                if (trans(k, l) == 0.0)
                    continue;
                m_next[l] += trans(k, l) * fm;
                S_next[l] += trans(k, l) * fs;
            }
        }
        m = std::move(m_next);
        S = std::move(S_next);
    }
    out.terminal_mean = Eigen::VectorXd::Zero(problem.n);
    out.terminal_second_moment = Eigen::MatrixXd::Zero(problem.n, problem.n);
    for (int k = 0; k < K; ++k) {
        out.expected_cost += (problem.terminal_weight(k) * S[k]).trace();
        out.terminal_mean += m[k];
        out.terminal_second_moment += S[k];
    }
    return out;
}

} // namespace rslq
