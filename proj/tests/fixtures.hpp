#pragma once

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "rslq/rslq.hpp"

namespace fixtures {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline MatrixXd scalar(double v)
{
    return MatrixXd::Constant(1, 1, v);
}

inline rslq::RawProblem single_segment(int n, int m, int regimes, double T, const MatrixXd& gen)
{
    rslq::RawProblem r;
    r.n = n;
    r.m = m;
    r.regimes = regimes;
    r.horizon = T;
    r.generator = gen;
    r.segment_starts = {0.0};
    r.coefficients = {std::vector<rslq::CoefficientSet>(regimes, rslq::CoefficientSet::zeros(n, m))};
    r.terminal_weights.assign(regimes, MatrixXd::Zero(n, n));
    r.x0 = VectorXd::Ones(n);
    r.i0 = 0;
    return r;
}

/// n = m = 1, A = C = Q = S = 0, B = R = G = 1, T = 1: P(t) = 1 / (2 - t).
inline rslq::ProblemSpec scalar_problem()
{
    auto r = single_segment(1, 1, 1, 1.0, scalar(0.0));
    r.coefficients[0][0].B(0, 0) = 1.0;
    r.coefficients[0][0].R(0, 0) = 1.0;
    r.terminal_weights[0] = scalar(1.0);
    return rslq::validate_problem(r);
}

inline double scalar_exact(double t)
{
    return 1.0 / (2.0 - t);
}

/// Two regimes, no dynamics, R = 1, G = (2, 0), unit switching rates.
/// P_1 + P_2 = 2 and P_1 - P_2 = 2 e^{-2 (T - t)}.
inline rslq::ProblemSpec coupling_problem()
{
    MatrixXd gen(2, 2);
    gen << -1, 1, 1, -1;
    auto r = single_segment(1, 1, 2, 1.0, gen);
    for (auto& c : r.coefficients[0])
        c.R(0, 0) = 1.0;
    r.terminal_weights = {scalar(2.0), scalar(0.0)};
    return rslq::validate_problem(r);
}

inline double coupling_exact(int k, double t)
{
    const double diff = 2.0 * std::exp(-2.0 * (1.0 - t));
    return k == 0 ? 1.0 + 0.5 * diff : 1.0 - 0.5 * diff;
}

/// Double integrator LQR, deterministic.
inline rslq::ProblemSpec lqr_problem()
{
    auto r = single_segment(2, 1, 1, 1.0, scalar(0.0));
    auto& c = r.coefficients[0][0];
    c.A << 0, 1, 0, 0;
    c.B << 0, 1;
    c.Q = MatrixXd::Identity(2, 2);
    c.R(0, 0) = 1.0;
    r.terminal_weights[0] = MatrixXd::Identity(2, 2);
    r.x0 = VectorXd(2);
    r.x0 << 1.0, 0.0;
    return rslq::validate_problem(r);
}

/// Two regimes, two segments, every coefficient active.
inline rslq::ProblemSpec stochastic_problem()
{
    MatrixXd gen(2, 2);
    gen << -1, 1, 2, -2;
    auto r = single_segment(2, 1, 2, 1.0, gen);
    auto& a = r.coefficients[0][0];
    a.A << 0.1, 0.5, 0.0, -0.2;
    a.B << 0.0, 1.0;
    a.C << 0.2, 0.0, 0.0, 0.1;
    a.D << 0.1, 0.3;
    a.Q = MatrixXd::Identity(2, 2);
    a.R(0, 0) = 1.0;
    auto& b = r.coefficients[0][1];
    b.A << -0.1, 0.0, 0.3, 0.1;
    b.B << 1.0, 0.5;
    b.C << 0.1, 0.0, 0.0, 0.2;
    b.D << 0.2, 0.0;
    b.Q << 2.0, 0.0, 0.0, 0.5;
    b.S << 0.1, 0.0;
    b.R(0, 0) = 0.5;
    r.segment_starts = {0.0, 0.5};
    r.coefficients.push_back(r.coefficients[0]);
    r.coefficients[1][0].Q(0, 0) = 1.5;
    r.terminal_weights = {MatrixXd::Identity(2, 2), MatrixXd::Identity(2, 2)};
    r.terminal_weights[1](0, 0) = 2.0;
    r.x0 << 1.0, -0.5;
    return rslq::validate_problem(r);
}

/// G = -10, B = 1, R = 0.01: not uniformly convex.
inline rslq::ProblemSpec nonconvex_problem()
{
    auto r = single_segment(1, 1, 1, 1.0, scalar(0.0));
    r.coefficients[0][0].B(0, 0) = 1.0;
    r.coefficients[0][0].R(0, 0) = 0.01;
    r.terminal_weights[0] = scalar(-10.0);
    return rslq::validate_problem(r);
}

/// One-regime market r = 0.06, b = 0.12, sigma = 0.2, T = 1, x0 = 1.
inline rslq::MarketSpec reference_market()
{
    rslq::RawMarket raw;
    raw.horizon = 1.0;
    raw.generator = scalar(0.0);
    raw.segments = {rslq::MarketSegment{0.0, 0.06, {0.12}, {0.2}}};
    raw.delta = 1e-6;
    raw.x0 = 1.0;
    raw.i0 = 0;
    return rslq::validate_market(raw);
}

/// Closed-form minimum variance of the one-regime market.
inline double market_variance(double d, double x0, double r, double theta_sq, double T)
{
    const double gap = d - x0 * std::exp(r * T);
    return gap * gap / (std::exp(theta_sq * T) - 1.0);
}

/// y-independent two-regime scalar model for the regression solver.
inline rslq::RawRandomCoefficientModel constant_random_model()
{
    rslq::RawRandomCoefficientModel raw;
    raw.horizon = 1.0;
    raw.generator = MatrixXd(2, 2);
    raw.generator << -1, 1, 2, -2;
    raw.driver = {0.0, 1.0, 0.0, 0.3, -2.0, 2.0};
    auto constant = [](double v) { return rslq::Polynomial{{v}}; };
    rslq::RegimeCoefficientMaps m1{constant(0.1), constant(1.0), constant(0.2), constant(0.3),
                                   constant(1.0), constant(0.0), constant(1.0), constant(1.0)};
    rslq::RegimeCoefficientMaps m2{constant(-0.2), constant(0.5), constant(0.1), constant(-0.2),
                                   constant(2.0), constant(0.1), constant(0.5), constant(2.0)};
    raw.maps = {m1, m2};
    return raw;
}

/// Seeded generator for property tests.
inline std::mt19937_64 property_rng(std::uint64_t seed)
{
    return std::mt19937_64(seed);
}

inline MatrixXd random_matrix(std::mt19937_64& rng, int rows, int cols, double scale)
{
    std::uniform_real_distribution<double> u(-scale, scale);
    MatrixXd M(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            M(i, j) = u(rng);
    return M;
}

inline MatrixXd random_psd(std::mt19937_64& rng, int n, double scale)
{
    const MatrixXd L = random_matrix(rng, n, n, scale);
    return L * L.transpose();
}

inline MatrixXd random_generator(std::mt19937_64& rng, int D, double max_rate)
{
    std::uniform_real_distribution<double> u(0.0, max_rate);
    MatrixXd gen = MatrixXd::Zero(D, D);
    for (int k = 0; k < D; ++k) {
        for (int l = 0; l < D; ++l)
            if (l != k)
                gen(k, l) = u(rng);
        gen(k, k) = -gen.row(k).sum();
    }
    return gen;
}

} // namespace fixtures
