#pragma once

// Regime-coupled Riccati system for deterministic (per regime, piecewise
// constant in time) coefficients.
//
// With P(., k) deterministic and C^1, Ito's formula for P(s, alpha(s)) leaves
// no Brownian component (Lambda = 0), the jump component is
// zeta_kl = P_l - P_k, and its compensator contributes
// sum_l lambda_kl (P_l - P_k) to the drift. The backward equation becomes
//
//   dP_k/dt = -[ P_k A_k + A_k' P_k + C_k' P_k C_k + Q_k
//                - Shat_k' Rhat_k^{-1} Shat_k + sum_{l != k} lambda_kl (P_l - P_k) ],
//   Shat_k = B_k' P_k + D_k' P_k C_k + S_k,   Rhat_k = R_k + D_k' P_k D_k,
//   P_k(T) = G_k,
//
// and the optimal feedback is Theta_k = -Rhat_k^{-1} Shat_k.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rslq/error.hpp"
#include "rslq/model.hpp"

namespace rslq {

struct RiccatiOptions {
    /// Smallest admissible eigenvalue of Rhat before the solve is declared singular.
    double rhat_floor = 1e-8;
};

inline double min_eigenvalue(const Eigen::MatrixXd& symmetric)
{
    if (symmetric.rows() == 1)
        return symmetric(0, 0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetric, Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
}

inline Eigen::MatrixXd symmetric_part(const Eigen::MatrixXd& M)
{
    return 0.5 * (M + M.transpose());
}

inline Eigen::MatrixXd shat(const CoefficientSet& c, const Eigen::MatrixXd& P)
{
    return c.B.transpose() * P + c.D.transpose() * P * c.C + c.S;
}

inline Eigen::MatrixXd rhat(const CoefficientSet& c, const Eigen::MatrixXd& P)
{
    return symmetric_part(c.R + c.D.transpose() * P * c.D);
}

/// Theta = -Rhat^{-1} Shat through a Cholesky factorisation of Rhat.
/// Throws SingularRhat when Rhat's smallest eigenvalue is below the floor.
inline Eigen::MatrixXd solve_gain(const CoefficientSet& c, const Eigen::MatrixXd& P, double t, int k,
                                  double rhat_floor, double* min_eig_out = nullptr)
{
    const Eigen::MatrixXd R = rhat(c, P);
    const double eig = min_eigenvalue(R);
    if (min_eig_out)
        *min_eig_out = eig;
    if (!(eig >= rhat_floor))
        throw Error(ErrorKind::SingularRhat, "t=" + std::to_string(t) + " regime=" + std::to_string(k + 1) +
                                                 " min_eig=" + std::to_string(eig));
    Eigen::LLT<Eigen::MatrixXd> llt(R);
    if (llt.info() != Eigen::Success)
        throw Error(ErrorKind::SingularRhat, "Cholesky of Rhat failed at t=" + std::to_string(t) +
                                                 " regime=" + std::to_string(k + 1));
    return -llt.solve(shat(c, P));
}

namespace detail {

/// Drift dP_k/dt of the coupled system with the coefficients frozen at
/// `coeffs[k]`. Dropping the quadratic term gives the Lyapunov system.
inline std::vector<Eigen::MatrixXd> coupled_rhs(std::span<const CoefficientSet* const> coeffs,
                                                const GeneratorMatrix& gen, std::span<const Eigen::MatrixXd> P,
                                                double t, bool quadratic, double rhat_floor)
{
    const int regimes = static_cast<int>(P.size());
    std::vector<Eigen::MatrixXd> out(regimes);
    for (int k = 0; k < regimes; ++k) {
        const CoefficientSet& c = *coeffs[k];
        const Eigen::MatrixXd& Pk = P[k];
        Eigen::MatrixXd drift = Pk * c.A + c.A.transpose() * Pk + c.C.transpose() * Pk * c.C + c.Q;
        if (quadratic) {
            const Eigen::MatrixXd R = rhat(c, Pk);
            const double eig = min_eigenvalue(R);
            if (!(eig >= rhat_floor))
                throw Error(ErrorKind::SingularRhat, "t=" + std::to_string(t) + " regime=" +
                                                         std::to_string(k + 1) + " min_eig=" + std::to_string(eig));
            const Eigen::MatrixXd S = shat(c, Pk);
            Eigen::LLT<Eigen::MatrixXd> llt(R);
            drift -= S.transpose() * llt.solve(S);
        }
        for (int l = 0; l < regimes; ++l)
            if (l != k && gen.rate(k, l) != 0.0)
                drift += gen.rate(k, l) * (P[l] - Pk);
        out[k] = symmetric_part(-drift);
    }
    return out;
}

inline void check_finite(std::span<const Eigen::MatrixXd> P, double t)
{
    for (std::size_t k = 0; k < P.size(); ++k)
        if (!P[k].allFinite())
            throw Error(ErrorKind::NonFiniteState,
                        "solution left the finite range at t=" + std::to_string(t) + " regime=" + std::to_string(k + 1));
}

inline std::vector<double> uniform_nodes(double T, int N)
{
    std::vector<double> t(N + 1);
    const double h = T / N;
    for (int i = 0; i < N; ++i)
        t[i] = i * h;
    t[N] = T;
    return t;
}

/// Classical RK4 from P(T) = G backwards on a uniform grid, symmetrising every
/// stage. Coefficients are frozen per step at the step midpoint, so segment
/// breakpoints that lie on the grid are resolved exactly.
inline std::vector<std::vector<Eigen::MatrixXd>> integrate_backward(const ProblemSpec& problem, int N, bool quadratic,
                                                                    double rhat_floor)
{
    if (N < 2)
        throw Error(ErrorKind::InvalidArgument, "grid needs N >= 2");
    const int K = problem.regimes;
    const auto times = uniform_nodes(problem.horizon, N);
    std::vector<std::vector<Eigen::MatrixXd>> nodes(N + 1, std::vector<Eigen::MatrixXd>(K));
    for (int k = 0; k < K; ++k)
        nodes[N][k] = problem.terminal_weight(k);

    std::vector<const CoefficientSet*> coeffs(K);
    std::vector<Eigen::MatrixXd> stage(K);
    for (int i = N - 1; i >= 0; --i) {
        const double t_hi = times[i + 1];
        const double h = times[i + 1] - times[i];
        const double mid = times[i] + 0.5 * h;
        for (int k = 0; k < K; ++k)
            coeffs[k] = &coeff_at(problem, mid, k);
        const auto& P = nodes[i + 1];

        const auto k1 = coupled_rhs(coeffs, problem.generator, P, t_hi, quadratic, rhat_floor);
        for (int k = 0; k < K; ++k)
            stage[k] = symmetric_part(P[k] - 0.5 * h * k1[k]);
        const auto k2 = coupled_rhs(coeffs, problem.generator, stage, mid, quadratic, rhat_floor);
        for (int k = 0; k < K; ++k)
            stage[k] = symmetric_part(P[k] - 0.5 * h * k2[k]);
        const auto k3 = coupled_rhs(coeffs, problem.generator, stage, mid, quadratic, rhat_floor);
        for (int k = 0; k < K; ++k)
            stage[k] = symmetric_part(P[k] - h * k3[k]);
        const auto k4 = coupled_rhs(coeffs, problem.generator, stage, times[i], quadratic, rhat_floor);
        for (int k = 0; k < K; ++k)
            nodes[i][k] = symmetric_part(P[k] - (h / 6.0) * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]));
        check_finite(nodes[i], times[i]);
    }
    return nodes;
}

} // namespace detail

/// dP_k/dt for every regime at time t, with coefficients evaluated by coeff_at.
inline std::vector<Eigen::MatrixXd> riccati_rhs(std::span<const Eigen::MatrixXd> P_all, double t,
                                                const ProblemSpec& problem, const RiccatiOptions& options = {})
{
    if (static_cast<int>(P_all.size()) != problem.regimes)
        throw Error(ErrorKind::DimensionMismatch, "one P per regime required");
    std::vector<const CoefficientSet*> coeffs(problem.regimes);
    for (int k = 0; k < problem.regimes; ++k)
        coeffs[k] = &coeff_at(problem, t, k);
    return detail::coupled_rhs(coeffs, problem.generator, P_all, t, true, options.rhat_floor);
}

/// Solved Riccati system on a uniform grid: P, Theta and the smallest
/// eigenvalue of Rhat, per node and regime.
struct RiccatiGrid {
    std::vector<double> times;
    std::vector<std::vector<Eigen::MatrixXd>> P;
    std::vector<std::vector<Eigen::MatrixXd>> Theta;
    std::vector<std::vector<double>> rhat_min_eig;
    double rhat_floor = 1e-8;

    int intervals() const { return static_cast<int>(times.size()) - 1; }
    int regimes() const { return P.empty() ? 0 : static_cast<int>(P.front().size()); }
    double step() const { return times.back() / intervals(); }
};

inline RiccatiGrid solve_riccati(const ProblemSpec& problem, int N, const RiccatiOptions& options = {})
{
    RiccatiGrid grid;
    grid.rhat_floor = options.rhat_floor;
    grid.times = detail::uniform_nodes(problem.horizon, N);
    grid.P = detail::integrate_backward(problem, N, true, options.rhat_floor);
    grid.Theta.resize(N + 1);
    grid.rhat_min_eig.resize(N + 1);
    for (int i = 0; i <= N; ++i) {
        grid.Theta[i].resize(problem.regimes);
        grid.rhat_min_eig[i].resize(problem.regimes);
        for (int k = 0; k < problem.regimes; ++k) {
            const double t = grid.times[i];
            grid.Theta[i][k] = solve_gain(coeff_at(problem, t, k), grid.P[i][k], t, k, options.rhat_floor,
                                          &grid.rhat_min_eig[i][k]);
        }
    }
    return grid;
}

/// Smallest recorded eigenvalue of Rhat over all nodes and regimes: the
/// numerical counterpart of Rhat >= eps I.
inline double rhat_certificate(const RiccatiGrid& grid)
{
    double eps = std::numeric_limits<double>::infinity();
    for (const auto& node : grid.rhat_min_eig)
        for (double e : node)
            eps = std::min(eps, e);
    return eps;
}

/// P and the gain recomputed from it at one (t, regime).
struct GainPoint {
    Eigen::MatrixXd P;
    Eigen::MatrixXd Theta;
};

/// u = Theta(t, alpha(t)) x off the solved grid. P is interpolated linearly
/// between nodes and Theta is re-solved from the interpolated P, so
/// Shat + Rhat Theta = 0 holds at every query time. Holds non-owning
/// references; problem and grid must outlive the law.
class FeedbackLaw {
public:
    FeedbackLaw(const ProblemSpec& problem, const RiccatiGrid& grid) : problem_(&problem), grid_(&grid) {}

    const ProblemSpec& problem() const { return *problem_; }
    const RiccatiGrid& grid() const { return *grid_; }

    GainPoint at(double t, int k) const
    {
        const auto& times = grid_->times;
        const int N = grid_->intervals();
        if (!(t >= 0.0) || t > times.back() * (1.0 + 1e-14))
            throw Error(ErrorKind::OutOfHorizon, "t = " + std::to_string(t) + " outside the solved grid");
        int j = std::clamp(static_cast<int>(std::floor(t / grid_->step())), 0, N - 1);
        if (t >= times[j + 1])
            j = std::min(j + 1, N);
        else if (t < times[j])
            j = std::max(j - 1, 0);
        if (t == times[j])
            return {grid_->P[j][k], grid_->Theta[j][k]};
        if (j < N && t == times[j + 1])
            return {grid_->P[j + 1][k], grid_->Theta[j + 1][k]};
        const double w = (t - times[j]) / (times[j + 1] - times[j]);
        GainPoint out;
        out.P = symmetric_part((1.0 - w) * grid_->P[j][k] + w * grid_->P[j + 1][k]);
        out.Theta = solve_gain(coeff_at(*problem_, t, k), out.P, t, k, grid_->rhat_floor);
        return out;
    }

private:
    const ProblemSpec* problem_;
    const RiccatiGrid* grid_;
};

inline Eigen::MatrixXd feedback_gain(const FeedbackLaw& law, double t, int k)
{
    return law.at(t, k).Theta;
}

} // namespace rslq
