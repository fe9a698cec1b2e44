#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rslq/chain.hpp"
#include "rslq/error.hpp"

namespace rslq {

/// Coefficients of the state equation
///   dX = (A X + B u) ds + (C X + D u) dW
/// and of the running cost <Q X, X> + 2 <S X, u> + <R u, u> with terminal
/// weight G, for one (time segment, regime) pair.
struct CoefficientSet {
    Eigen::MatrixXd A, B, C, D, Q, S, R, G;

    static CoefficientSet zeros(int n, int m)
    {
        return {Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(n, m), Eigen::MatrixXd::Zero(n, n),
                Eigen::MatrixXd::Zero(n, m), Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(m, n),
                Eigen::MatrixXd::Zero(m, m), Eigen::MatrixXd::Zero(n, n)};
    }

    bool operator==(const CoefficientSet& o) const
    {
        return A == o.A && B == o.B && C == o.C && D == o.D && Q == o.Q && S == o.S && R == o.R && G == o.G;
    }
};

/// Unvalidated problem data as it comes out of a config file.
struct RawProblem {
    int n = 0;
    int m = 0;
    int regimes = 0;
    double horizon = 0.0;
    Eigen::MatrixXd generator;
    std::vector<double> segment_starts;
    /// [segment][regime]; G is ignored here and taken from terminal_weights.
    std::vector<std::vector<CoefficientSet>> coefficients;
    std::vector<Eigen::MatrixXd> terminal_weights;
    Eigen::VectorXd x0;
    int i0 = 0;
};

/// A validated problem. Coefficients are piecewise constant in time on
/// [breakpoints[j], breakpoints[j+1]) and the last segment also owns T.
struct ProblemSpec {
    int n = 0;
    int m = 0;
    int regimes = 0;
    double horizon = 0.0;
    GeneratorMatrix generator;
    std::vector<double> breakpoints;
    std::vector<std::vector<CoefficientSet>> coefficients;
    Eigen::VectorXd x0;
    int i0 = 0;

    int segment_count() const { return static_cast<int>(coefficients.size()); }
    const Eigen::MatrixXd& terminal_weight(int k) const { return coefficients.back()[k].G; }

    bool operator==(const ProblemSpec&) const = default;
};

namespace detail {

inline void require_shape(const Eigen::MatrixXd& M, Eigen::Index rows, Eigen::Index cols, const std::string& name)
{
    if (M.rows() != rows || M.cols() != cols)
        throw Error(ErrorKind::DimensionMismatch, name + " has shape " + std::to_string(M.rows()) + "x" +
                                                      std::to_string(M.cols()) + ", expected " +
                                                      std::to_string(rows) + "x" + std::to_string(cols));
    if (!M.allFinite())
        throw Error(ErrorKind::InvalidArgument, name + " has non-finite entries");
}

inline Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& M, const std::string& name)
{
    const double asym = (M - M.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-9)
        throw Error(ErrorKind::AsymmetricWeight, name + " asymmetry " + std::to_string(asym) + " exceeds 1e-9");
    return 0.5 * (M + M.transpose());
}

} // namespace detail

inline ProblemSpec validate_problem(const RawProblem& raw)
{
    if (raw.n < 1 || raw.m < 1 || raw.regimes < 1)
        throw Error(ErrorKind::DimensionMismatch, "n, m and regimes must be positive");
    if (!(raw.horizon > 0.0) || !std::isfinite(raw.horizon))
        throw Error(ErrorKind::BadSegments, "horizon must be positive and finite");

    ProblemSpec spec;
    spec.n = raw.n;
    spec.m = raw.m;
    spec.regimes = raw.regimes;
    spec.horizon = raw.horizon;
    spec.generator = validate_generator(raw.generator);
    if (spec.generator.size() != raw.regimes)
        throw Error(ErrorKind::DimensionMismatch, "generator size does not match regime count");

    if (raw.segment_starts.empty() || raw.segment_starts.size() != raw.coefficients.size())
        throw Error(ErrorKind::BadSegments, "need one start time per coefficient segment");
    if (raw.segment_starts.front() != 0.0)
        throw Error(ErrorKind::BadSegments, "first segment must start at 0");
    for (std::size_t j = 1; j < raw.segment_starts.size(); ++j)
        if (!(raw.segment_starts[j] > raw.segment_starts[j - 1]))
            throw Error(ErrorKind::BadSegments, "segment starts must be strictly increasing");
    if (!(raw.segment_starts.back() < raw.horizon))
        throw Error(ErrorKind::BadSegments, "last segment must start before T");
    spec.breakpoints = raw.segment_starts;
    spec.breakpoints.push_back(raw.horizon);

    if (static_cast<int>(raw.terminal_weights.size()) != raw.regimes)
        throw Error(ErrorKind::DimensionMismatch, "need one terminal weight G per regime");
    std::vector<Eigen::MatrixXd> G(raw.regimes);
    for (int k = 0; k < raw.regimes; ++k) {
        const std::string tag = "G[" + std::to_string(k + 1) + "]";
        detail::require_shape(raw.terminal_weights[k], raw.n, raw.n, tag);
        G[k] = detail::symmetrized(raw.terminal_weights[k], tag);
    }

    const int n = raw.n, m = raw.m;
    for (std::size_t j = 0; j < raw.coefficients.size(); ++j) {
        if (static_cast<int>(raw.coefficients[j].size()) != raw.regimes)
            throw Error(ErrorKind::DimensionMismatch, "segment " + std::to_string(j) + " must list every regime");
        std::vector<CoefficientSet> row;
        row.reserve(raw.regimes);
        for (int k = 0; k < raw.regimes; ++k) {
            const auto& c = raw.coefficients[j][k];
            const std::string tag = "[segment " + std::to_string(j) + ", regime " + std::to_string(k + 1) + "]";
            detail::require_shape(c.A, n, n, "A" + tag);
            detail::require_shape(c.B, n, m, "B" + tag);
            detail::require_shape(c.C, n, n, "C" + tag);
            detail::require_shape(c.D, n, m, "D" + tag);
            detail::require_shape(c.Q, n, n, "Q" + tag);
            detail::require_shape(c.S, m, n, "S" + tag);
            detail::require_shape(c.R, m, m, "R" + tag);
            CoefficientSet set = c;
            set.Q = detail::symmetrized(c.Q, "Q" + tag);
            set.R = detail::symmetrized(c.R, "R" + tag);
            set.G = G[k];
            row.push_back(std::move(set));
        }
        spec.coefficients.push_back(std::move(row));
    }

    if (raw.x0.size() != n || !raw.x0.allFinite())
        throw Error(ErrorKind::DimensionMismatch, "x0 must be a finite vector of length n");
    spec.x0 = raw.x0;
    if (raw.i0 < 0 || raw.i0 >= raw.regimes)
        throw Error(ErrorKind::InvalidArgument, "initial regime out of range");
    spec.i0 = raw.i0;
    return spec;
}

/// Inverse of validate_problem (up to the symmetrization it applies).
inline RawProblem to_raw(const ProblemSpec& spec)
{
    RawProblem raw;
    raw.n = spec.n;
    raw.m = spec.m;
    raw.regimes = spec.regimes;
    raw.horizon = spec.horizon;
    raw.generator = spec.generator.rates();
    raw.segment_starts.assign(spec.breakpoints.begin(), spec.breakpoints.end() - 1);
    raw.coefficients = spec.coefficients;
    for (int k = 0; k < spec.regimes; ++k)
        raw.terminal_weights.push_back(spec.terminal_weight(k));
    raw.x0 = spec.x0;
    raw.i0 = spec.i0;
    return raw;
}

inline int segment_index(const ProblemSpec& problem, double t)
{
    const double T = problem.horizon;
    if (!(t >= 0.0) || t > T * (1.0 + 1e-14))
        throw Error(ErrorKind::OutOfHorizon, "t = " + std::to_string(t) + " outside [0, T]");
    const auto& bp = problem.breakpoints;
    const auto it = std::upper_bound(bp.begin(), bp.end() - 1, t);
    const auto seg = static_cast<int>(it - bp.begin()) - 1;
    return std::clamp(seg, 0, problem.segment_count() - 1);
}

/// Coefficients in force at time t in regime k (right-continuous in t).
inline const CoefficientSet& coeff_at(const ProblemSpec& problem, double t, int k)
{
    if (k < 0 || k >= problem.regimes)
        throw Error(ErrorKind::InvalidArgument, "regime out of range");
    return problem.coefficients[segment_index(problem, t)][k];
}

} // namespace rslq
