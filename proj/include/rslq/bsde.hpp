#pragma once

// Least-squares Monte Carlo solver for the scalar (n = m = 1) Riccati BSDE
// with coefficients driven by an auxiliary diffusion
//   dy = kappa (ybar - y) dt + nu dW
// that shares the Brownian motion of the state equation.
//
// One explicit backward step from t_{i+1} to t_i in regime k:
//   Yhat_k(y)   = E[ sum_l p_kl P(t_{i+1}, l, y_{i+1}) | y_i = y ],   p = I + lambda h,
//   Lhat_k(y)   = E[ sum_l p_kl P(t_{i+1}, l, y_{i+1}) dW_i | y_i = y ] / h,
//   P(t_i,k,y)  = Yhat + h [ Qhat - Shat^2 / Rhat ](Yhat, Lhat),
// with Qhat = (2A + C^2) P + 2 C Lambda + Q, Shat = (B + D C) P + D Lambda + S,
// Rhat = R + D^2 P. Conditional expectations are least-squares projections
// on a polynomial basis in y; the regime jump term enters only through the
// first-order transition probabilities.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rslq/chain.hpp"
#include "rslq/error.hpp"
#include "rslq/model.hpp"
#include "rslq/random.hpp"
#include "rslq/riccati.hpp"

namespace rslq {

/// c_0 + c_1 y + c_2 y^2 + ...
struct Polynomial {
    std::vector<double> coeffs;

    double operator()(double y) const
    {
        double v = 0.0;
        for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it)
            v = v * y + *it;
        return v;
    }

    bool is_constant() const
    {
        for (std::size_t j = 1; j < coeffs.size(); ++j)
            if (coeffs[j] != 0.0)
                return false;
        return true;
    }
};

struct ScalarCoefficients {
    double A = 0, B = 0, C = 0, D = 0, Q = 0, S = 0, R = 0;
};

struct RegimeCoefficientMaps {
    Polynomial A, B, C, D, Q, S, R, G;
};

struct DriverProcess {
    double y0 = 0.0;
    double kappa = 0.0;
    double mean = 0.0;
    double nu = 0.0;
    /// Coefficient maps see y clamped to [y_min, y_max], which keeps them bounded.
    double y_min = -1.0;
    double y_max = 1.0;
};

struct RawRandomCoefficientModel {
    double horizon = 0.0;
    Eigen::MatrixXd generator;
    DriverProcess driver;
    std::vector<RegimeCoefficientMaps> maps;
    double x0 = 1.0;
    int i0 = 0;
};

class RandomCoefficientModel {
public:
    double horizon() const { return horizon_; }
    const GeneratorMatrix& generator() const { return generator_; }
    const DriverProcess& driver() const { return driver_; }
    const std::vector<RegimeCoefficientMaps>& maps() const { return maps_; }
    int regimes() const { return generator_.size(); }
    double x0() const { return x0_; }
    int i0() const { return i0_; }
    /// Smallest R over the declared driver range.
    double r_min() const { return r_min_; }

    double clamp(double y) const { return std::clamp(y, driver_.y_min, driver_.y_max); }

    ScalarCoefficients at(int k, double y) const
    {
        const double z = clamp(y);
        const auto& m = maps_[k];
        return {m.A(z), m.B(z), m.C(z), m.D(z), m.Q(z), m.S(z), m.R(z)};
    }

    double terminal(int k, double y) const { return maps_[k].G(clamp(y)); }

    bool is_y_independent() const
    {
        for (const auto& m : maps_)
            for (const Polynomial* p : {&m.A, &m.B, &m.C, &m.D, &m.Q, &m.S, &m.R, &m.G})
                if (!p->is_constant())
                    return false;
        return true;
    }

    /// The equivalent deterministic problem of a y-independent model.
    ProblemSpec to_problem() const
    {
        if (!is_y_independent())
            throw Error(ErrorKind::InvalidArgument, "model depends on the driver; no deterministic equivalent");
        RawProblem raw;
        raw.n = raw.m = 1;
        raw.regimes = regimes();
        raw.horizon = horizon_;
        raw.generator = generator_.rates();
        raw.segment_starts = {0.0};
        std::vector<CoefficientSet> row;
        for (int k = 0; k < regimes(); ++k) {
            const auto c = at(k, driver_.y0);
            CoefficientSet set = CoefficientSet::zeros(1, 1);
            set.A(0, 0) = c.A;
            set.B(0, 0) = c.B;
            set.C(0, 0) = c.C;
            set.D(0, 0) = c.D;
            set.Q(0, 0) = c.Q;
            set.S(0, 0) = c.S;
            set.R(0, 0) = c.R;
            row.push_back(set);
            raw.terminal_weights.push_back(Eigen::MatrixXd::Constant(1, 1, terminal(k, driver_.y0)));
        }
        raw.coefficients.push_back(std::move(row));
        raw.x0 = Eigen::VectorXd::Constant(1, x0_);
        raw.i0 = i0_;
        return validate_problem(raw);
    }

private:
    friend RandomCoefficientModel validate_random_model(const RawRandomCoefficientModel& raw);

    double horizon_ = 0.0;
    GeneratorMatrix generator_;
    DriverProcess driver_;
    std::vector<RegimeCoefficientMaps> maps_;
    double x0_ = 1.0;
    int i0_ = 0;
    double r_min_ = 0.0;
};

inline RandomCoefficientModel validate_random_model(const RawRandomCoefficientModel& raw)
{
    RandomCoefficientModel model;
    if (!(raw.horizon > 0.0))
        throw Error(ErrorKind::BadSegments, "horizon must be positive");
    model.generator_ = validate_generator(raw.generator);
    if (static_cast<int>(raw.maps.size()) != model.generator_.size())
        throw Error(ErrorKind::DimensionMismatch, "need coefficient maps for every regime");
    const auto& d = raw.driver;
    if (!(d.y_min < d.y_max) || !std::isfinite(d.y_min) || !std::isfinite(d.y_max))
        throw Error(ErrorKind::InvalidArgument, "driver range must satisfy y_min < y_max");
    if (!(d.kappa >= 0.0) || !(d.nu >= 0.0) || !std::isfinite(d.y0) || !std::isfinite(d.mean))
        throw Error(ErrorKind::InvalidArgument, "driver needs kappa >= 0, nu >= 0 and finite y0, mean");
    model.horizon_ = raw.horizon;
    model.driver_ = d;
    model.maps_ = raw.maps;
    model.x0_ = raw.x0;
    if (raw.i0 < 0 || raw.i0 >= model.generator_.size())
        throw Error(ErrorKind::InvalidArgument, "initial regime out of range");
    model.i0_ = raw.i0;

    // Bounds are checked on a dense grid of the declared range.
    constexpr int samples = 2001;
    double r_min = std::numeric_limits<double>::infinity();
    for (int k = 0; k < model.regimes(); ++k) {
        const auto& m = raw.maps[k];
        for (int j = 0; j < samples; ++j) {
            const double y = d.y_min + (d.y_max - d.y_min) * j / (samples - 1);
            for (const Polynomial* p : {&m.A, &m.B, &m.C, &m.D, &m.Q, &m.S, &m.R, &m.G})
                if (!std::isfinite((*p)(y)))
                    throw Error(ErrorKind::InvalidArgument, "coefficient map not finite on the driver range");
            r_min = std::min(r_min, m.R(y));
            if (m.G(y) < 0.0)
                throw Error(ErrorKind::InvalidArgument, "terminal weight G must be non-negative");
            if (m.Q(y) < 0.0)
                throw Error(ErrorKind::InvalidArgument, "state weight Q must be non-negative");
        }
    }
    if (!(r_min > 0.0))
        throw Error(ErrorKind::InvalidArgument, "control weight R must be bounded away from zero");
    model.r_min_ = r_min;
    return model;
}

/// Simulated driver and chain paths on a uniform grid.
struct PathBundle {
    int paths = 0;
    int steps = 0;
    std::vector<double> times;
    /// (N+1) x M, row = node.
    Eigen::MatrixXd y;
    /// N x M.
    Eigen::MatrixXd dW;
    std::vector<ChainPath> chains;

    int regime_at(int node, int path) const { return chains[path].state_at(times[node]); }
};

inline PathBundle generate_training_paths(const RandomCoefficientModel& model, int M, int N, std::uint64_t seed,
                                          int degree = 3, unsigned workers = 1)
{
    if (N < 1)
        throw Error(ErrorKind::InvalidArgument, "bundle needs N >= 1");
    if (M < 10 * (degree + 1))
        throw Error(ErrorKind::InvalidArgument, "need at least 10 paths per basis function");
    PathBundle b;
    b.paths = M;
    b.steps = N;
    b.times = detail::uniform_nodes(model.horizon(), N);
    b.y.resize(N + 1, M);
    b.dW.resize(N, M);
    b.chains.resize(M);
    const double h = model.horizon() / N;
    const double sqrt_h = std::sqrt(h);
    const auto& drv = model.driver();
    parallel_for_index(static_cast<std::size_t>(M), workers, [&](std::size_t p) {
        const auto col = static_cast<Eigen::Index>(p);
        Engine brownian = make_stream(seed, p, Lane::Brownian);
        std::normal_distribution<double> normal(0.0, 1.0);
        double y = drv.y0;
        b.y(0, col) = y;
        for (int i = 0; i < N; ++i) {
            const double dw = sqrt_h * normal(brownian);
            b.dW(i, col) = dw;
            y += drv.kappa * (drv.mean - y) * h + drv.nu * dw;
            b.y(i + 1, col) = y;
        }
        Engine chain = make_stream(seed, p, Lane::Chain);
        b.chains[p] = sample_chain_path(model.generator(), model.i0(), 0.0, model.horizon(), chain);
    });
    return b;
}

/// Polynomial regression basis in the standardized variable (y - center) / scale.
struct NodeBasis {
    double center = 0.0;
    double scale = 1.0;
    int degree = 0;

    double z(double y) const { return (y - center) / scale; }

    double evaluate(const Eigen::VectorXd& w, double y) const
    {
        const double s = z(y);
        double v = 0.0;
        for (int j = degree; j >= 0; --j)
            v = v * s + w(j);
        return v;
    }
};

struct BsdeOptions {
    double rhat_floor = 1e-8;
    double max_condition = 1e10;
};

struct BsdeSolution {
    std::vector<double> times;
    std::vector<NodeBasis> basis;
    /// [node][regime] weights of P(t, k, y).
    std::vector<std::vector<Eigen::VectorXd>> value_weights;
    /// [node][regime] weights of the one-step conditional expectation Yhat.
    std::vector<std::vector<Eigen::VectorXd>> expectation_weights;
    /// [node][regime] weights of Lambda(t, k, y).
    std::vector<std::vector<Eigen::VectorXd>> lambda_weights;
    /// [node][regime] RMS of the projection residual of the Yhat regression.
    std::vector<std::vector<double>> residual_rms;
    int degree = 3;

    int steps() const { return static_cast<int>(times.size()) - 1; }
};

namespace detail {

struct DriverTerms {
    double value = 0.0;
    double rhat = 0.0;
};

/// Qhat - Shat^2 / Rhat at the given (P, Lambda).
inline DriverTerms sre_driver(const ScalarCoefficients& c, double P, double L)
{
    const double qhat = (2.0 * c.A + c.C * c.C) * P + 2.0 * c.C * L + c.Q;
    const double shat = (c.B + c.D * c.C) * P + c.D * L + c.S;
    const double rhat = c.R + c.D * c.D * P;
    return {qhat - shat * shat / rhat, rhat};
}

inline NodeBasis make_basis(const Eigen::Ref<const Eigen::VectorXd>& y, int degree)
{
    NodeBasis basis;
    basis.center = y.mean();
    const double var = (y.array() - basis.center).square().mean();
    const double sd = std::sqrt(var);
    if (!(sd > 1e-12 * std::max(1.0, std::abs(basis.center)))) {
        basis.degree = 0;
        basis.scale = 1.0;
    } else {
        basis.degree = degree;
        basis.scale = sd;
    }
    return basis;
}

/// Column-scaled least squares via Householder QR, with a condition check
/// on the triangular factor.
class Regression {
public:
    Regression(const NodeBasis& basis, const Eigen::Ref<const Eigen::VectorXd>& y, double max_condition)
    {
        const Eigen::Index M = y.size();
        const int cols = basis.degree + 1;
        Eigen::MatrixXd phi(M, cols);
        for (Eigen::Index p = 0; p < M; ++p) {
            const double z = basis.z(y(p));
            double power = 1.0;
            for (int j = 0; j < cols; ++j) {
                phi(p, j) = power;
                power *= z;
            }
        }
        scale_ = phi.colwise().norm().transpose();
        for (int j = 0; j < cols; ++j)
            if (scale_(j) > 0.0)
                phi.col(j) /= scale_(j);
            else
                scale_(j) = 1.0;
        qr_.compute(phi);
        const Eigen::MatrixXd R = qr_.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(R);
        const auto sv = svd.singularValues();
        condition_ = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1) : std::numeric_limits<double>::infinity();
        if (!(condition_ <= max_condition))
            throw Error(ErrorKind::IllConditionedRegression,
                        "regression condition number " + std::to_string(condition_));
        phi_ = std::move(phi);
    }

    /// Weights in the unscaled basis.
    Eigen::VectorXd fit(const Eigen::VectorXd& target) const
    {
        Eigen::VectorXd w = qr_.solve(target);
        return w.cwiseQuotient(scale_);
    }

    Eigen::VectorXd predict(const Eigen::VectorXd& weights) const { return phi_ * weights.cwiseProduct(scale_); }

    double condition() const { return condition_; }

private:
    Eigen::MatrixXd phi_;
    Eigen::VectorXd scale_;
    Eigen::HouseholderQR<Eigen::MatrixXd> qr_;
    double condition_ = 1.0;
};

inline Eigen::VectorXd padded(const Eigen::VectorXd& w, int degree)
{
    Eigen::VectorXd out = Eigen::VectorXd::Zero(degree + 1);
    out.head(w.size()) = w;
    return out;
}

} // namespace detail

inline BsdeSolution backward_regression_solve(const RandomCoefficientModel& model, const PathBundle& bundle,
                                              int degree = 3, const BsdeOptions& options = {})
{
    const int M = bundle.paths;
    const int N = bundle.steps;
    const int K = model.regimes();
    if (degree < 0)
        throw Error(ErrorKind::InvalidArgument, "basis degree must be non-negative");
    if (M < 10 * (degree + 1))
        throw Error(ErrorKind::InvalidArgument, "need at least 10 paths per basis function");
    const double h = model.horizon() / N;
    const Eigen::MatrixXd trans =
        Eigen::MatrixXd::Identity(K, K) + model.generator().rates() * h;

    BsdeSolution sol;
    sol.degree = degree;
    sol.times = bundle.times;
    sol.basis.resize(N + 1);
    sol.value_weights.assign(N + 1, std::vector<Eigen::VectorXd>(K, Eigen::VectorXd::Zero(degree + 1)));
    sol.expectation_weights = sol.value_weights;
    sol.lambda_weights = sol.value_weights;
    sol.residual_rms.assign(N + 1, std::vector<double>(K, 0.0));

    // Values at the sample points of the current node, per regime.
    std::vector<Eigen::VectorXd> values(K, Eigen::VectorXd(M));
    {
        const Eigen::VectorXd yT = bundle.y.row(N).transpose();
        sol.basis[N] = detail::make_basis(yT, degree);
        const detail::Regression reg(sol.basis[N], yT, options.max_condition);
        for (int k = 0; k < K; ++k) {
            for (int p = 0; p < M; ++p)
                values[k](p) = model.terminal(k, yT(p));
            sol.value_weights[N][k] = detail::padded(reg.fit(values[k]), degree);
        }
    }

    const std::size_t tolerated = static_cast<std::size_t>(0.001 * M);
    for (int i = N - 1; i >= 0; --i) {
        const Eigen::VectorXd yi = bundle.y.row(i).transpose();
        const Eigen::VectorXd dw = bundle.dW.row(i).transpose();
        sol.basis[i] = detail::make_basis(yi, degree);
        const detail::Regression reg(sol.basis[i], yi, options.max_condition);

        std::vector<Eigen::VectorXd> next(K, Eigen::VectorXd(M));
        for (int k = 0; k < K; ++k) {
            Eigen::VectorXd target = Eigen::VectorXd::Zero(M);
            for (int l = 0; l < K; ++l)
                if (trans(k, l) != 0.0)
                    target += trans(k, l) * values[l];
            const Eigen::VectorXd wy = reg.fit(target);
            const Eigen::VectorXd wl = reg.fit(target.cwiseProduct(dw) / h);
            const Eigen::VectorXd yhat = reg.predict(wy);
            const Eigen::VectorXd lhat = reg.predict(wl);
            sol.residual_rms[i][k] = std::sqrt((target - yhat).squaredNorm() / M);

            std::size_t bad = 0;
            for (int p = 0; p < M; ++p) {
                const auto c = model.at(k, yi(p));
                auto terms = detail::sre_driver(c, yhat(p), lhat(p));
                if (!(terms.rhat > options.rhat_floor)) {
                    ++bad;
                    const double shat = (c.B + c.D * c.C) * yhat(p) + c.D * lhat(p) + c.S;
                    const double qhat = (2.0 * c.A + c.C * c.C) * yhat(p) + 2.0 * c.C * lhat(p) + c.Q;
                    terms.value = qhat - shat * shat / options.rhat_floor;
                }
                next[k](p) = yhat(p) + h * terms.value;
            }
            if (bad > tolerated)
                throw Error(ErrorKind::NegativeRhat, "Rhat below the floor at " + std::to_string(bad) +
                                                         " sample points, t=" + std::to_string(bundle.times[i]) +
                                                         " regime=" + std::to_string(k + 1));
            if (!next[k].allFinite())
                throw Error(ErrorKind::NonFiniteState, "regression solution left the finite range");
            sol.expectation_weights[i][k] = detail::padded(wy, degree);
            sol.lambda_weights[i][k] = detail::padded(wl, degree);
            sol.value_weights[i][k] = detail::padded(reg.fit(next[k]), degree);
        }
        values = std::move(next);
    }
    return sol;
}

/// P(t_i, k, y) from the fitted weights; exact G at the terminal node.
inline double bsde_value(const RandomCoefficientModel& model, const BsdeSolution& sol, int node, int k, double y)
{
    if (node == sol.steps())
        return model.terminal(k, y);
    return sol.basis[node].evaluate(sol.value_weights[node][k], y);
}

struct NodeResidual {
    double mean = 0.0;
    double stderr_ = 0.0;
    std::size_t n = 0;
};

/// Out-of-sample one-step residuals
///   e = P(t_{i+1}, alpha_{i+1}, y_{i+1}) + h f(t_i, alpha_i, y_i) - P(t_i, alpha_i, y_i)
/// per node, which have zero mean when the recursion is consistent.
inline std::vector<NodeResidual> bsde_residual(const RandomCoefficientModel& model, const BsdeSolution& sol,
                                               const PathBundle& fresh)
{
    const int N = sol.steps();
    if (fresh.steps != N)
        throw Error(ErrorKind::DimensionMismatch, "fresh bundle must use the solution's grid");
    const double h = model.horizon() / N;
    const int M = fresh.paths;
    std::vector<NodeResidual> out(N);
    std::vector<double> e(M);
    for (int i = 0; i < N; ++i) {
        const auto& basis = sol.basis[i];
        for (int p = 0; p < M; ++p) {
            const int k = fresh.regime_at(i, p);
            const int l = fresh.regime_at(i + 1, p);
            const double y = fresh.y(i, p);
            const double yhat = basis.evaluate(sol.expectation_weights[i][k], y);
            const double lhat = basis.evaluate(sol.lambda_weights[i][k], y);
            const auto terms = detail::sre_driver(model.at(k, y), yhat, lhat);
            const double f = terms.rhat > 0.0 ? terms.value : 0.0;
            e[p] = bsde_value(model, sol, i + 1, l, fresh.y(i + 1, p)) + h * f - bsde_value(model, sol, i, k, y);
        }
        double sum = 0.0;
        for (double v : e)
            sum += v;
        const double mean = sum / M;
        double ss = 0.0;
        for (double v : e)
            ss += (v - mean) * (v - mean);
        out[i].mean = mean;
        out[i].n = static_cast<std::size_t>(M);
        out[i].stderr_ = M > 1 ? std::sqrt(ss / (M - 1) / M) : 0.0;
    }
    return out;
}

} // namespace rslq
