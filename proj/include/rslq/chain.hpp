#pragma once

// Continuous-time Markov chain over regimes {0, ..., D-1}: generator
// validation, exact event-driven path sampling, and the compensated jump
// counts N_kl(t) - lambda_kl * (time spent in k up to t).

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "rslq/error.hpp"
#include "rslq/random.hpp"

namespace rslq {

/// Time-constant transition intensities. Off-diagonal entries are
/// non-negative and each row sums to zero. Only validate_generator builds one.
class GeneratorMatrix {
public:
    GeneratorMatrix() = default;

    int size() const noexcept { return static_cast<int>(rates_.rows()); }
    const Eigen::MatrixXd& rates() const noexcept { return rates_; }
    double rate(int from, int to) const { return rates_(from, to); }
    double exit_rate(int k) const { return -rates_(k, k); }
    bool is_zero() const { return rates_.cwiseAbs().maxCoeff() == 0.0; }

    /// exp(lambda * h): regime transition probabilities over a step of length h.
    Eigen::MatrixXd transition_matrix(double h) const
    {
        Eigen::MatrixXd scaled = rates_ * h;
        return scaled.exp();
    }

    bool operator==(const GeneratorMatrix&) const = default;

private:
    explicit GeneratorMatrix(Eigen::MatrixXd rates) : rates_(std::move(rates)) {}
    friend GeneratorMatrix validate_generator(const Eigen::MatrixXd& raw);

    Eigen::MatrixXd rates_;
};

/// Checks shape and sign, then repairs the diagonal to minus the
/// off-diagonal row sum when the supplied value is off by more than 1e-12.
inline GeneratorMatrix validate_generator(const Eigen::MatrixXd& raw)
{
    if (raw.rows() != raw.cols() || raw.rows() < 1)
        throw Error(ErrorKind::DimensionMismatch,
                    "generator must be square with at least one regime, got " + std::to_string(raw.rows()) +
                        "x" + std::to_string(raw.cols()));
    if (!raw.allFinite())
        throw Error(ErrorKind::InvalidArgument, "generator has non-finite entries");
    Eigen::MatrixXd rates = raw;
    for (Eigen::Index k = 0; k < rates.rows(); ++k) {
        double off = 0.0;
        for (Eigen::Index l = 0; l < rates.cols(); ++l) {
            if (l == k)
                continue;
            if (rates(k, l) < 0.0)
                throw Error(ErrorKind::NegativeOffDiagonal, "lambda(" + std::to_string(k + 1) + "," +
                                                                std::to_string(l + 1) +
                                                                ") = " + std::to_string(rates(k, l)));
            off += rates(k, l);
        }
        if (std::abs(rates(k, k) + off) > 1e-12)
            rates(k, k) = -off;
    }
    return GeneratorMatrix(std::move(rates));
}

/// One realisation of the regime process on [t0, T]. The state is
/// right-continuous: it equals states[j] on [jump_times[j], jump_times[j+1]).
struct ChainPath {
    int initial = 0;
    double t0 = 0.0;
    double horizon = 0.0;
    std::vector<double> jump_times;
    std::vector<int> states;

    int state_at(double t) const
    {
        const auto it = std::upper_bound(jump_times.begin(), jump_times.end(), t);
        const auto jumps = static_cast<std::size_t>(it - jump_times.begin());
        return jumps == 0 ? initial : states[jumps - 1];
    }

    int terminal() const { return states.empty() ? initial : states.back(); }

    /// Number of k -> l transitions in (t0, t].
    int jump_count(int from, int to, double t) const
    {
        int count = 0;
        int current = initial;
        for (std::size_t j = 0; j < jump_times.size() && jump_times[j] <= t; ++j) {
            if (current == from && states[j] == to)
                ++count;
            current = states[j];
        }
        return count;
    }

    /// Lebesgue measure of {s in [t0, t] : alpha(s) = k}.
    double occupation_time(int k, double t) const
    {
        double total = 0.0;
        double start = t0;
        int current = initial;
        for (std::size_t j = 0; j < jump_times.size() && jump_times[j] <= t; ++j) {
            if (current == k)
                total += jump_times[j] - start;
            start = jump_times[j];
            current = states[j];
        }
        if (current == k && t > start)
            total += t - start;
        return total;
    }
};

/// Exact simulation: Exponential(-lambda_kk) holding times, next state drawn
/// from the embedded jump chain, truncated at the horizon.
inline ChainPath sample_chain_path(const GeneratorMatrix& gen, int i0, double t0, double horizon, Engine& stream)
{
    if (!(t0 < horizon))
        throw Error(ErrorKind::InvalidArgument, "chain horizon requires t0 < T");
    if (i0 < 0 || i0 >= gen.size())
        throw Error(ErrorKind::InvalidArgument, "initial regime out of range");

    ChainPath path;
    path.initial = i0;
    path.t0 = t0;
    path.horizon = horizon;

    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    double t = t0;
    int k = i0;
    for (;;) {
        const double exit = gen.exit_rate(k);
        if (exit <= 0.0)
            break;
        std::exponential_distribution<double> holding(exit);
        t += holding(stream);
        if (t > horizon)
            break;
        double target = uniform(stream) * exit;
        int next = -1;
        for (int l = 0; l < gen.size(); ++l) {
            if (l == k)
                continue;
            const double rate = gen.rate(k, l);
            if (rate <= 0.0)
                continue;
            next = l;
            if (target < rate)
                break;
            target -= rate;
        }
        path.jump_times.push_back(t);
        path.states.push_back(next);
        k = next;
    }
    return path;
}

/// Per-(k,l) sample statistics of the compensated counts at time T.
struct MartingaleResidual {
    Eigen::MatrixXd mean;
    Eigen::MatrixXd stderr_;
    std::size_t n = 0;
    /// False for a single path, where the sample standard error is undefined.
    bool stderr_defined = false;

    bool within(double sigmas) const
    {
        if (!stderr_defined)
            return false;
        return ((mean.cwiseAbs() - sigmas * stderr_).array() <= 0.0).all();
    }
};

inline MartingaleResidual martingale_residual(std::span<const ChainPath> paths, const GeneratorMatrix& gen, double T)
{
    if (paths.empty())
        throw Error(ErrorKind::EmptySample, "martingale_residual needs at least one path");
    const int dim = gen.size();
    const auto n = paths.size();
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::MatrixXd sum_sq = Eigen::MatrixXd::Zero(dim, dim);
    for (const auto& path : paths) {
        for (int k = 0; k < dim; ++k) {
            const double occupation = path.occupation_time(k, T);
            for (int l = 0; l < dim; ++l) {
                if (l == k)
                    continue;
                const double tilde = path.jump_count(k, l, T) - gen.rate(k, l) * occupation;
                sum(k, l) += tilde;
                sum_sq(k, l) += tilde * tilde;
            }
        }
    }
    MartingaleResidual out;
    out.n = n;
    out.mean = sum / static_cast<double>(n);
    out.stderr_ = Eigen::MatrixXd::Constant(dim, dim, std::numeric_limits<double>::quiet_NaN());
    out.stderr_defined = n >= 2;
    if (out.stderr_defined) {
        const double nn = static_cast<double>(n);
        for (int k = 0; k < dim; ++k)
            for (int l = 0; l < dim; ++l) {
                const double var = std::max(0.0, (sum_sq(k, l) - nn * out.mean(k, l) * out.mean(k, l)) / (nn - 1.0));
                out.stderr_(k, l) = std::sqrt(var / nn);
            }
    }
    return out;
}

} // namespace rslq
