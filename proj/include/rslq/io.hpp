#pragma once

// JSON configuration ingestion and CSV / JSON artifact emission. Regimes are
// 1-based in every file and 0-based in memory.

#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <span>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "rslq/bsde.hpp"
#include "rslq/error.hpp"
#include "rslq/meanvar.hpp"
#include "rslq/model.hpp"
#include "rslq/riccati.hpp"
#include "rslq/simulate.hpp"
#include "rslq/verify.hpp"

namespace rslq {

inline constexpr std::string_view kToolVersion = "rslq 1.0.0";
inline constexpr int kConfigVersion = 1;

using json = nlohmann::json;

/// 64-bit FNV-1a; stable across platforms, used to tag outputs with the
/// config they came from.
inline std::uint64_t fnv1a64(std::string_view bytes)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
    return buf;
}

/// Shortest text that round-trips the double exactly.
inline std::string format_double(double v)
{
    char buf[32];
    for (int precision = 15; precision <= 17; ++precision) {
        std::snprintf(buf, sizeof buf, "%.*g", precision, v);
        if (std::strtod(buf, nullptr) == v)
            break;
    }
    return buf;
}

struct OutputHeader {
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
    bool has_seed = false;

    std::string comment_line() const
    {
        std::string line = "# tool=" + std::string(kToolVersion) + " config_hash=" + hex64(config_hash);
        if (has_seed)
            line += " seed=" + std::to_string(seed);
        return line;
    }

    json to_json() const
    {
        json j = {{"tool", std::string(kToolVersion)}, {"config_hash", hex64(config_hash)}};
        if (has_seed)
            j["seed"] = seed;
        return j;
    }
};

namespace detail {

[[noreturn]] inline void bad_config(const std::string& what)
{
    throw Error(ErrorKind::BadConfig, what);
}

inline const json& require(const json& j, const char* key)
{
    if (!j.is_object() || !j.contains(key))
        bad_config(std::string("missing key \"") + key + "\"");
    return j.at(key);
}

inline double number(const json& j, const char* what)
{
    if (!j.is_number())
        bad_config(std::string(what) + " must be a number");
    return j.get<double>();
}

inline int integer(const json& j, const char* what)
{
    if (!j.is_number_integer())
        bad_config(std::string(what) + " must be an integer");
    return j.get<int>();
}

/// Matrix from nested row-major arrays; a bare number is a 1x1 matrix and a
/// flat array a column vector.
inline Eigen::MatrixXd matrix(const json& j, const std::string& what)
{
    if (j.is_number())
        return Eigen::MatrixXd::Constant(1, 1, j.get<double>());
    if (!j.is_array() || j.empty())
        bad_config(what + " must be a non-empty array");
    if (!j.front().is_array()) {
        Eigen::MatrixXd v(j.size(), 1);
        for (std::size_t i = 0; i < j.size(); ++i)
            v(i, 0) = number(j[i], what.c_str());
        return v;
    }
    const auto rows = j.size();
    const auto cols = j.front().size();
    Eigen::MatrixXd M(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        if (!j[i].is_array() || j[i].size() != cols)
            bad_config(what + " has ragged rows");
        for (std::size_t c = 0; c < cols; ++c)
            M(i, c) = number(j[i][c], what.c_str());
    }
    return M;
}

inline json matrix_json(const Eigen::MatrixXd& M)
{
    json rows = json::array();
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index c = 0; c < M.cols(); ++c)
            row.push_back(M(i, c));
        rows.push_back(row);
    }
    return rows;
}

inline const json& regime_entry(const json& table, int k, const std::string& what)
{
    const std::string key = std::to_string(k + 1);
    if (!table.is_object() || !table.contains(key))
        bad_config(what + " has no entry for regime " + key);
    return table.at(key);
}

inline void check_header(const json& j, const char* kind)
{
    if (!j.is_object())
        bad_config("config must be a JSON object");
    if (integer(require(j, "spec_version"), "spec_version") != kConfigVersion)
        bad_config("unsupported spec_version");
    if (require(j, "kind") != kind)
        bad_config(std::string("expected kind \"") + kind + "\"");
}

inline int regime_index(const json& j)
{
    return integer(j, "i0") - 1;
}

} // namespace detail

inline std::string config_kind(const json& j)
{
    if (!j.is_object() || !j.contains("kind") || !j.at("kind").is_string())
        detail::bad_config("config needs a string \"kind\"");
    return j.at("kind").get<std::string>();
}

inline json parse_json(const std::string& text)
{
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        detail::bad_config(std::string("invalid JSON: ") + e.what());
    }
}

/// Missing coefficient matrices default to zero of the right shape.
inline RawProblem parse_problem(const json& j)
{
    using namespace detail;
    check_header(j, "slq");
    RawProblem raw;
    raw.n = integer(require(j, "n"), "n");
    raw.m = integer(require(j, "m"), "m");
    raw.regimes = integer(require(j, "regimes"), "regimes");
    raw.horizon = number(require(j, "T"), "T");
    raw.generator = matrix(require(j, "generator"), "generator");
    if (raw.n < 1 || raw.m < 1 || raw.regimes < 1)
        throw Error(ErrorKind::DimensionMismatch, "n, m and regimes must be positive");

    const json& segments = require(j, "segments");
    if (!segments.is_array() || segments.empty())
        bad_config("segments must be a non-empty array");
    for (const auto& seg : segments) {
        raw.segment_starts.push_back(number(require(seg, "t_start"), "t_start"));
        const json& table = require(seg, "coefficients");
        std::vector<CoefficientSet> row;
        for (int k = 0; k < raw.regimes; ++k) {
            const json& entry = regime_entry(table, k, "coefficients");
            CoefficientSet c = CoefficientSet::zeros(raw.n, raw.m);
            auto load = [&](const char* name, Eigen::MatrixXd& target) {
                if (entry.contains(name))
                    target = matrix(entry.at(name), name);
            };
            load("A", c.A);
            load("B", c.B);
            load("C", c.C);
            load("D", c.D);
            load("Q", c.Q);
            load("S", c.S);
            load("R", c.R);
            row.push_back(std::move(c));
        }
        raw.coefficients.push_back(std::move(row));
    }
    const json& G = require(j, "G");
    for (int k = 0; k < raw.regimes; ++k)
        raw.terminal_weights.push_back(matrix(regime_entry(G, k, "G"), "G"));
    raw.x0 = matrix(require(j, "x0"), "x0");
    raw.i0 = regime_index(require(j, "i0"));
    return raw;
}

inline ProblemSpec load_problem(const json& j)
{
    return validate_problem(parse_problem(j));
}

inline json problem_to_json(const ProblemSpec& p)
{
    using detail::matrix_json;
    json j;
    j["spec_version"] = kConfigVersion;
    j["kind"] = "slq";
    j["n"] = p.n;
    j["m"] = p.m;
    j["regimes"] = p.regimes;
    j["T"] = p.horizon;
    j["generator"] = matrix_json(p.generator.rates());
    json segments = json::array();
    for (int s = 0; s < p.segment_count(); ++s) {
        json table = json::object();
        for (int k = 0; k < p.regimes; ++k) {
            const auto& c = p.coefficients[s][k];
            table[std::to_string(k + 1)] = {{"A", matrix_json(c.A)}, {"B", matrix_json(c.B)}, {"C", matrix_json(c.C)},
                                            {"D", matrix_json(c.D)}, {"Q", matrix_json(c.Q)}, {"S", matrix_json(c.S)},
                                            {"R", matrix_json(c.R)}};
        }
        segments.push_back({{"t_start", p.breakpoints[s]}, {"coefficients", table}});
    }
    j["segments"] = segments;
    json G = json::object();
    for (int k = 0; k < p.regimes; ++k)
        G[std::to_string(k + 1)] = matrix_json(p.terminal_weight(k));
    j["G"] = G;
    json x0 = json::array();
    for (Eigen::Index i = 0; i < p.x0.size(); ++i)
        x0.push_back(p.x0(i));
    j["x0"] = x0;
    j["i0"] = p.i0 + 1;
    return j;
}

struct MarketConfig {
    RawMarket market;
    std::vector<double> targets;
};

/// Constant coefficients via top-level "r" and "per_regime", or
/// piecewise-constant ones via "segments": [{t_start, r, per_regime}].
inline MarketConfig parse_market(const json& j)
{
    using namespace detail;
    check_header(j, "market");
    MarketConfig cfg;
    auto& mk = cfg.market;
    mk.horizon = number(require(j, "T"), "T");
    mk.generator = matrix(require(j, "generator"), "generator");
    mk.delta = number(require(j, "delta"), "delta");
    mk.x0 = number(require(j, "x0"), "x0");
    mk.i0 = regime_index(require(j, "i0"));
    const int K = static_cast<int>(mk.generator.rows());

    auto segment_from = [&](const json& s, double t_start) {
        MarketSegment seg;
        seg.t_start = t_start;
        seg.r = number(require(s, "r"), "r");
        const json& per = require(s, "per_regime");
        // Either {regime_id: {b, sigma}} or {b: [...], sigma: [...]}.
        if (per.is_object() && per.contains("b")) {
            auto column = [&](const char* name, std::vector<double>& out) {
                const Eigen::MatrixXd v = matrix(per.at(name), name);
                if (v.size() != K)
                    bad_config(std::string("per_regime.") + name + " needs one value per regime");
                for (int k = 0; k < K; ++k)
                    out.push_back(v(k));
            };
            column("b", seg.b);
            if (!per.contains("sigma"))
                bad_config("per_regime needs sigma");
            column("sigma", seg.sigma);
            return seg;
        }
        for (int k = 0; k < K; ++k) {
            const json& e = regime_entry(per, k, "per_regime");
            seg.b.push_back(number(require(e, "b"), "b"));
            seg.sigma.push_back(number(require(e, "sigma"), "sigma"));
        }
        return seg;
    };
    if (j.contains("segments")) {
        for (const auto& s : j.at("segments"))
            mk.segments.push_back(segment_from(s, number(require(s, "t_start"), "t_start")));
    } else {
        mk.segments.push_back(segment_from(j, 0.0));
    }
    if (j.contains("targets")) {
        if (!j.at("targets").is_array())
            bad_config("targets must be an array");
        for (const auto& d : j.at("targets"))
            cfg.targets.push_back(number(d, "target"));
    }
    return cfg;
}

inline RawRandomCoefficientModel parse_random_model(const json& j)
{
    using namespace detail;
    check_header(j, "random_coefficients");
    RawRandomCoefficientModel raw;
    raw.horizon = number(require(j, "T"), "T");
    raw.generator = matrix(require(j, "generator"), "generator");
    const json& d = require(j, "driver");
    raw.driver.y0 = number(require(d, "y0"), "y0");
    raw.driver.kappa = number(require(d, "kappa"), "kappa");
    raw.driver.mean = number(require(d, "mean"), "mean");
    raw.driver.nu = number(require(d, "nu"), "nu");
    raw.driver.y_min = number(require(d, "y_min"), "y_min");
    raw.driver.y_max = number(require(d, "y_max"), "y_max");
    if (j.contains("x0"))
        raw.x0 = number(j.at("x0"), "x0");
    raw.i0 = j.contains("i0") ? regime_index(j.at("i0")) : 0;
    const json& table = require(j, "coefficients");
    for (int k = 0; k < static_cast<int>(raw.generator.rows()); ++k) {
        const json& e = regime_entry(table, k, "coefficients");
        RegimeCoefficientMaps maps;
        auto load = [&](const char* name, Polynomial& p) {
            p.coeffs = {0.0};
            if (!e.contains(name))
                return;
            const json& v = e.at(name);
            if (v.is_number()) {
                p.coeffs = {v.get<double>()};
                return;
            }
            if (!v.is_array() || v.empty())
                bad_config(std::string(name) + " must be a number or a coefficient array");
            p.coeffs.clear();
            for (const auto& c : v)
                p.coeffs.push_back(number(c, name));
        };
        load("A", maps.A);
        load("B", maps.B);
        load("C", maps.C);
        load("D", maps.D);
        load("Q", maps.Q);
        load("S", maps.S);
        load("R", maps.R);
        load("G", maps.G);
        raw.maps.push_back(std::move(maps));
    }
    return raw;
}

/// One row per (node, regime): t, k, P row-major, Theta row-major, rhat_min_eig.
inline void write_riccati_csv(std::ostream& os, const RiccatiGrid& grid, const OutputHeader& header)
{
    os << header.comment_line() << '\n';
    const auto& P0 = grid.P.front().front();
    const auto& T0 = grid.Theta.front().front();
    os << "node,t,k";
    for (Eigen::Index i = 0; i < P0.rows(); ++i)
        for (Eigen::Index j = 0; j < P0.cols(); ++j)
            os << ",P_" << i + 1 << '_' << j + 1;
    for (Eigen::Index i = 0; i < T0.rows(); ++i)
        for (Eigen::Index j = 0; j < T0.cols(); ++j)
            os << ",Theta_" << i + 1 << '_' << j + 1;
    os << ",rhat_min_eig\n";
    for (std::size_t n = 0; n < grid.times.size(); ++n)
        for (int k = 0; k < grid.regimes(); ++k) {
            os << n << ',' << format_double(grid.times[n]) << ',' << k + 1;
            const auto& P = grid.P[n][k];
            for (Eigen::Index i = 0; i < P.rows(); ++i)
                for (Eigen::Index j = 0; j < P.cols(); ++j)
                    os << ',' << format_double(P(i, j));
            const auto& Th = grid.Theta[n][k];
            for (Eigen::Index i = 0; i < Th.rows(); ++i)
                for (Eigen::Index j = 0; j < Th.cols(); ++j)
                    os << ',' << format_double(Th(i, j));
            os << ',' << format_double(grid.rhat_min_eig[n][k]) << '\n';
        }
}

struct FrontierRow {
    FrontierPoint point;
    bool has_mc = false;
    MeanVarianceCheck mc;
};

inline void write_frontier_csv(std::ostream& os, std::span<const FrontierRow> rows, const OutputHeader& header)
{
    os << header.comment_line() << '\n';
    os << "d,mu,gamma,x_tilde0,variance,riccati_value_check,mc_mean,mc_mean_stderr,mc_var,mc_var_stderr\n";
    for (const auto& r : rows) {
        const auto& p = r.point;
        os << format_double(p.d) << ',' << format_double(p.mu) << ',' << format_double(p.gamma) << ','
           << format_double(p.x_tilde0) << ',' << format_double(p.variance) << ','
           << format_double(p.riccati_value_check);
        if (r.has_mc)
            os << ',' << format_double(r.mc.mc_mean) << ',' << format_double(r.mc.mean_stderr) << ','
               << format_double(r.mc.mc_variance) << ',' << format_double(r.mc.variance_stderr) << '\n';
        else
            os << ",,,,\n";
    }
}

/// One row per (node, regime): basis standardization and the P and Lambda
/// weights in powers of (y - center) / scale.
inline void write_bsde_csv(std::ostream& os, const BsdeSolution& sol, const OutputHeader& header)
{
    os << header.comment_line() << '\n';
    os << "node,t,k,center,scale";
    for (int j = 0; j <= sol.degree; ++j)
        os << ",w_" << j;
    for (int j = 0; j <= sol.degree; ++j)
        os << ",lambda_w_" << j;
    os << ",residual_rms\n";
    for (std::size_t n = 0; n < sol.times.size(); ++n)
        for (std::size_t k = 0; k < sol.value_weights[n].size(); ++k) {
            os << n << ',' << format_double(sol.times[n]) << ',' << k + 1 << ','
               << format_double(sol.basis[n].center) << ',' << format_double(sol.basis[n].scale);
            for (int j = 0; j <= sol.degree; ++j)
                os << ',' << format_double(sol.value_weights[n][k](j));
            for (int j = 0; j <= sol.degree; ++j)
                os << ',' << format_double(sol.lambda_weights[n][k](j));
            os << ',' << format_double(sol.residual_rms[n][k]) << '\n';
        }
}

inline void write_path_csv(std::ostream& os, const PathRecord& path, const OutputHeader& header)
{
    os << header.comment_line() << '\n';
    os << "step,t,regime,dW";
    for (Eigen::Index i = 0; i < path.X.rows(); ++i)
        os << ",x_" << i + 1;
    for (Eigen::Index i = 0; i < path.u.rows(); ++i)
        os << ",u_" << i + 1;
    os << '\n';
    for (int s = 0; s <= path.steps(); ++s) {
        os << s << ',' << format_double(path.times[s]) << ',' << path.regimes[s] + 1 << ',';
        if (s < path.steps())
            os << format_double(path.dW[s]);
        for (Eigen::Index i = 0; i < path.X.rows(); ++i)
            os << ',' << format_double(path.X(i, s));
        for (Eigen::Index i = 0; i < path.u.rows(); ++i) {
            os << ',';
            if (s < path.steps())
                os << format_double(path.u(i, s));
        }
        os << '\n';
    }
}

inline json check_to_json(const CheckResult& c)
{
    return {{"check", c.name},
            {"status", c.passed ? "pass" : "fail"},
            {"statistic", c.statistic},
            {"tolerance", c.tolerance},
            {"stderr_term", c.stderr_term},
            {"bias_allowance", c.bias_allowance},
            {"n", c.n},
            {"seed", c.seed},
            {"note", c.note}};
}

inline json report_to_json(const VerifyReport& report, const OutputHeader& header)
{
    json checks = json::array();
    for (const auto& c : report.checks)
        checks.push_back(check_to_json(c));
    return {{"header", header.to_json()}, {"all_passed", report.all_passed()}, {"checks", checks}};
}

inline json estimate_to_json(const MCEstimate& est, const OutputHeader& header)
{
    return {{"header", header.to_json()},
            {"mean", est.mean},
            {"stderr", est.stderr_},
            {"n", est.n},
            {"seed", est.seed}};
}

} // namespace rslq
