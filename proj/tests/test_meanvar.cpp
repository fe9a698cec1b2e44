#include <catch_amalgamated.hpp>

#include "fixtures.hpp"

using namespace rslq;
using Eigen::MatrixXd;

namespace {

constexpr double kR = 0.06;
constexpr double kThetaSq = 0.09;

MarketSpec market_with(double r, std::vector<double> b, std::vector<double> sigma, const MatrixXd& gen)
{
    RawMarket raw;
    raw.horizon = 1.0;
    raw.generator = gen;
    raw.segments = {MarketSegment{0.0, r, std::move(b), std::move(sigma)}};
    raw.delta = 1e-6;
    raw.x0 = 1.0;
    raw.i0 = 0;
    return validate_market(raw);
}

} // namespace

TEST_CASE("market validation")
{
    RawMarket raw;
    raw.horizon = 1.0;
    raw.generator = fixtures::scalar(0.0);
    raw.segments = {MarketSegment{0.0, 0.06, {0.12}, {0.2}}};
    raw.delta = 0.05;
    raw.x0 = 1.0;
    CHECK_THROWS_AS(validate_market(raw), Error);
    raw.delta = 0.01;
    CHECK_NOTHROW(validate_market(raw));
    raw.segments[0].r = -0.01;
    CHECK_THROWS_AS(validate_market(raw), Error);
    raw.segments[0].r = 0.06;
    raw.x0 = 0.0;
    CHECK_THROWS_AS(validate_market(raw), Error);
}

TEST_CASE("one-regime Riccati solution is exponential")
{
    const auto market = fixtures::reference_market();
    const auto grid = mv_riccati(market, 200);
    for (std::size_t i = 0; i < grid.times.size(); i += 25)
        CHECK(grid.P[i][0](0, 0) == Catch::Approx(std::exp(0.03 * (1.0 - grid.times[i]))).epsilon(1e-10));
    CHECK(grid.P[0][0](0, 0) == Catch::Approx(1.03045).margin(1e-5));
    // Theta = -(b - r) / sigma^2 regardless of P.
    for (const auto& node : grid.Theta)
        CHECK(node[0](0, 0) == Catch::Approx(-1.5).epsilon(1e-12));
}

TEST_CASE("riskless market")
{
    const auto market = market_with(0.05, {0.05}, {0.3}, fixtures::scalar(0.0));
    const auto grid = mv_riccati(market, 100);
    CHECK(grid.P[0][0](0, 0) == Catch::Approx(std::exp(0.1)).epsilon(1e-10));
    for (const auto& node : grid.Theta)
        CHECK(node[0](0, 0) == 0.0);
    const auto f = mv_moment_odes(market, grid);
    CHECK(f.kappa == Catch::Approx(std::exp(0.05)).epsilon(1e-10));
    CHECK(f.rho == Catch::Approx(std::exp(0.1)).epsilon(1e-10));
    try {
        lagrange_solve(market, f, 1.2);
        FAIL("expected DegenerateConstraint");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::DegenerateConstraint);
    }
}

TEST_CASE("two uncoupled regimes solve independently")
{
    const auto market = market_with(0.04, {0.1, 0.02}, {0.2, 0.3}, MatrixXd::Zero(2, 2));
    const auto grid = mv_riccati(market, 200);
    const double th1 = 0.06 * 0.06 / 0.04;
    const double th2 = 0.02 * 0.02 / 0.09;
    CHECK(grid.P[0][0](0, 0) == Catch::Approx(std::exp(0.08 - th1)).epsilon(1e-10));
    CHECK(grid.P[0][1](0, 0) == Catch::Approx(std::exp(0.08 - th2)).epsilon(1e-10));
}

TEST_CASE("moment factors of the reference market")
{
    const auto market = fixtures::reference_market();
    const auto grid = mv_riccati(market, 200);
    const auto f = mv_moment_odes(market, grid);
    CHECK(f.kappa == Catch::Approx(std::exp(-0.03)).epsilon(1e-10));
    CHECK(f.rho == Catch::Approx(std::exp(0.03)).epsilon(1e-10));
    CHECK(f.rho == Catch::Approx(grid.P[0][0](0, 0)).epsilon(1e-10));
}

TEST_CASE("Lagrange solution of the reference market")
{
    const auto market = fixtures::reference_market();
    const auto grid = mv_riccati(market, 200);
    const auto f = mv_moment_odes(market, grid);
    const auto s = lagrange_solve(market, f, 1.2);
    const double gamma = (1.2 - std::exp((kR - kThetaSq))) / (1.0 - std::exp(-kThetaSq));
    CHECK(s.gamma == Catch::Approx(gamma).epsilon(1e-10));
    CHECK(s.gamma == Catch::Approx(2.6671).margin(1e-4));
    CHECK(s.mu == Catch::Approx(1.4671).margin(1e-4));
    CHECK(s.gamma == s.mu + 1.2);
    CHECK(s.x_tilde0 == Catch::Approx(1.0 - gamma * std::exp(-kR)).epsilon(1e-10));
}

TEST_CASE("frontier variance matches the closed form")
{
    const auto market = fixtures::reference_market();
    const std::vector<double> targets{1.10, 1.15, 1.20, std::exp(kR)};
    const auto frontier = efficient_frontier(market, targets, 200);
    for (const auto& p : frontier.points) {
        const double exact = fixtures::market_variance(p.d, 1.0, kR, kThetaSq, 1.0);
        CHECK(std::abs(p.variance - exact) <= 1e-6);
        CHECK(std::abs(p.second_moment - p.riccati_second_moment) <= 1e-8 * std::abs(p.riccati_second_moment));
        CHECK(p.riccati_value_check == Catch::Approx(p.variance).margin(1e-8));
        CHECK(p.variance >= -1e-12);
    }
    CHECK(frontier.points[2].variance == Catch::Approx(0.2027).margin(5e-5));
    CHECK(std::abs(frontier.points[3].variance) <= 1e-10);
    CHECK(frontier.points[0].variance < frontier.points[1].variance);
    CHECK(frontier.points[1].variance < frontier.points[2].variance);
}

TEST_CASE("frontier is a parabola in d")
{
    const auto market = fixtures::reference_market();
    const std::vector<double> targets{1.0, 1.05, 1.1, 1.2, 1.3};
    const auto frontier = efficient_frontier(market, targets, 200);
    Eigen::MatrixXd V(5, 3);
    Eigen::VectorXd y(5);
    for (int i = 0; i < 5; ++i) {
        const double d = targets[i];
        V.row(i) << 1.0, d, d * d;
        y(i) = frontier.points[i].variance;
    }
    const Eigen::VectorXd coef = V.colPivHouseholderQr().solve(y);
    CHECK((V * coef - y).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("identical regimes collapse to the one-regime frontier")
{
    MatrixXd gen(2, 2);
    gen << -1.5, 1.5, 0.5, -0.5;
    const auto twin = market_with(kR, {0.12, 0.12}, {0.2, 0.2}, gen);
    const auto one = fixtures::reference_market();
    const std::vector<double> targets{1.1, 1.2};
    const auto a = efficient_frontier(twin, targets, 200);
    const auto b = efficient_frontier(one, targets, 200);
    for (std::size_t i = 0; i < targets.size(); ++i) {
        CHECK(a.points[i].variance == Catch::Approx(b.points[i].variance).epsilon(1e-12));
        CHECK(a.points[i].gamma == Catch::Approx(b.points[i].gamma).epsilon(1e-12));
    }
}

TEST_CASE("duality holds on a switching market")
{
    MatrixXd gen(2, 2);
    gen << -2, 2, 1, -1;
    RawMarket raw;
    raw.horizon = 1.0;
    raw.generator = gen;
    raw.segments = {MarketSegment{0.0, 0.03, {0.1, 0.01}, {0.25, 0.4}},
                    MarketSegment{0.5, 0.05, {0.08, 0.06}, {0.2, 0.3}}};
    raw.delta = 0.01;
    raw.x0 = 1.0;
    const auto market = validate_market(raw);
    const std::vector<double> targets{1.1, 1.2};
    const auto frontier = efficient_frontier(market, targets, 200);
    for (const auto& p : frontier.points) {
        CHECK(std::abs(p.second_moment - p.riccati_second_moment) <= 1e-8 * std::abs(p.riccati_second_moment));
        CHECK(p.variance > 0.0);
    }
}

TEST_CASE("simulated optimal wealth hits the target mean and variance")
{
    const auto market = fixtures::reference_market();
    const std::vector<double> targets{1.2};
    const auto frontier = efficient_frontier(market, targets, 200);
    const auto check =
        mv_simulate_check(market, frontier.grid, frontier.points[0], CheckOptions{200, 100000, 5, default_workers()});
    INFO(check.mean_check.note << " / " << check.variance_check.note);
    CHECK(check.mean_check.passed);
    CHECK(check.variance_check.passed);
}
