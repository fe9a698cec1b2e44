#include <catch_amalgamated.hpp>

#include "fixtures.hpp"

using namespace rslq;
using Eigen::MatrixXd;

namespace {

ErrorKind kind_of(const RawProblem& raw)
{
    try {
        validate_problem(raw);
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("validation unexpectedly succeeded");
    return ErrorKind::InvalidArgument;
}

} // namespace

TEST_CASE("scalar problem is accepted")
{
    const auto p = fixtures::scalar_problem();
    CHECK(p.n == 1);
    CHECK(p.m == 1);
    CHECK(p.regimes == 1);
    CHECK(p.breakpoints == std::vector<double>{0.0, 1.0});
}

TEST_CASE("nearly symmetric weights are symmetrized")
{
    auto raw = fixtures::single_segment(2, 1, 1, 1.0, MatrixXd::Zero(1, 1));
    raw.coefficients[0][0].Q << 1, 0.3, 0.3000000005, 1;
    raw.coefficients[0][0].R(0, 0) = 1.0;
    const auto p = validate_problem(raw);
    const auto& Q = p.coefficients[0][0].Q;
    CHECK(Q(0, 1) == Q(1, 0));
    CHECK(std::abs(Q(0, 1) - 0.30000000025) < 1e-12);
}

TEST_CASE("asymmetric weights are rejected")
{
    auto raw = fixtures::single_segment(2, 1, 1, 1.0, MatrixXd::Zero(1, 1));
    raw.coefficients[0][0].Q << 1, 0.3, 0.4, 1;
    CHECK(kind_of(raw) == ErrorKind::AsymmetricWeight);
}

TEST_CASE("shape mismatches are rejected")
{
    auto raw = fixtures::single_segment(2, 2, 1, 1.0, MatrixXd::Zero(1, 1));
    raw.coefficients[0][0].B = MatrixXd::Zero(2, 3);
    CHECK(kind_of(raw) == ErrorKind::DimensionMismatch);

    auto gen = fixtures::single_segment(1, 1, 2, 1.0, MatrixXd::Zero(3, 3));
    CHECK(kind_of(gen) == ErrorKind::DimensionMismatch);
}

TEST_CASE("segments must start at zero and increase")
{
    auto raw = fixtures::single_segment(1, 1, 1, 1.0, MatrixXd::Zero(1, 1));
    raw.segment_starts = {0.1};
    CHECK(kind_of(raw) == ErrorKind::BadSegments);

    raw.segment_starts = {0.0, 0.5};
    raw.coefficients.push_back(raw.coefficients[0]);
    const auto ok = validate_problem(raw);
    CHECK(ok.segment_count() == 2);

    raw.segment_starts = {0.0, 1.0};
    CHECK(kind_of(raw) == ErrorKind::BadSegments);
    raw.segment_starts = {0.0, 0.0};
    CHECK(kind_of(raw) == ErrorKind::BadSegments);
}

TEST_CASE("negative rates are rejected through the generator")
{
    MatrixXd gen(2, 2);
    gen << 1, -1, 1, -1;
    auto raw = fixtures::single_segment(1, 1, 2, 1.0, gen);
    CHECK(kind_of(raw) == ErrorKind::NegativeOffDiagonal);
}

TEST_CASE("coeff_at is right-continuous with T in the last segment")
{
    auto raw = fixtures::single_segment(1, 1, 1, 1.0, MatrixXd::Zero(1, 1));
    raw.segment_starts = {0.0, 0.5};
    raw.coefficients.push_back(raw.coefficients[0]);
    raw.coefficients[0][0].A(0, 0) = 1.0;
    raw.coefficients[1][0].A(0, 0) = 2.0;
    const auto p = validate_problem(raw);
    CHECK(coeff_at(p, 0.0, 0).A(0, 0) == 1.0);
    CHECK(coeff_at(p, 0.4999, 0).A(0, 0) == 1.0);
    CHECK(coeff_at(p, 0.5, 0).A(0, 0) == 2.0);
    CHECK(coeff_at(p, 1.0, 0).A(0, 0) == 2.0);
    CHECK(&coeff_at(p, 0.7, 0) == &coeff_at(p, 0.7, 0));
    CHECK_THROWS_AS(coeff_at(p, 1.5, 0), Error);
    CHECK_THROWS_AS(coeff_at(p, -0.1, 0), Error);

    const auto single = fixtures::scalar_problem();
    CHECK(coeff_at(single, 0.0, 0) == coeff_at(single, 0.99, 0));
}

TEST_CASE("validated problems survive to_raw round trips")
{
    const auto p = fixtures::stochastic_problem();
    CHECK(validate_problem(to_raw(p)) == p);
}
