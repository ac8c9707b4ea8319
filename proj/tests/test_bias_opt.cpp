#include <doctest.h>

#include <cmath>

#include "qkd/bias_opt.hpp"
#include "qkd/errors.hpp"

using namespace qkd;

static RateModel reference_model() {
    RateModel m;
    m.raw_count = 34644;
    m.e_bx = 0.069;
    m.e_bz = 0.065;
    return m;
}

TEST_CASE("expected counts round half away from the exact products") {
    ExpectedCounts c = expected_counts(34644, 0.8);
    CHECK(c.n_x == 1386); // 34644 * 0.04  = 1385.76
    CHECK(c.n_z == 22172); // 34644 * 0.64 = 22172.16
    c = expected_counts(34644, 0.5);
    CHECK(c.n_x == 8661);
    CHECK(c.n_z == 8661);
    c = expected_counts(10, 1.0);
    CHECK(c.n_x == 0);
    CHECK(c.n_z == 10);
    CHECK_THROWS_AS(expected_counts(0, 0.5), DomainError);
    CHECK_THROWS_AS(expected_counts(10, 1.5), InvalidProbability);
}

TEST_CASE("unbiased key length matches the frozen value") {
    const BiasCurvePoint p = key_length_vs_bias(reference_model(), 0.5);
    CHECK(p.n_x == 8661);
    CHECK(p.n_z == 8661);
    // frozen: 3748.18613610101; theta bisection tolerance propagates
    CHECK(p.key_real == doctest::Approx(3748.186136).epsilon(2e-5));
    CHECK(p.final_key_len == 3748);
    CHECK_FALSE(p.empty_basis);
    CHECK_FALSE(p.insecure);
}

TEST_CASE("model-count improvement at q 0.8 matches the frozen value") {
    // expected_counts split of the same raw key at both biases
    CHECK(improvement(reference_model(), 0.8) ==
          doctest::Approx(11.5704862866).epsilon(1e-5));
}

TEST_CASE("optimizer lands on the frozen optimum") {
    const OptimizeResult r = optimize_bias(reference_model());
    CHECK(r.q_opt == doctest::Approx(0.77987214).epsilon(3e-3));
    CHECK(r.at_opt.final_key_len == 4199);
    // never worse than the best grid point
    const BiasCurvePoint grid =
        key_length_vs_bias(reference_model(), 798.0 / 1024.0);
    CHECK(r.at_opt.key_real >= grid.key_real);
}

TEST_CASE("large raw budget pushes the optimum toward Z") {
    RateModel m = reference_model();
    m.raw_count = 1000000;
    const OptimizeResult r = optimize_bias(m);
    CHECK(r.q_opt == doctest::Approx(0.92112893).epsilon(3e-3));
    CHECK(improvement(m, r.q_opt) == doctest::Approx(52.0657).epsilon(1e-3));
}

TEST_CASE("asymptotic equal-cost improvement is the sift-factor ratio") {
    RateModel m;
    m.raw_count = 10000;
    m.e_bx = m.e_bz = 0.069;
    m.f_x = m.f_z = 1.1;
    m.asymptotic = true;
    // counts are exactly representable: 400/6400 vs 2500/2500
    CHECK(improvement(m, 0.8) == doctest::Approx(36.0).epsilon(1e-9));
}

TEST_CASE("asymptotic optimizer runs into the boundary") {
    RateModel m;
    m.raw_count = 10000;
    m.e_bx = m.e_bz = 0.05;
    m.f_x = m.f_z = 1.1;
    m.asymptotic = true;
    const OptimizeResult r = optimize_bias(m);
    // with theta = 0 the sift factor grows all the way to q = 1
    CHECK(r.q_opt == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.at_opt.empty_basis);
    CHECK(r.at_opt.key_real > 0.0);
}

TEST_CASE("empty basis in finite mode yields zero key at that point") {
    const BiasCurvePoint p = key_length_vs_bias(reference_model(), 1.0);
    CHECK(p.empty_basis);
    CHECK(p.key_real == 0.0);
    CHECK(p.final_key_len == 0);
}

TEST_CASE("hopeless model raises NoSecureBias") {
    RateModel m;
    m.raw_count = 100;
    m.e_bx = m.e_bz = 0.25;
    CHECK_THROWS_AS(optimize_bias(m), NoSecureBias);
    CHECK_THROWS_AS(improvement(m, 0.8), NoSecureBias);
}

TEST_CASE("mirrored domain gives the mirrored optimum") {
    RateModel m = reference_model();
    RateModel swapped = m;
    std::swap(swapped.e_bx, swapped.e_bz);
    std::swap(swapped.f_x, swapped.f_z);
    const OptimizeResult zside = optimize_bias(m, 0.5, 1.0);
    const OptimizeResult xside = optimize_bias(swapped, 0.0, 0.5);
    CHECK(std::abs(xside.q_opt - (1.0 - zside.q_opt)) <= 1.5 / 1024.0);
    CHECK(xside.at_opt.final_key_len == zside.at_opt.final_key_len);
}

TEST_CASE("bias_curve covers the inclusive grid") {
    const auto curve = bias_curve(reference_model(), 0.5, 1.0, 4);
    REQUIRE(curve.size() == 5);
    CHECK(curve.front().q == doctest::Approx(0.5));
    CHECK(curve.back().q == doctest::Approx(1.0));
    for (const BiasCurvePoint& p : curve)
        CHECK(p.final_key_len == std::int64_t(std::floor(p.key_real)));
    CHECK_THROWS_AS(bias_curve(reference_model(), 0.5, 1.0, 0), DomainError);
}

TEST_CASE("optimizer input validation") {
    RateModel m = reference_model();
    CHECK_THROWS_AS(optimize_bias(m, 0.8, 0.8), DomainError);
    CHECK_THROWS_AS(optimize_bias(m, -0.1, 0.5), DomainError);
    m.raw_count = 0;
    CHECK_THROWS_AS(optimize_bias(m), DomainError);
    m = reference_model();
    m.e_bx = 0.6;
    CHECK_THROWS_AS(key_length_vs_bias(m, 0.5), DomainError);
}
