#include <doctest.h>

#include <algorithm>
#include <random>

#include "qkd/errors.hpp"
#include "qkd/sift.hpp"

using namespace qkd;

namespace {

ResolvedPair rp(std::uint64_t t, std::uint8_t ca, std::uint8_t cb) {
    return {t, ca, t + 3, cb, 3};
}

} // namespace

TEST_CASE("sifting keeps same-basis pairs and flags disagreements") {
    // channels: 0 = (Z,0), 1 = (Z,1), 2 = (X,0), 3 = (X,1)
    const std::vector<ResolvedPair> pairs = {
        rp(100, 0, 0), // Z agree
        rp(200, 0, 1), // Z error
        rp(300, 2, 3), // X error
        rp(400, 0, 2), // cross basis, dropped
        rp(500, 3, 3), // X agree
        rp(600, 1, 0), // Z error
    };
    const SiftResult s = sift(pairs);
    CHECK(s.raw_count == 6);
    CHECK(s.n_z == 3);
    CHECK(s.n_x == 2);
    REQUIRE(s.bits.size() == 5);

    CHECK(s.bits[0].basis == Basis::Z);
    CHECK(s.bits[0].alice_bit == 0);
    CHECK(s.bits[0].bob_bit == 0);
    CHECK(s.bits[1].alice_bit == 0);
    CHECK(s.bits[1].bob_bit == 1);
    CHECK(s.bits[2].basis == Basis::X);
    CHECK(s.bits[2].alice_bit == 0);
    CHECK(s.bits[2].bob_bit == 1);
    CHECK(s.bits[3].basis == Basis::X);
    CHECK(s.bits[3].alice_bit == 1);
    CHECK(s.bits[3].bob_bit == 1);
    CHECK(s.bits[4].basis == Basis::Z);
    CHECK(s.bits[4].alice_bit == 1);
    CHECK(s.bits[4].bob_bit == 0);

    const ErrorRates r = compute_error_rates(s);
    CHECK(r.n_z == 3);
    CHECK(r.n_x == 2);
    CHECK(r.errors_z == 2);
    CHECK(r.errors_x == 1);
    CHECK(r.e_bz == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(r.e_bx == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("sift output order follows alice timestamps") {
    std::vector<ResolvedPair> pairs = {
        rp(100, 0, 0), rp(200, 1, 1), rp(300, 2, 2),
        rp(400, 3, 3), rp(500, 0, 1), rp(600, 2, 3),
        rp(700, 1, 0), rp(800, 3, 2), rp(900, 0, 0),
    };
    const SiftResult ordered = sift(pairs);

    std::mt19937 shuffle_rng(12345);
    std::shuffle(pairs.begin(), pairs.end(), shuffle_rng);
    const SiftResult shuffled = sift(pairs);

    REQUIRE(ordered.bits.size() == shuffled.bits.size());
    for (std::size_t i = 0; i < ordered.bits.size(); ++i) {
        CHECK(ordered.bits[i].alice_time_ps == shuffled.bits[i].alice_time_ps);
        CHECK(ordered.bits[i].basis == shuffled.bits[i].basis);
        CHECK(ordered.bits[i].alice_bit == shuffled.bits[i].alice_bit);
        CHECK(ordered.bits[i].bob_bit == shuffled.bits[i].bob_bit);
    }
    for (std::size_t i = 1; i < ordered.bits.size(); ++i)
        CHECK(ordered.bits[i - 1].alice_time_ps <= ordered.bits[i].alice_time_ps);
}

TEST_CASE("stream overload resolves channels through the pair indices") {
    TagStream alice, bob;
    alice.push_back({1000, 0});
    alice.push_back({2000, 2});
    alice.push_back({3000, 1});
    bob.push_back({1001, 1});
    bob.push_back({2002, 2});
    bob.push_back({3003, 3});
    const std::vector<CoincidencePair> pairs = {
        {0, 0, 1}, {1, 1, 2}, {2, 2, 3}};

    const std::vector<ResolvedPair> resolved = resolve_pairs(alice, bob, pairs);
    REQUIRE(resolved.size() == 3);
    CHECK(resolved[0].alice_time_ps == 1000);
    CHECK(resolved[0].bob_time_ps == 1001);
    CHECK(resolved[0].alice_channel == 0);
    CHECK(resolved[0].bob_channel == 1);
    CHECK(resolved[1].dt_ps == 2);

    const SiftResult s = sift(alice, bob, pairs);
    CHECK(s.raw_count == 3);
    CHECK(s.n_z == 1); // (0,1): Z error
    CHECK(s.n_x == 1); // (2,2): X agree
    // (1,3) crosses bases and is dropped
    REQUIRE(s.bits.size() == 2);
    CHECK(s.bits[0].bob_bit == 1);
    CHECK(s.bits[1].bob_bit == 0);
}

TEST_CASE("resolve_pairs validates indices") {
    TagStream alice, bob;
    alice.push_back({1000, 0});
    bob.push_back({1001, 1});
    CHECK_THROWS_AS(resolve_pairs(alice, bob, {{1, 0, 0}}), DomainError);
    CHECK_THROWS_AS(resolve_pairs(alice, bob, {{0, 5, 0}}), DomainError);
}

TEST_CASE("sift rejects invalid channels") {
    CHECK_THROWS_AS(sift({rp(100, 4, 0)}), InvalidChannel);
    CHECK_THROWS_AS(sift({rp(100, 0, 9)}), InvalidChannel);
}

TEST_CASE("empty input sifts to empty") {
    const SiftResult s = sift(std::vector<ResolvedPair>{});
    CHECK(s.raw_count == 0);
    CHECK(s.bits.empty());
    CHECK_THROWS_AS(compute_error_rates(s), EmptyBasis);
}

TEST_CASE("error rates need both bases") {
    const SiftResult only_z = sift({rp(1, 0, 0), rp(2, 1, 1)});
    CHECK_THROWS_AS(compute_error_rates(only_z), EmptyBasis);
    const SiftResult only_x = sift({rp(1, 2, 2)});
    CHECK_THROWS_AS(compute_error_rates(only_x), EmptyBasis);
}
