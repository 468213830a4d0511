#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "framediff/common.hpp"
#include "framediff/rng.hpp"

using namespace framediff;

TEST_CASE("streams are deterministic per seed") {
    Rng a(42), b(42), c(43);
    for (int i = 0; i < 100; ++i) {
        CHECK(a.next_u64() == b.next_u64());
    }
    bool all_same = true;
    Rng a2(42), c2(43);
    for (int i = 0; i < 10; ++i)
        if (a2.next_u64() != c2.next_u64()) all_same = false;
    CHECK(!all_same);
}

TEST_CASE("uniform ranges") {
    Rng rng(7);
    for (int i = 0; i < 10000; ++i) {
        double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        double v = rng.uniform(2.0, 5.0);
        CHECK(v >= 2.0);
        CHECK(v <= 5.0);
        double w = rng.uniform_open();
        CHECK(w > 0.0);
        CHECK(w <= 1.0);
    }
}

TEST_CASE("integer draws cover both inclusive endpoints uniformly") {
    Rng rng(11);
    std::vector<long> counts(6, 0);
    for (int i = 0; i < 60000; ++i) {
        int v = rng.uniform_int(3, 8);
        REQUIRE(v >= 3);
        REQUIRE(v <= 8);
        ++counts[static_cast<std::size_t>(v - 3)];
    }
    for (long c : counts) {
        CHECK(c > 9000);  // expectation 10000; far outside any plausible fluctuation
        CHECK(c < 11000);
    }
    // degenerate range
    for (int i = 0; i < 10; ++i) CHECK(rng.uniform_int(5, 5) == 5);
}

TEST_CASE("gaussian moments") {
    Rng rng(13);
    const int N = 200000;
    double sum = 0.0, sum2 = 0.0, sum3 = 0.0;
    for (int i = 0; i < N; ++i) {
        double g = rng.gaussian();
        sum += g;
        sum2 += g * g;
        sum3 += g * g * g;
    }
    double mean = sum / N;
    double var = sum2 / N - mean * mean;
    double skew = sum3 / N;
    // standard errors: mean ~ 1/sqrt(N), var ~ sqrt(2/N), third moment ~ sqrt(15/N)
    CHECK(std::abs(mean) < 4.0 / std::sqrt(static_cast<double>(N)));
    CHECK(std::abs(var - 1.0) < 4.0 * std::sqrt(2.0 / N));
    CHECK(std::abs(skew) < 4.0 * std::sqrt(15.0 / N));
}

TEST_CASE("state serialization resumes the exact stream") {
    Rng rng(99);
    for (int i = 0; i < 7; ++i) rng.gaussian();  // odd count leaves a spare cached

    auto state = rng.save_state();
    std::vector<double> ahead;
    for (int i = 0; i < 20; ++i) ahead.push_back(rng.gaussian());

    Rng fresh(1);
    fresh.load_state(state);
    for (int i = 0; i < 20; ++i) CHECK(fresh.gaussian() == ahead[static_cast<std::size_t>(i)]);

    // also across a mixed call pattern
    auto state2 = rng.save_state();
    std::vector<double> mixed;
    mixed.push_back(rng.uniform());
    mixed.push_back(rng.gaussian());
    mixed.push_back(static_cast<double>(rng.uniform_int(0, 1000)));
    mixed.push_back(rng.gaussian());

    Rng again(2);
    again.load_state(state2);
    CHECK(again.uniform() == mixed[0]);
    CHECK(again.gaussian() == mixed[1]);
    CHECK(static_cast<double>(again.uniform_int(0, 1000)) == mixed[2]);
    CHECK(again.gaussian() == mixed[3]);

    CHECK_THROWS_AS(fresh.load_state("not a state"), InputError);
}

TEST_CASE("hex formatting of 64-bit values") {
    CHECK(hex64(0) == "0000000000000000");
    CHECK(hex64(0xdeadbeefull) == "00000000deadbeef");
    CHECK(hex64(0xffffffffffffffffull) == "ffffffffffffffff");
}
