// Copyright (C) 2026 The selfres authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "selfres/prng.hpp"

using namespace selfres;

TEST_CASE("splitmix64 matches the reference sequence") {
    SplitMix64 rng(0);
    CHECK(rng.next() == 0xE220A8397B1DCDAFULL);
    CHECK(rng.next() == 0x6E789E6AA1B965F4ULL);
    CHECK(rng.next() == 0x06C45D188009454FULL);

    SplitMix64 rng42(42);
    CHECK(rng42.next() == 0xBDD732262FEB6E95ULL);
    CHECK(rng42.next() == 0x28EFE333B266F103ULL);
}

TEST_CASE("splitmix64 is deterministic per seed") {
    SplitMix64 a(123456789), b(123456789);
    for (int i = 0; i < 100; ++i) {
        REQUIRE(a.next() == b.next());
    }
}

TEST_CASE("unit draws live in [0,1) with 24-bit resolution") {
    SplitMix64 rng(7);
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.next_unit();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        // exact multiple of 2^-24
        const double scaled = u * 16777216.0;
        REQUIRE(scaled == std::floor(scaled));
    }
}

TEST_CASE("symmetric draws stay within [-a, a)") {
    SplitMix64 rng(9);
    const double a = 0.25;
    for (int i = 0; i < 10000; ++i) {
        const float v = rng.next_symmetric(a);
        REQUIRE(v >= -a);
        REQUIRE(v < a);
    }
}

TEST_CASE("fnv1a64 known vectors") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a64("fighting") == 0x5d7de8be02a89b97ULL);
}

TEST_CASE("gaussian stream is deterministic and roughly standard") {
    GaussianStream a(2024), b(2024);
    double sum = 0.0, sumsq = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double x = a.next();
        REQUIRE(x == b.next());
        REQUIRE(std::isfinite(x));
        sum += x;
        sumsq += x * x;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    CHECK(std::fabs(mean) < 0.02);
    CHECK(std::fabs(var - 1.0) < 0.03);
}
