// Copyright (C) 2026 The selfres authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <string>

namespace selfres {

// Vigna's splitmix64. Single 64-bit state, passes BigCrush, and is trivial to
// reimplement bit-exactly in any language. Every random draw in the engine
// flows through this generator so that runs are reproducible cross-platform.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 24 bits of resolution: the top 24 bits of one
    // 64-bit draw divided by 2^24. One draw consumed per call.
    double next_unit() { return static_cast<double>(next() >> 40) * (1.0 / 16777216.0); }

    // Uniform in [-a, a): next_unit() mapped linearly. One draw per call.
    float next_symmetric(double a) { return static_cast<float>((2.0 * next_unit() - 1.0) * a); }

private:
    std::uint64_t state_;
};

// 64-bit FNV-1a over a byte string.
inline std::uint64_t fnv1a64(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Standard normal variates via Box-Muller on top of SplitMix64.
//
// Draw order: two consecutive next_unit() calls (u1 then u2) produce the pair
//   z0 = sqrt(-2 ln(1 - u1)) * cos(2 pi u2)
//   z1 = sqrt(-2 ln(1 - u1)) * sin(2 pi u2)
// z0 is returned first, z1 is cached for the following call. Using (1 - u1)
// keeps the log argument in (0, 1].
class GaussianStream {
public:
    explicit GaussianStream(std::uint64_t seed) : rng_(seed) {}

    double next() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        const double u1 = rng_.next_unit();
        const double u2 = rng_.next_unit();
        const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        cached_ = r * std::sin(theta);
        have_cached_ = true;
        return r * std::cos(theta);
    }

private:
    SplitMix64 rng_;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

}  // namespace selfres
