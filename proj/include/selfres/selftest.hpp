// Copyright (C) 2026 The selfres authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "selfres/kernels.hpp"
#include "selfres/model.hpp"
#include "selfres/prng.hpp"
#include "selfres/sampler.hpp"
#include "selfres/synth.hpp"

namespace selfres {

// Fast invariant suite behind the `selftest` subcommand: a sanity pass over
// the engine without the full test harness. Returns 0 when every check holds.
inline int run_selftest(std::ostream& out) {
    std::size_t failures = 0;
    auto check = [&](const std::string& name, bool ok) {
        out << (ok ? "ok   " : "FAIL ") << name << "\n";
        if (!ok) ++failures;
    };

    {
        SplitMix64 rng(0);
        check("splitmix64 reference vector", rng.next() == 0xE220A8397B1DCDAFULL &&
                                                 rng.next() == 0x6E789E6AA1B965F4ULL);
    }
    {
        SplitMix64 rng(1234);
        bool ok = true;
        for (int i = 0; i < 200 && ok; ++i) {
            const std::size_t n = 1 + rng.next() % 16;
            std::vector<float> x(n);
            for (float& v : x) v = rng.next_symmetric(10.0);
            const std::vector<float> s = softmax_row(x);
            double sum = 0.0;
            for (float v : s) {
                sum += v;
                if (v < 0.0f) ok = false;
            }
            if (std::fabs(sum - 1.0) > 1e-6) ok = false;
        }
        check("softmax normalization", ok);
    }
    {
        SplitMix64 rng(99);
        bool ok = true;
        for (int t = 0; t < 50 && ok; ++t) {
            const std::size_t n = 1 + rng.next() % 6;
            const std::size_t d = 4;
            Matrix q(n, d), k(n, d), v(n, d);
            for (auto* m : {&q, &k, &v}) {
                for (float& x : m->data) x = rng.next_symmetric(2.0);
            }
            std::vector<Matrix> w;
            causal_attention(q, k, v, 2, &w);
            for (const Matrix& head : w) {
                for (std::size_t i = 0; i < n; ++i) {
                    double sum = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        if (j > i && head.at(i, j) != 0.0f) ok = false;
                        sum += head.at(i, j);
                    }
                    if (std::fabs(sum - 1.0) > 1e-6) ok = false;
                }
            }
        }
        check("causal mask and row normalization", ok);
    }
    {
        SplitMix64 rng(7);
        bool ok = true;
        for (int t = 0; t < 200 && ok; ++t) {
            const std::size_t n = 1 + rng.next() % 64;
            std::vector<float> scores(n);
            for (float& s : scores) s = static_cast<float>(rng.next() % 8);
            const std::size_t k = 1 + rng.next() % n;
            // brute-force oracle: exhaustive sort with explicit tie rule
            std::vector<std::size_t> order(n);
            std::iota(order.begin(), order.end(), 0);
            std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                if (scores[a] != scores[b]) return scores[a] > scores[b];
                return a < b;
            });
            std::vector<std::size_t> expected(order.begin(),
                                              order.begin() + static_cast<std::ptrdiff_t>(k));
            std::sort(expected.begin(), expected.end());
            if (select_top_k(scores, k) != expected) ok = false;
        }
        check("top-k selection vs oracle", ok);
    }
    {
        ModelConfig config;
        config.d = 16;
        config.heads = 2;
        config.layers = 6;
        config.d_ff = 64;
        config.frames_per_segment = 4;
        config.patches_per_frame = 4;
        config.patch_dim = 8;
        const Weights weights = init_weights(config);
        SyntheticSpec spec;
        spec.seed = 5;
        spec.class_name = "Arson";
        spec.total_frames = 24;
        spec.plant_windows = {{10, 14}};
        const VideoTokens video = gen_synthetic(spec, weights, config);
        bool ok = true;
        for (std::size_t ns : {1, 3}) {
            for (auto mode : {ScheduleMode::regular, ScheduleMode::smooth}) {
                const SamplingSchedule schedule = make_schedule(mode, 2, ns, 2, config.layers);
                const Signature sig = run_selfres(video, schedule, ns, weights, config);
                std::size_t expected = ns * config.frames_per_segment * config.patches_per_frame;
                for (const ScheduleStep& step : schedule.steps) {
                    expected = prune_count(step.fraction, expected);
                }
                if (sig.retained.size() != expected) ok = false;
            }
        }
        check("token-count law", ok);
    }
    {
        ModelConfig config;
        config.d = 16;
        config.heads = 2;
        config.layers = 4;
        config.d_ff = 64;
        config.frames_per_segment = 4;
        config.patches_per_frame = 4;
        config.patch_dim = 8;
        const Weights weights = init_weights(config);
        SyntheticSpec spec;
        spec.seed = 11;
        spec.class_name = "Fighting";
        spec.total_frames = 20;
        spec.plant_windows = {{3, 7}};
        const VideoTokens video = gen_synthetic(spec, weights, config);
        const SamplingSchedule schedule =
            make_schedule(ScheduleMode::smooth, 1, 3, 2, config.layers);
        const Signature a = run_selfres(video, schedule, 3, weights, config);
        const Signature b = run_selfres(video, schedule, 3, weights, config);
        const bool ok = a.retained == b.retained &&
                        a.retained_states.data == b.retained_states.data &&
                        a.pooled == b.pooled && a.final_token_state == b.final_token_state;
        check("bitwise determinism", ok);
    }

    if (failures == 0) {
        out << "selftest passed\n";
        return 0;
    }
    out << "selftest FAILED (" << failures << " checks)\n";
    return 1;
}

}  // namespace selfres
