// Copyright (C) 2026 The selfres authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "selfres/errors.hpp"
#include "selfres/model.hpp"
#include "selfres/prng.hpp"
#include "selfres/sampler.hpp"
#include "selfres/segment.hpp"

namespace selfres {

// Recipe for one synthetic video: an event of the given class is planted in
// the listed frame windows (half-open [start, end)), occupying the first
// plant_patch_fraction of each frame's patch grid. Everything else is noise.
struct SyntheticSpec {
    std::uint64_t seed = 0;
    std::string class_name;
    std::size_t total_frames = 0;
    std::vector<std::pair<std::size_t, std::size_t>> plant_windows;
    float plant_patch_fraction = 0.5f;
    float noise_sigma = 0.5f;
};

// Generates patch features for a spec. Planted patches are the class
// prototype plus noise_sigma * gaussian; non-planted patches are pure
// gaussian noise of the same variance. One splitmix64 stream seeded with
// spec.seed drives all draws, consumed in (frame, patch, component) order,
// one gaussian per component regardless of plant placement.
inline VideoTokens gen_synthetic(const SyntheticSpec& spec, const Weights& weights,
                                 const ModelConfig& config) {
    if (spec.total_frames == 0) throw InputError("gen_synthetic: need at least one frame");
    std::vector<bool> planted_frame(spec.total_frames, false);
    for (const auto& [start, end] : spec.plant_windows) {
        if (start >= end || end > spec.total_frames) {
            throw InputError("gen_synthetic: window [" + std::to_string(start) + "," +
                             std::to_string(end) + ") out of range for T=" +
                             std::to_string(spec.total_frames));
        }
        for (std::size_t f = start; f < end; ++f) planted_frame[f] = true;
    }

    const std::size_t ppf = config.patches_per_frame;
    const std::size_t dp = config.patch_dim;
    const std::size_t planted_patches = static_cast<std::size_t>(std::floor(
        static_cast<double>(spec.plant_patch_fraction) * static_cast<double>(ppf)));

    std::vector<float> prototype;
    if (!spec.plant_windows.empty()) {
        prototype = class_prototype(spec.class_name, weights);
    }

    VideoTokens video;
    video.class_name = spec.class_name;
    video.total_frames = spec.total_frames;
    video.patches_per_frame = ppf;
    video.patch_dim = dp;
    video.features.resize(spec.total_frames * ppf * dp);

    GaussianStream gauss(spec.seed);
    const double sigma = static_cast<double>(spec.noise_sigma);
    std::size_t i = 0;
    for (std::size_t frame = 0; frame < spec.total_frames; ++frame) {
        for (std::size_t p = 0; p < ppf; ++p) {
            const bool plant = planted_frame[frame] && p < planted_patches;
            for (std::size_t c = 0; c < dp; ++c, ++i) {
                const double g = sigma * gauss.next();
                video.features[i] =
                    static_cast<float>(plant ? static_cast<double>(prototype[c]) + g : g);
            }
            if (plant) {
                video.planted_tokens.insert(
                    static_cast<std::uint64_t>(frame * ppf + p));
            }
        }
    }
    return video;
}

// Fraction of ground-truth planted tokens that survived into the signature,
// matched on (frame, patch) against the original timeline. Duplicate sampled
// frames count once.
inline double planted_recall(const Signature& sig, const std::set<std::uint64_t>& planted,
                             std::size_t patches_per_frame) {
    if (planted.empty()) throw UsageError("planted_recall: ground truth is empty");
    std::set<std::uint64_t> retained;
    for (const VisualToken& t : sig.retained) {
        retained.insert(static_cast<std::uint64_t>(t.frame_id * patches_per_frame + t.patch_id));
    }
    std::size_t hit = 0;
    for (std::uint64_t id : planted) hit += retained.count(id);
    return static_cast<double>(hit) / static_cast<double>(planted.size());
}

// Analytical per-layer compute estimate for a run trace.
//
// A layer processing n live tokens costs, in multiply-accumulate-style flops:
//   8 n d^2   (q, k, v, o projections)
// + 4 n^2 d   (attention scores and value mixing)
// + 4 n d d_ff (MLP), which is 16 n d^2 when d_ff = 4d,
// giving the compact F(n) = 24 n d^2 + 4 n^2 d in that case. The trace length
// is the aggregate live token count per layer, so during the segment phase
// attention cost is modeled over the combined budget.
struct FlopReport {
    std::vector<std::size_t> lengths;        // per-layer live token counts
    std::vector<std::uint64_t> layer_flops;  // per-layer cost
    std::uint64_t total = 0;
    std::uint64_t baseline_total = 0;  // same formula with n held at lengths[0]
    double ratio = 1.0;                // total / baseline_total
};

inline std::uint64_t layer_flops(std::size_t n, const ModelConfig& config) {
    const std::uint64_t nn = n;
    const std::uint64_t d = config.d;
    const std::uint64_t dff = config.d_ff;
    return 8 * nn * d * d + 4 * nn * nn * d + 4 * nn * d * dff;
}

inline FlopReport flops_estimate(const std::vector<std::size_t>& trace,
                                 const ModelConfig& config) {
    if (trace.size() != config.layers) {
        throw UsageError("flops_estimate: trace has " + std::to_string(trace.size()) +
                         " layers, config has " + std::to_string(config.layers));
    }
    FlopReport report;
    report.lengths = trace;
    report.layer_flops.reserve(trace.size());
    for (std::size_t n : trace) {
        if (n == 0) throw UsageError("flops_estimate: zero-length layer in trace");
        report.layer_flops.push_back(layer_flops(n, config));
        report.total += report.layer_flops.back();
    }
    report.baseline_total = static_cast<std::uint64_t>(config.layers) *
                            layer_flops(trace.front(), config);
    report.ratio = static_cast<double>(report.total) / static_cast<double>(report.baseline_total);
    return report;
}

// Picks plant windows that sit off the uniform sampling grid. Placements
// whose frames dodge the grid entirely are preferred (linear sampling of
// `frame_budget` frames then sees none of the event); when the geometry does
// not allow that, falls back to random placements keeping grid hits under 30%
// of the planted frames. Deterministic given the rng state.
inline std::vector<std::pair<std::size_t, std::size_t>> choose_offgrid_windows(
    SplitMix64& rng, std::size_t total_frames, std::size_t frame_budget,
    std::size_t window_count, std::size_t window_len) {
    if (window_count == 0 || window_len == 0) {
        throw UsageError("choose_offgrid_windows: need at least one window of length >= 1");
    }
    if (window_count * window_len > total_frames) {
        throw UsageError("choose_offgrid_windows: windows do not fit in the video");
    }
    std::set<std::size_t> grid;
    for (std::size_t f : sample_frames_linear(total_frames, frame_budget)) grid.insert(f);

    // all starts whose window avoids the grid completely
    std::vector<std::size_t> clear_starts;
    for (std::size_t start = 0; start + window_len <= total_frames; ++start) {
        bool clear = true;
        for (std::size_t f = start; f < start + window_len && clear; ++f) {
            clear = grid.count(f) == 0;
        }
        if (clear) clear_starts.push_back(start);
    }

    std::vector<std::pair<std::size_t, std::size_t>> windows;
    std::vector<std::size_t> candidates = clear_starts;
    while (windows.size() < window_count && !candidates.empty()) {
        const std::size_t start = candidates[rng.next() % candidates.size()];
        windows.emplace_back(start, start + window_len);
        std::vector<std::size_t> remaining;
        for (std::size_t s : candidates) {
            if (s + window_len <= start || s >= start + window_len) remaining.push_back(s);
        }
        candidates = std::move(remaining);
    }
    if (windows.size() == window_count) {
        std::sort(windows.begin(), windows.end());
        return windows;
    }

    // fallback: random non-overlapping placements, best grid avoidance wins
    std::vector<std::pair<std::size_t, std::size_t>> best;
    std::size_t best_hits = static_cast<std::size_t>(-1);
    for (int attempt = 0; attempt < 64; ++attempt) {
        std::vector<std::pair<std::size_t, std::size_t>> candidate;
        for (std::size_t w = 0; w < window_count; ++w) {
            const std::size_t span = total_frames - window_len + 1;
            for (int placement = 0; placement < 32; ++placement) {
                const std::size_t start = rng.next() % span;
                const std::size_t end = start + window_len;
                bool overlaps = false;
                for (const auto& [s, e] : candidate) {
                    if (start < e && s < end) overlaps = true;
                }
                if (!overlaps) {
                    candidate.emplace_back(start, end);
                    break;
                }
            }
        }
        if (candidate.size() != window_count) continue;
        std::sort(candidate.begin(), candidate.end());
        std::size_t hits = 0;
        for (const auto& [start, end] : candidate) {
            for (std::size_t f = start; f < end; ++f) hits += grid.count(f);
        }
        if (hits < best_hits) {
            best_hits = hits;
            best = candidate;
        }
        const std::size_t planted = window_count * window_len;
        if (static_cast<double>(hits) < 0.3 * static_cast<double>(planted)) break;
    }
    if (best.empty()) throw InternalError("choose_offgrid_windows: no placement found");
    return best;
}

// One-sided sign test: probability of at least `wins` successes in
// wins + losses fair coin flips. Ties are dropped by the caller.
inline double sign_test_one_sided_p(std::size_t wins, std::size_t losses) {
    const std::size_t n = wins + losses;
    if (n == 0) return 1.0;
    double p = 0.0;
    for (std::size_t k = wins; k <= n; ++k) {
        const double log_term = std::lgamma(static_cast<double>(n) + 1.0) -
                                std::lgamma(static_cast<double>(k) + 1.0) -
                                std::lgamma(static_cast<double>(n - k) + 1.0) -
                                static_cast<double>(n) * std::log(2.0);
        p += std::exp(log_term);
    }
    return std::min(p, 1.0);
}

}  // namespace selfres
