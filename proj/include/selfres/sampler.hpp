// Copyright (C) 2026 The selfres authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "selfres/errors.hpp"
#include "selfres/kernels.hpp"
#include "selfres/model.hpp"
#include "selfres/segment.hpp"

namespace selfres {

enum class ScheduleMode { regular, smooth, custom };

inline const char* schedule_mode_name(ScheduleMode m) {
    switch (m) {
        case ScheduleMode::regular: return "Regular";
        case ScheduleMode::smooth: return "Smooth";
        default: return "Custom";
    }
}

struct ScheduleStep {
    std::size_t layer = 0;    // which decoder layer's output gets pruned
    float fraction = 1.0f;    // retention fraction in (0, 1]
};

// The self-reflective layers and their retention fractions. Layer indices are
// strictly increasing and below the model depth; fractions lie in (0, 1].
struct SamplingSchedule {
    ScheduleMode mode = ScheduleMode::custom;
    std::vector<ScheduleStep> steps;

    void validate(std::size_t num_layers) const {
        for (std::size_t i = 0; i < steps.size(); ++i) {
            if (steps[i].layer >= num_layers) {
                throw ConfigError("schedule: layer " + std::to_string(steps[i].layer) +
                                  " out of range (L=" + std::to_string(num_layers) + ")");
            }
            if (!(steps[i].fraction > 0.0f) || steps[i].fraction > 1.0f) {
                throw ConfigError("schedule: fraction must be in (0,1], got " +
                                  std::to_string(steps[i].fraction));
            }
            if (i > 0 && steps[i].layer <= steps[i - 1].layer) {
                throw ConfigError("schedule: layer indices must be strictly increasing");
            }
        }
    }
};

// Builds the two named schedules.
//
// Regular: one sampling event [(r, 1/N_s)] that prunes the visual budget back
// to one default segment's worth.
//
// Smooth: m consecutive events at layers r..r+m-1, each retaining
// (1/N_s)^(1/m), so the product of fractions is 1/N_s. Layers past the stack
// are clamped to L-1; events that collapse onto the same layer merge into one
// with the product of their fractions.
inline SamplingSchedule make_schedule(ScheduleMode mode, std::size_t r,
                                      std::size_t num_segments, std::size_t smooth_steps,
                                      std::size_t num_layers) {
    if (r >= num_layers) {
        throw ConfigError("make_schedule: layer " + std::to_string(r) + " out of range (L=" +
                          std::to_string(num_layers) + ")");
    }
    if (num_segments == 0) throw ConfigError("make_schedule: need at least one segment");
    if (smooth_steps == 0) throw ConfigError("make_schedule: need at least one smooth step");

    SamplingSchedule schedule;
    schedule.mode = mode;
    if (mode == ScheduleMode::regular) {
        schedule.steps.push_back({r, static_cast<float>(1.0 / static_cast<double>(num_segments))});
    } else if (mode == ScheduleMode::smooth) {
        const double per_step = std::pow(1.0 / static_cast<double>(num_segments),
                                         1.0 / static_cast<double>(smooth_steps));
        for (std::size_t i = 0; i < smooth_steps; ++i) {
            const std::size_t layer = std::min(r + i, num_layers - 1);
            if (!schedule.steps.empty() && schedule.steps.back().layer == layer) {
                schedule.steps.back().fraction = static_cast<float>(
                    static_cast<double>(schedule.steps.back().fraction) * per_step);
            } else {
                schedule.steps.push_back({layer, static_cast<float>(per_step)});
            }
        }
    } else {
        throw ConfigError("make_schedule: custom schedules are built directly");
    }
    schedule.validate(num_layers);
    return schedule;
}

enum class ScoreMode { attention, cosine };

// Slices the final-token attention distribution down to the visual span.
inline std::vector<float> score_visual_tokens(const std::vector<float>& last_row_weights,
                                              const TokenLayout& layout) {
    if (last_row_weights.size() != layout.total()) {
        throw InternalError("score_visual_tokens: weights length " +
                            std::to_string(last_row_weights.size()) +
                            " does not match layout length " + std::to_string(layout.total()));
    }
    return std::vector<float>(last_row_weights.begin() +
                                  static_cast<std::ptrdiff_t>(layout.visual_start),
                              last_row_weights.begin() +
                                  static_cast<std::ptrdiff_t>(layout.visual_end));
}

// Ablation scoring: cosine of each visual token's hidden state against the
// final input token's hidden state.
inline std::vector<float> cosine_scores(const Matrix& hidden, const TokenLayout& layout) {
    if (hidden.rows != layout.total()) {
        throw InternalError("cosine_scores: hidden rows do not match layout");
    }
    const std::span<const float> final_row(hidden.row(hidden.rows - 1), hidden.cols);
    std::vector<float> scores(layout.visual_count());
    for (std::size_t j = 0; j < scores.size(); ++j) {
        scores[j] = static_cast<float>(
            cosine(std::span<const float>(hidden.row(layout.visual_start + j), hidden.cols),
                   final_row));
    }
    return scores;
}

// Indices of the k largest scores, ties broken toward the lower index,
// returned in ascending order so temporal order is preserved.
inline std::vector<std::size_t> select_top_k(std::span<const float> scores, std::size_t k) {
    if (k == 0 || k > scores.size()) {
        throw UsageError("select_top_k: k=" + std::to_string(k) + " out of range for " +
                         std::to_string(scores.size()) + " scores");
    }
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    // stable sort keeps the lower index first among equal scores
    std::stable_sort(idx.begin(), idx.end(),
                     [&scores](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

// Token budget after one sampling step: keep floor(fraction * live), never
// less than one token.
inline std::size_t prune_count(float fraction, std::size_t live_visual) {
    if (!(fraction > 0.0f) || fraction > 1.0f) {
        throw ConfigError("sampling fraction must be in (0,1], got " + std::to_string(fraction));
    }
    const auto k = static_cast<std::size_t>(
        std::floor(static_cast<double>(fraction) * static_cast<double>(live_visual)));
    return std::max<std::size_t>(1, k);
}

// Rebuilds a sequence keeping only the listed visual tokens (ascending local
// indices). System and user rows always survive; pruned rows are dropped.
inline SequenceState prune_visual(const SequenceState& seq,
                                  const std::vector<std::size_t>& keep_local) {
    const TokenLayout& lay = seq.layout;
    SequenceState out;
    out.layout.n_sys = lay.n_sys;
    out.layout.n_user = lay.n_user;
    out.layout.visual_start = lay.n_sys;
    out.layout.visual_end = lay.n_sys + keep_local.size();
    out.layout.provenance.reserve(keep_local.size());
    out.hidden = Matrix(lay.n_sys + keep_local.size() + lay.n_user, seq.hidden.cols);

    const std::size_t d = seq.hidden.cols;
    for (std::size_t r = 0; r < lay.n_sys; ++r) {
        std::copy(seq.hidden.row(r), seq.hidden.row(r) + d, out.hidden.row(r));
    }
    for (std::size_t i = 0; i < keep_local.size(); ++i) {
        const std::size_t src = keep_local[i];
        if (src >= lay.visual_count() || (i > 0 && keep_local[i - 1] >= src)) {
            throw InternalError("prune_visual: keep list must be ascending and in range");
        }
        const float* row = seq.hidden.row(lay.visual_start + src);
        std::copy(row, row + d, out.hidden.row(lay.n_sys + i));
        out.layout.provenance.push_back(lay.provenance[src]);
    }
    for (std::size_t r = 0; r < lay.n_user; ++r) {
        const float* row = seq.hidden.row(lay.visual_end + r);
        std::copy(row, row + d, out.hidden.row(out.layout.visual_end + r));
    }
    return out;
}

// One sampling step over a single sequence: score, top-k select, drop.
inline SequenceState sample_step(const SequenceState& seq, std::span<const float> scores,
                                 float fraction,
                                 std::vector<VisualToken>* retained_out = nullptr) {
    if (scores.size() != seq.layout.visual_count()) {
        throw InternalError("sample_step: scores do not cover the live visual tokens");
    }
    const std::size_t k = prune_count(fraction, scores.size());
    const std::vector<std::size_t> keep = select_top_k(scores, k);
    if (retained_out) {
        retained_out->clear();
        for (std::size_t i : keep) retained_out->push_back(seq.layout.provenance[i]);
    }
    return prune_visual(seq, keep);
}

struct GlobalPhiOutcome {
    std::vector<std::vector<std::size_t>> kept_per_segment;  // ascending local indices
    std::vector<VisualToken> retained;                       // global provenance order
    std::size_t scored = 0;
    std::size_t kept_total = 0;
    std::size_t best_segment = 0;  // highest mean visual score, ties to lower id
};

// One sampling step applied globally across segments: all live visual tokens
// compete in a single top-k regardless of which segment they sit in. Segments
// whose surviving visual count is zero drop out entirely, which is how the
// segment count shrinks.
inline GlobalPhiOutcome sample_step_global(const SegmentBatch& batch,
                                           const std::vector<std::vector<float>>& seg_scores,
                                           float fraction) {
    const std::vector<SequenceState>& segments = batch.sequences;
    if (segments.size() != seg_scores.size()) {
        throw InternalError("sample_step_global: segment/score count mismatch");
    }
    std::vector<float> flat;
    std::vector<std::pair<std::size_t, std::size_t>> owner;  // (segment, local index)
    for (std::size_t s = 0; s < segments.size(); ++s) {
        if (seg_scores[s].size() != segments[s].layout.visual_count()) {
            throw InternalError("sample_step_global: scores do not match segment " +
                                std::to_string(s));
        }
        for (std::size_t j = 0; j < seg_scores[s].size(); ++j) {
            flat.push_back(seg_scores[s][j]);
            owner.emplace_back(s, j);
        }
    }

    GlobalPhiOutcome out;
    out.scored = flat.size();
    out.kept_total = prune_count(fraction, flat.size());
    const std::vector<std::size_t> keep = select_top_k(flat, out.kept_total);

    out.kept_per_segment.assign(segments.size(), {});
    for (std::size_t g : keep) {
        const auto [s, j] = owner[g];
        out.kept_per_segment[s].push_back(j);
        out.retained.push_back(segments[s].layout.provenance[j]);
    }

    double best_mean = -1.0;
    for (std::size_t s = 0; s < segments.size(); ++s) {
        double mean = 0.0;
        for (float v : seg_scores[s]) mean += v;
        mean /= static_cast<double>(seg_scores[s].size());
        if (mean > best_mean) {
            best_mean = mean;
            out.best_segment = s;
        }
    }
    return out;
}

struct PhiRecord {
    float fraction = 1.0f;
    std::size_t scored = 0;
    std::size_t kept = 0;
    std::vector<VisualToken> retained;
};

struct TraceEntry {
    std::size_t layer = 0;
    std::size_t live_tokens = 0;  // tokens processed by this layer, all live sequences
    std::optional<PhiRecord> phi;
};

// The pruned spatio-temporal signature of a video, conditioned on the query:
// retained token identities with their final hidden states, the final input
// token's state, the pooled state, and the per-layer trace.
struct Signature {
    std::vector<VisualToken> retained;  // (segment, frame, patch) lexicographic
    Matrix retained_states;             // |retained| x d, final-layer states
    std::vector<float> final_token_state;
    std::vector<float> pooled;          // mean of retained visual final states
    std::vector<TraceEntry> trace;      // exactly L entries
};

inline std::vector<std::size_t> trace_lengths(const Signature& sig) {
    std::vector<std::size_t> lengths;
    lengths.reserve(sig.trace.size());
    for (const TraceEntry& e : sig.trace) lengths.push_back(e.live_tokens);
    return lengths;
}

namespace detail {

inline Signature finish_signature(const SequenceState& seq, std::vector<TraceEntry> trace) {
    Signature sig;
    sig.trace = std::move(trace);
    sig.retained = seq.layout.provenance;
    const std::size_t d = seq.hidden.cols;
    const std::size_t count = seq.layout.visual_count();
    sig.retained_states = Matrix(count, d);
    for (std::size_t j = 0; j < count; ++j) {
        const float* row = seq.hidden.row(seq.layout.visual_start + j);
        std::copy(row, row + d, sig.retained_states.row(j));
    }
    sig.final_token_state.assign(seq.hidden.row(seq.hidden.rows - 1),
                                 seq.hidden.row(seq.hidden.rows - 1) + d);
    sig.pooled.assign(d, 0.0f);
    if (count > 0) {
        std::vector<double> acc(d, 0.0);
        for (std::size_t j = 0; j < count; ++j) {
            const float* row = sig.retained_states.row(j);
            for (std::size_t c = 0; c < d; ++c) acc[c] += row[c];
        }
        for (std::size_t c = 0; c < d; ++c) {
            sig.pooled[c] = static_cast<float>(acc[c] / static_cast<double>(count));
        }
    }
    return sig;
}

inline std::vector<float> step_scores(ScoreMode mode, const std::vector<float>& last_row_weights,
                                      const SequenceState& seq) {
    return mode == ScoreMode::attention ? score_visual_tokens(last_row_weights, seq.layout)
                                        : cosine_scores(seq.hidden, seq.layout);
}

}  // namespace detail

// Self-Reflective Sampling over one video.
//
//   (a) split the video into num_segments segments and assemble one
//       [system | visual | user] sequence per segment;
//   (b) forward every sequence independently through layers 0..r_1;
//   (c) prune layer r_1's output globally across segments, scored by the
//       final input token (attention weights, or cosine in ablation mode);
//   (d) merge into a single sequence: the best segment's system block, the
//       surviving visual tokens in (segment, frame, patch) order, the best
//       segment's user block; hidden states carry over as-is, positions are
//       not re-embedded;
//   (e) forward the merged sequence through the remaining layers, applying
//       the remaining schedule steps within it;
//   (f) emit the Signature with the full trace.
inline Signature run_selfres(const VideoTokens& video, const SamplingSchedule& schedule,
                             std::size_t num_segments, const Weights& weights,
                             const ModelConfig& config, const Prompts& prompts = {},
                             ScoreMode score_mode = ScoreMode::attention) {
    config.validate();
    schedule.validate(config.layers);
    if (schedule.steps.empty()) {
        throw ConfigError("run_selfres: schedule needs at least one step");
    }
    if (num_segments == 0) throw UsageError("run_selfres: need at least one segment");

    const std::size_t num_layers = config.layers;
    const std::size_t r1 = schedule.steps[0].layer;

    SegmentBatch batch = assemble_batch(video, config, num_segments, prompts, weights);
    std::vector<SequenceState>& segments = batch.sequences;

    std::vector<TraceEntry> trace;
    trace.reserve(num_layers);

    // (b) segment phase: layers 0..r1, scores captured at r1
    std::vector<std::vector<float>> seg_scores(segments.size());
    for (std::size_t l = 0; l <= r1; ++l) {
        std::size_t live = 0;
        for (const SequenceState& s : segments) live += s.layout.total();
        trace.push_back({l, live, std::nullopt});
        for (std::size_t s = 0; s < segments.size(); ++s) {
            LayerResult res = forward_layer(segments[s].hidden, l, weights, config);
            segments[s].hidden = std::move(res.hidden);
            if (l == r1) {
                seg_scores[s] = detail::step_scores(score_mode, res.last_row_weights,
                                                    segments[s]);
            }
        }
    }

    // (c) global sampling step
    const float f1 = schedule.steps[0].fraction;
    GlobalPhiOutcome phi = sample_step_global(batch, seg_scores, f1);
    trace.back().phi = PhiRecord{f1, phi.scored, phi.kept_total, phi.retained};

    // (d) merge
    const SequenceState& best = segments[phi.best_segment];
    SequenceState merged;
    merged.layout.n_sys = best.layout.n_sys;
    merged.layout.n_user = best.layout.n_user;
    merged.layout.visual_start = best.layout.n_sys;
    merged.layout.visual_end = best.layout.n_sys + phi.retained.size();
    merged.layout.provenance = phi.retained;
    merged.hidden = Matrix(merged.layout.total(), config.d);
    {
        const std::size_t d = config.d;
        for (std::size_t r = 0; r < best.layout.n_sys; ++r) {
            std::copy(best.hidden.row(r), best.hidden.row(r) + d, merged.hidden.row(r));
        }
        std::size_t dst = merged.layout.visual_start;
        for (std::size_t s = 0; s < segments.size(); ++s) {
            for (std::size_t j : phi.kept_per_segment[s]) {
                const float* row = segments[s].hidden.row(segments[s].layout.visual_start + j);
                std::copy(row, row + d, merged.hidden.row(dst++));
            }
        }
        for (std::size_t r = 0; r < best.layout.n_user; ++r) {
            const float* row = best.hidden.row(best.layout.visual_end + r);
            std::copy(row, row + d, merged.hidden.row(merged.layout.visual_end + r));
        }
    }
    segments.clear();

    // (e) merged phase: remaining layers and schedule steps
    std::size_t next_step = 1;
    for (std::size_t l = r1 + 1; l < num_layers; ++l) {
        trace.push_back({l, merged.layout.total(), std::nullopt});
        LayerResult res = forward_layer(merged.hidden, l, weights, config);
        merged.hidden = std::move(res.hidden);
        if (next_step < schedule.steps.size() && schedule.steps[next_step].layer == l) {
            const float f = schedule.steps[next_step].fraction;
            const std::vector<float> scores =
                detail::step_scores(score_mode, res.last_row_weights, merged);
            PhiRecord record;
            record.fraction = f;
            record.scored = scores.size();
            merged = sample_step(merged, scores, f, &record.retained);
            record.kept = record.retained.size();
            trace.back().phi = std::move(record);
            ++next_step;
        }
    }

    return detail::finish_signature(merged, std::move(trace));
}

// Baseline: sample the model's default frame budget linearly over the whole
// video, build one sequence, forward every layer, keep every visual token.
inline Signature run_linear(const VideoTokens& video, const Weights& weights,
                            const ModelConfig& config, const Prompts& prompts = {}) {
    config.validate();
    const std::vector<std::size_t> frames =
        sample_frames_linear(video.total_frames, config.frames_per_segment);
    SequenceState seq =
        assemble_sequence(prompts.system, frames, video, prompts.user, weights, config, 0);

    std::vector<TraceEntry> trace;
    trace.reserve(config.layers);
    for (std::size_t l = 0; l < config.layers; ++l) {
        trace.push_back({l, seq.layout.total(), std::nullopt});
        LayerResult res = forward_layer(seq.hidden, l, weights, config);
        seq.hidden = std::move(res.hidden);
    }
    return detail::finish_signature(seq, std::move(trace));
}

// ---------------------------------------------------------------------------
// Signature dumps: SRST tensors for the pooled vector and the retained hidden
// states, plus a plain-text trace (one line per layer with the live length
// and, at sampling layers, the retained provenance triples).
// ---------------------------------------------------------------------------

inline void dump_signature(const std::filesystem::path& dir, const std::string& stem,
                           const Signature& sig) {
    {
        Tensor pooled;
        pooled.dims = {static_cast<std::uint32_t>(sig.pooled.size())};
        pooled.data = sig.pooled;
        write_tensor_file(dir / (stem + ".pooled.srst"), pooled);
    }
    write_tensor_file(dir / (stem + ".retained.srst"), matrix_to_tensor(sig.retained_states));

    std::ofstream trace(dir / (stem + ".trace.txt"), std::ios::trunc);
    if (!trace) throw IoError("cannot write trace for " + stem);
    char buf[64];
    for (const TraceEntry& e : sig.trace) {
        trace << "layer=" << e.layer << " live=" << e.live_tokens;
        if (e.phi) {
            std::snprintf(buf, sizeof(buf), "%.6f", static_cast<double>(e.phi->fraction));
            trace << " phi fraction=" << buf << " scored=" << e.phi->scored
                  << " kept=" << e.phi->kept << " retained=";
            for (std::size_t i = 0; i < e.phi->retained.size(); ++i) {
                const VisualToken& t = e.phi->retained[i];
                if (i) trace << ";";
                trace << t.segment_id << ":" << t.frame_id << ":" << t.patch_id;
            }
        }
        trace << "\n";
    }
}

}  // namespace selfres
