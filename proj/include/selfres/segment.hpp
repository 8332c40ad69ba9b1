// Copyright (C) 2026 The selfres authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "selfres/errors.hpp"
#include "selfres/model.hpp"
#include "selfres/tensor.hpp"

namespace selfres {

// Patch-level features for one video: total_frames x patches_per_frame x
// patch_dim, row-major, plus optional planted-token ground truth (original
// timeline ids, frame * patches_per_frame + patch).
struct VideoTokens {
    std::string video_id;
    std::string class_name;
    std::size_t total_frames = 0;
    std::size_t patches_per_frame = 0;
    std::size_t patch_dim = 0;
    std::vector<float> features;            // T * ppf * dp
    std::set<std::uint64_t> planted_tokens;  // ground truth, may be empty

    const float* patch(std::size_t frame, std::size_t p) const {
        return features.data() + (frame * patches_per_frame + p) * patch_dim;
    }
    float* patch(std::size_t frame, std::size_t p) {
        return features.data() + (frame * patches_per_frame + p) * patch_dim;
    }
};

// Identity of one visual token: which segment it entered through and which
// original frame/patch it came from.
struct VisualToken {
    std::size_t segment_id = 0;
    std::size_t frame_id = 0;  // original timeline frame index
    std::size_t patch_id = 0;

    friend bool operator==(const VisualToken&, const VisualToken&) = default;
    friend auto operator<=>(const VisualToken&, const VisualToken&) = default;
};

// Sequence bookkeeping: [system | visual | user] spans plus per-visual-token
// provenance. N = visual_end - visual_start.
struct TokenLayout {
    std::size_t n_sys = 0;
    std::size_t n_user = 0;
    std::size_t visual_start = 0;
    std::size_t visual_end = 0;
    std::vector<VisualToken> provenance;  // size = visual count

    std::size_t visual_count() const { return visual_end - visual_start; }
    std::size_t total() const { return n_sys + visual_count() + n_user; }
};

struct SequenceState {
    Matrix hidden;  // total() x d
    TokenLayout layout;
};

// The per-segment sequences entering the sampler. Before any pruning every
// sequence shares the same n_sys, n_user, and visual count F * patches_per_frame.
struct SegmentBatch {
    std::vector<SequenceState> sequences;

    std::size_t size() const { return sequences.size(); }

    void check_uniform() const {
        if (sequences.empty()) throw UsageError("segment batch: no sequences");
        const TokenLayout& first = sequences.front().layout;
        for (const SequenceState& s : sequences) {
            if (s.layout.n_sys != first.n_sys || s.layout.n_user != first.n_user ||
                s.layout.visual_count() != first.visual_count()) {
                throw InternalError("segment batch: sequences disagree on layout");
            }
        }
    }
};

struct Prompts {
    std::string system = "system:classify the action.";
    std::string user = "user:what action occurs?";
};

// Uniform ("linear") frame sampling: index_i = round(i * (T-1) / (count-1)).
// count = 1 picks frame 0. Repeats are expected when count > T.
inline std::vector<std::size_t> sample_frames_linear(std::size_t total_frames,
                                                     std::size_t count) {
    if (total_frames == 0) throw InputError("sample_frames_linear: video has no frames");
    if (count == 0) throw UsageError("sample_frames_linear: count must be >= 1");
    std::vector<std::size_t> idx(count, 0);
    if (count == 1) return idx;
    for (std::size_t i = 0; i < count; ++i) {
        const double pos = static_cast<double>(i) * static_cast<double>(total_frames - 1) /
                           static_cast<double>(count - 1);
        idx[i] = static_cast<std::size_t>(std::llround(pos));
    }
    return idx;
}

// Samples N_s * F frames uniformly over the whole video, then splits them
// consecutively into N_s runs of F. Concatenating the result reproduces
// sample_frames_linear(T, N_s * F) exactly.
inline std::vector<std::vector<std::size_t>> build_segments(const VideoTokens& video,
                                                            const ModelConfig& config,
                                                            std::size_t num_segments) {
    if (num_segments == 0) throw UsageError("build_segments: need at least one segment");
    const std::size_t f = config.frames_per_segment;
    const std::vector<std::size_t> all = sample_frames_linear(video.total_frames,
                                                              num_segments * f);
    std::vector<std::vector<std::size_t>> segments(num_segments);
    for (std::size_t s = 0; s < num_segments; ++s) {
        segments[s].assign(all.begin() + static_cast<std::ptrdiff_t>(s * f),
                           all.begin() + static_cast<std::ptrdiff_t>((s + 1) * f));
    }
    return segments;
}

// Builds one [system | visual | user] sequence for a segment. Positions are
// numbered consecutively 0..N'-1 across the whole sequence; visual rows get
// the projected patch plus the positional encoding of their slot.
inline SequenceState assemble_sequence(const std::string& sys_text,
                                       const std::vector<std::size_t>& segment_frames,
                                       const VideoTokens& video, const std::string& user_text,
                                       const Weights& weights, const ModelConfig& config,
                                       std::size_t segment_id = 0) {
    if (sys_text.empty() || user_text.empty()) {
        throw InputError("assemble_sequence: system and user text must be nonempty "
                         "(the final input token drives the sampling step)");
    }
    if (segment_frames.size() != config.frames_per_segment) {
        throw UsageError("assemble_sequence: segment has " +
                         std::to_string(segment_frames.size()) + " frames, expected " +
                         std::to_string(config.frames_per_segment));
    }
    if (video.patches_per_frame != config.patches_per_frame ||
        video.patch_dim != config.patch_dim) {
        throw ShapeError("assemble_sequence: video patch grid " +
                         std::to_string(video.patches_per_frame) + "x" +
                         std::to_string(video.patch_dim) + " does not match config " +
                         std::to_string(config.patches_per_frame) + "x" +
                         std::to_string(config.patch_dim));
    }

    const std::size_t ppf = config.patches_per_frame;
    const std::size_t visual_count = segment_frames.size() * ppf;
    const std::size_t n_sys = sys_text.size();
    const std::size_t n_user = user_text.size();

    Matrix patches(visual_count, config.patch_dim);
    for (std::size_t fi = 0; fi < segment_frames.size(); ++fi) {
        const std::size_t frame = segment_frames[fi];
        if (frame >= video.total_frames) {
            throw InputError("assemble_sequence: frame index out of range");
        }
        for (std::size_t p = 0; p < ppf; ++p) {
            const float* src = video.patch(frame, p);
            std::copy(src, src + config.patch_dim, patches.row(fi * ppf + p));
        }
    }

    SequenceState seq;
    seq.layout.n_sys = n_sys;
    seq.layout.n_user = n_user;
    seq.layout.visual_start = n_sys;
    seq.layout.visual_end = n_sys + visual_count;
    seq.layout.provenance.reserve(visual_count);
    for (std::size_t fi = 0; fi < segment_frames.size(); ++fi) {
        for (std::size_t p = 0; p < ppf; ++p) {
            seq.layout.provenance.push_back({segment_id, segment_frames[fi], p});
        }
    }

    const Matrix sys = embed_bytes(sys_text, weights, 0);
    Matrix visual = project_visual(patches, weights);
    for (std::size_t j = 0; j < visual_count; ++j) {
        const std::vector<float> pe = positional_encoding(n_sys + j, config.d);
        float* row = visual.row(j);
        for (std::size_t c = 0; c < config.d; ++c) row[c] += pe[c];
    }
    const Matrix user = embed_bytes(user_text, weights, n_sys + visual_count);

    seq.hidden = Matrix(n_sys + visual_count + n_user, config.d);
    std::copy(sys.data.begin(), sys.data.end(), seq.hidden.data.begin());
    std::copy(visual.data.begin(), visual.data.end(),
              seq.hidden.data.begin() + static_cast<std::ptrdiff_t>(n_sys * config.d));
    std::copy(user.data.begin(), user.data.end(),
              seq.hidden.data.begin() +
                  static_cast<std::ptrdiff_t>((n_sys + visual_count) * config.d));
    return seq;
}

// Assembles the full per-segment batch for a video.
inline SegmentBatch assemble_batch(const VideoTokens& video, const ModelConfig& config,
                                   std::size_t num_segments, const Prompts& prompts,
                                   const Weights& weights) {
    const auto frames = build_segments(video, config, num_segments);
    SegmentBatch batch;
    batch.sequences.reserve(num_segments);
    for (std::size_t s = 0; s < num_segments; ++s) {
        batch.sequences.push_back(
            assemble_sequence(prompts.system, frames[s], video, prompts.user, weights, config,
                              s));
    }
    batch.check_uniform();
    return batch;
}

// ---------------------------------------------------------------------------
// On-disk video format: an SRST tensor of shape (T, patches_per_frame,
// patch_dim) plus a plain-text key=value sidecar carrying video_id, class,
// and the planted token id list.
// ---------------------------------------------------------------------------

inline std::filesystem::path video_sidecar_path(const std::filesystem::path& tensor_path) {
    std::filesystem::path p = tensor_path;
    p.replace_extension(".meta");
    return p;
}

inline void save_video(const std::filesystem::path& tensor_path, const VideoTokens& video) {
    Tensor t;
    t.dims = {static_cast<std::uint32_t>(video.total_frames),
              static_cast<std::uint32_t>(video.patches_per_frame),
              static_cast<std::uint32_t>(video.patch_dim)};
    t.data = video.features;
    write_tensor_file(tensor_path, t);

    std::ofstream meta(video_sidecar_path(tensor_path), std::ios::trunc);
    if (!meta) throw IoError("cannot write sidecar for " + tensor_path.string());
    meta << "video_id=" << video.video_id << "\n";
    meta << "class=" << video.class_name << "\n";
    meta << "planted=";
    bool first = true;
    for (std::uint64_t id : video.planted_tokens) {
        if (!first) meta << ",";
        meta << id;
        first = false;
    }
    meta << "\n";
}

inline VideoTokens load_video(const std::filesystem::path& tensor_path) {
    const Tensor t = read_tensor_file(tensor_path);
    if (t.dims.size() != 3) {
        throw IoError("video tensor " + tensor_path.string() + " must have rank 3, got " +
                      std::to_string(t.dims.size()));
    }
    if (t.dims[0] == 0) {
        throw IoError("video tensor " + tensor_path.string() + " has no frames");
    }
    for (float v : t.data) {
        if (!std::isfinite(v)) {
            throw IoError("video tensor " + tensor_path.string() +
                          " contains non-finite values");
        }
    }
    VideoTokens video;
    video.total_frames = t.dims[0];
    video.patches_per_frame = t.dims[1];
    video.patch_dim = t.dims[2];
    video.features = t.data;

    std::ifstream meta(video_sidecar_path(tensor_path));
    if (!meta) throw IoError("missing sidecar for " + tensor_path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(meta, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw IoError("sidecar " + video_sidecar_path(tensor_path).string() + " line " +
                          std::to_string(lineno) + ": expected key=value");
        }
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "video_id") {
            video.video_id = value;
        } else if (key == "class") {
            video.class_name = value;
        } else if (key == "planted") {
            std::size_t start = 0;
            while (start < value.size()) {
                std::size_t comma = value.find(',', start);
                if (comma == std::string::npos) comma = value.size();
                const std::string tok = value.substr(start, comma - start);
                if (!tok.empty()) {
                    try {
                        video.planted_tokens.insert(std::stoull(tok));
                    } catch (const std::exception&) {
                        throw IoError("sidecar " + video_sidecar_path(tensor_path).string() +
                                      " line " + std::to_string(lineno) +
                                      ": bad planted id '" + tok + "'");
                    }
                }
                start = comma + 1;
            }
        } else {
            throw IoError("sidecar " + video_sidecar_path(tensor_path).string() + " line " +
                          std::to_string(lineno) + ": unknown key '" + key + "'");
        }
    }
    return video;
}

}  // namespace selfres
