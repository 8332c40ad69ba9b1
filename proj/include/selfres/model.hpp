// Copyright (C) 2026 The selfres authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "selfres/errors.hpp"
#include "selfres/kernels.hpp"
#include "selfres/prng.hpp"
#include "selfres/tensor.hpp"

namespace selfres {

// All dimensional and initialization hyperparameters of the toy engine.
struct ModelConfig {
    std::size_t d = 64;                  // hidden width
    std::size_t heads = 4;               // attention heads
    std::size_t layers = 8;              // decoder layers
    std::size_t d_ff = 256;              // MLP width
    std::size_t frames_per_segment = 16; // the model's default frame count
    std::size_t patches_per_frame = 16;
    std::size_t patch_dim = 32;          // visual feature width before projection
    float init_epsilon = 0.05f;          // near-identity perturbation scale
    float ln_eps = 1e-5f;
    std::uint64_t seed = 42;

    void validate() const {
        if (d == 0 || heads == 0 || layers == 0 || d_ff == 0 || frames_per_segment == 0 ||
            patches_per_frame == 0 || patch_dim == 0) {
            throw ConfigError("model config: all counts must be >= 1");
        }
        if (d % heads != 0) {
            throw ConfigError("model config: d=" + std::to_string(d) +
                              " not divisible by heads=" + std::to_string(heads));
        }
    }
};

struct LayerWeights {
    Matrix wq, wk, wv, wo;  // d x d
    Matrix w1;              // d x d_ff
    Matrix w2;              // d_ff x d
};

// Fully determined by (ModelConfig, seed): regenerating with the same config
// yields bit-identical values.
struct Weights {
    ModelConfig config;
    Matrix embedding;  // 256 x d, one row per byte value
    Matrix projector;  // patch_dim x d
    std::vector<LayerWeights> layers;
};

// Weight initialization. One splitmix64 stream seeded with config.seed;
// draws are consumed in a fixed order: embedding row-major, then projector,
// then per layer wq, wk, wv, wo, w1, w2 row-major. Each draw maps the top 24
// bits of a 64-bit output to [0,1) and then to [-a, a] with
// a = sqrt(6 / (fan_in + fan_out)).
//
// The attention and projector matrices are signal-preserving: identity plus
// init_epsilon times the draw (the projector identity block is padded with
// zeros to patch_dim x d), and w2 is scaled by init_epsilon. Near-identity
// layers keep a token's projected content recoverable after the full stack,
// which zero-shot classification against patch-space prototypes relies on.
inline Weights init_weights(const ModelConfig& config) {
    config.validate();
    SplitMix64 rng(config.seed);

    auto draw_matrix = [&rng](std::size_t rows, std::size_t cols) {
        const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
        Matrix m(rows, cols);
        for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = rng.next_symmetric(a);
        return m;
    };

    Weights w;
    w.config = config;
    w.embedding = draw_matrix(256, config.d);
    w.projector = draw_matrix(config.patch_dim, config.d);
    for (std::size_t i = 0; i < w.projector.data.size(); ++i) {
        w.projector.data[i] *= config.init_epsilon;
    }
    for (std::size_t i = 0; i < std::min(config.patch_dim, config.d); ++i) {
        w.projector.at(i, i) += 1.0f;
    }

    auto near_identity = [&](std::size_t n) {
        Matrix m = draw_matrix(n, n);
        for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] *= config.init_epsilon;
        for (std::size_t i = 0; i < n; ++i) m.at(i, i) += 1.0f;
        return m;
    };

    w.layers.resize(config.layers);
    for (std::size_t l = 0; l < config.layers; ++l) {
        LayerWeights& lw = w.layers[l];
        lw.wq = near_identity(config.d);
        lw.wk = near_identity(config.d);
        lw.wv = near_identity(config.d);
        lw.wo = near_identity(config.d);
        lw.w1 = draw_matrix(config.d, config.d_ff);
        lw.w2 = draw_matrix(config.d_ff, config.d);
        for (std::size_t i = 0; i < lw.w2.data.size(); ++i) {
            lw.w2.data[i] *= config.init_epsilon;
        }
    }
    return w;
}

// Sinusoidal positional encoding, standard sin/cos interleave:
// pe[2i] = sin(pos / 10000^(2i/d)), pe[2i+1] = cos(pos / 10000^(2i/d)).
inline std::vector<float> positional_encoding(std::size_t pos, std::size_t d) {
    std::vector<float> pe(d, 0.0f);
    const double p = static_cast<double>(pos);
    for (std::size_t i = 0; 2 * i < d; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(2 * i) /
                                     static_cast<double>(d));
        const double angle = p * freq;
        pe[2 * i] = static_cast<float>(std::sin(angle));
        if (2 * i + 1 < d) pe[2 * i + 1] = static_cast<float>(std::cos(angle));
    }
    return pe;
}

// Byte-level text embedding: one token per ASCII byte, embedding row plus the
// positional encoding at (pos_offset + i). Sequence assembly passes the
// offset so positions run consecutively across the whole sequence.
inline Matrix embed_bytes(const std::string& text, const Weights& weights,
                          std::size_t pos_offset = 0) {
    if (text.empty()) throw InputError("embed_bytes: empty text");
    const std::size_t d = weights.config.d;
    Matrix out(text.size(), d);
    for (std::size_t i = 0; i < text.size(); ++i) {
        const unsigned char byte = static_cast<unsigned char>(text[i]);
        if (byte > 127) {
            throw InputError("embed_bytes: non-ASCII byte at position " + std::to_string(i));
        }
        const std::vector<float> pe = positional_encoding(pos_offset + i, d);
        const float* erow = weights.embedding.row(byte);
        float* orow = out.row(i);
        for (std::size_t c = 0; c < d; ++c) orow[c] = erow[c] + pe[c];
    }
    return out;
}

// Projects patch features (n x patch_dim) into the hidden space (n x d).
// Positional encodings are added by the caller, which knows token positions.
inline Matrix project_visual(const Matrix& patches, const Weights& weights) {
    if (patches.cols != weights.config.patch_dim) {
        throw ShapeError("project_visual: patches " + patches.shape_str() + " need " +
                         std::to_string(weights.config.patch_dim) + " columns");
    }
    return matmul(patches, weights.projector);
}

struct LayerResult {
    Matrix hidden;                      // same shape as the input
    std::vector<float> last_row_weights;  // final position's attention, length n
};

// One pre-norm decoder block:
//   h1  = h  + causal_attention(LN(h) wq, LN(h) wk, LN(h) wv) wo
//   out = h1 + GELU(LN(h1) w1) w2
// No bias terms anywhere, so an all-zero input stays all-zero.
inline LayerResult forward_layer(const Matrix& hidden, std::size_t layer_index,
                                 const Weights& weights, const ModelConfig& config) {
    if (hidden.cols != config.d) {
        throw ShapeError("forward_layer: hidden " + hidden.shape_str() + " needs width " +
                         std::to_string(config.d));
    }
    if (layer_index >= config.layers) {
        throw UsageError("forward_layer: layer index " + std::to_string(layer_index) +
                         " out of range (L=" + std::to_string(config.layers) + ")");
    }
    const LayerWeights& lw = weights.layers[layer_index];
    const Matrix ln1 = layer_norm_rows(hidden, config.ln_eps);
    AttentionResult attn = causal_attention(matmul(ln1, lw.wq), matmul(ln1, lw.wk),
                                            matmul(ln1, lw.wv), config.heads);
    const Matrix h1 = add(hidden, matmul(attn.out, lw.wo));
    const Matrix ln2 = layer_norm_rows(h1, config.ln_eps);
    const Matrix mlp = matmul(gelu_rows(matmul(ln2, lw.w1)), lw.w2);
    LayerResult res;
    res.hidden = add(h1, mlp);
    res.last_row_weights = std::move(attn.last_row_weights);
    return res;
}

inline std::string to_lower(const std::string& s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

// Deterministic unit-norm class anchor in patch space. The stream is seeded
// with config.seed XOR fnv1a64(lowercased name), so prototypes depend only on
// the model seed and the class name.
inline std::vector<float> class_prototype(const std::string& class_name, const Weights& weights) {
    if (class_name.empty()) throw InputError("class_prototype: empty class name");
    const std::uint64_t seed = weights.config.seed ^ fnv1a64(to_lower(class_name));
    GaussianStream gauss(seed);
    const std::size_t dp = weights.config.patch_dim;
    std::vector<float> v(dp);
    double norm = 0.0;
    do {
        norm = 0.0;
        for (std::size_t i = 0; i < dp; ++i) {
            v[i] = static_cast<float>(gauss.next());
            norm += static_cast<double>(v[i]) * static_cast<double>(v[i]);
        }
        norm = std::sqrt(norm);
    } while (norm < 1e-12);
    for (std::size_t i = 0; i < dp; ++i) {
        v[i] = static_cast<float>(static_cast<double>(v[i]) / norm);
    }
    return v;
}

}  // namespace selfres
