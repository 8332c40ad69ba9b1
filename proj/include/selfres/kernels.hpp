// Copyright (C) 2026 The selfres authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "selfres/errors.hpp"
#include "selfres/tensor.hpp"

namespace selfres {

// Dense kernels. All of them are pure functions; dot products accumulate in
// double and store float so results are bit-identical across platforms.

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) {
        throw ShapeError("matmul shape mismatch: " + a.shape_str() + " x " + b.shape_str());
    }
    Matrix out(a.rows, b.cols);
    std::vector<double> acc(b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        std::fill(acc.begin(), acc.end(), 0.0);
        const float* arow = a.row(i);
        // i-k-j order for cache locality; per output element the k terms are
        // still added in ascending k, so the accumulation order is fixed.
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double av = static_cast<double>(arow[k]);
            const float* brow = b.row(k);
            for (std::size_t j = 0; j < b.cols; ++j) {
                acc[j] += av * static_cast<double>(brow[j]);
            }
        }
        float* orow = out.row(i);
        for (std::size_t j = 0; j < b.cols; ++j) {
            orow[j] = static_cast<float>(acc[j]);
        }
    }
    assert(out.all_finite());
    return out;
}

// Numerically stable softmax over one vector (max subtraction).
inline std::vector<float> softmax_row(std::span<const float> x) {
    if (x.empty()) throw UsageError("softmax_row: empty input");
    double mx = x[0];
    for (float v : x) mx = std::max(mx, static_cast<double>(v));
    std::vector<double> e(x.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        e[i] = std::exp(static_cast<double>(x[i]) - mx);
        sum += e[i];
    }
    std::vector<float> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = static_cast<float>(e[i] / sum);
    }
    return out;
}

// Parameter-free layer norm: zero mean, unit variance (population variance,
// eps-guarded). No scale or shift.
inline std::vector<float> layer_norm(std::span<const float> x, float eps) {
    if (x.empty()) throw UsageError("layer_norm: empty input");
    double mean = 0.0;
    for (float v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double var = 0.0;
    for (float v : x) {
        const double d = static_cast<double>(v) - mean;
        var += d * d;
    }
    var /= static_cast<double>(x.size());
    const double denom = std::sqrt(var + static_cast<double>(eps));
    std::vector<float> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = static_cast<float>((static_cast<double>(x[i]) - mean) / denom);
    }
    return out;
}

// Row-wise layer norm over a matrix.
inline Matrix layer_norm_rows(const Matrix& m, float eps) {
    Matrix out(m.rows, m.cols);
    for (std::size_t i = 0; i < m.rows; ++i) {
        auto r = layer_norm(std::span<const float>(m.row(i), m.cols), eps);
        std::copy(r.begin(), r.end(), out.row(i));
    }
    return out;
}

struct AttentionResult {
    Matrix out;                         // n x d, concatenated heads
    std::vector<float> last_row_weights;  // length n, head-averaged final row
};

// Multi-head scaled dot-product attention with a strict causal mask: position
// i can attend to j <= i only; masked weights are exactly zero because masked
// logits never enter the softmax. Scale is 1/sqrt(d/heads).
//
// If `full_weights` is non-null it receives one n x n weight matrix per head
// (zeros above the diagonal), which the tests use to assert causality and
// normalization directly.
inline AttentionResult causal_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                                        std::size_t heads,
                                        std::vector<Matrix>* full_weights = nullptr) {
    if (q.rows != k.rows || q.rows != v.rows || q.cols != k.cols || q.cols != v.cols) {
        throw ShapeError("causal_attention shape mismatch: q=" + q.shape_str() +
                         " k=" + k.shape_str() + " v=" + v.shape_str());
    }
    if (heads == 0 || q.cols % heads != 0) {
        throw ConfigError("causal_attention: width " + std::to_string(q.cols) +
                          " not divisible by heads " + std::to_string(heads));
    }
    const std::size_t n = q.rows;
    if (n == 0) throw UsageError("causal_attention: empty sequence");
    const std::size_t d = q.cols;
    const std::size_t dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    AttentionResult res;
    res.out = Matrix(n, d);
    std::vector<double> last_row(n, 0.0);
    if (full_weights) {
        full_weights->assign(heads, Matrix(n, n));
    }

    std::vector<double> logits;
    std::vector<double> weights;
    std::vector<double> mix(dh);
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * dh;
        for (std::size_t i = 0; i < n; ++i) {
            logits.assign(i + 1, 0.0);
            const float* qi = q.row(i) + off;
            for (std::size_t j = 0; j <= i; ++j) {
                const float* kj = k.row(j) + off;
                double dot = 0.0;
                for (std::size_t c = 0; c < dh; ++c) {
                    dot += static_cast<double>(qi[c]) * static_cast<double>(kj[c]);
                }
                logits[j] = dot * scale;
            }
            double mx = logits[0];
            for (double l : logits) mx = std::max(mx, l);
            weights.assign(i + 1, 0.0);
            double sum = 0.0;
            for (std::size_t j = 0; j <= i; ++j) {
                weights[j] = std::exp(logits[j] - mx);
                sum += weights[j];
            }
            std::fill(mix.begin(), mix.end(), 0.0);
            for (std::size_t j = 0; j <= i; ++j) {
                weights[j] /= sum;
                const float* vj = v.row(j) + off;
                for (std::size_t c = 0; c < dh; ++c) {
                    mix[c] += weights[j] * static_cast<double>(vj[c]);
                }
            }
            float* orow = res.out.row(i) + off;
            for (std::size_t c = 0; c < dh; ++c) {
                orow[c] = static_cast<float>(mix[c]);
            }
            if (full_weights) {
                Matrix& w = (*full_weights)[h];
                for (std::size_t j = 0; j <= i; ++j) {
                    w.at(i, j) = static_cast<float>(weights[j]);
                }
            }
            if (i + 1 == n) {
                for (std::size_t j = 0; j < n; ++j) last_row[j] += weights[j];
            }
        }
    }
    res.last_row_weights.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        res.last_row_weights[j] = static_cast<float>(last_row[j] / static_cast<double>(heads));
    }
    assert(res.out.all_finite());
    return res;
}

// GELU, tanh approximation:
//   0.5 * x * (1 + tanh(sqrt(2/pi) * (x + 0.044715 * x^3)))
// with sqrt(2/pi) = 0.7978845608028654. Fixed constants keep the engine
// reproducible across languages.
inline float gelu(float x) {
    const double xd = static_cast<double>(x);
    const double inner = 0.7978845608028654 * (xd + 0.044715 * xd * xd * xd);
    return static_cast<float>(0.5 * xd * (1.0 + std::tanh(inner)));
}

inline Matrix gelu_rows(const Matrix& m) {
    Matrix out(m.rows, m.cols);
    for (std::size_t i = 0; i < m.data.size(); ++i) out.data[i] = gelu(m.data[i]);
    return out;
}

inline Matrix add(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows || a.cols != b.cols) {
        throw ShapeError("add shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
    }
    Matrix out(a.rows, a.cols);
    for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] + b.data[i];
    return out;
}

inline double dot(std::span<const float> a, std::span<const float> b) {
    assert(a.size() == b.size());
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    }
    return s;
}

inline double norm2(std::span<const float> a) { return std::sqrt(dot(a, a)); }

// Cosine similarity; 0 when either vector has zero norm.
inline double cosine(std::span<const float> a, std::span<const float> b) {
    const double na = norm2(a);
    const double nb = norm2(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot(a, b) / (na * nb);
}

}  // namespace selfres
