// Copyright (C) 2026 The selfres authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "selfres/errors.hpp"

namespace selfres {

// Dense row-major float32 matrix. Values are dimensionless; kernels promise
// to keep every entry finite.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> data;  // rows * cols, row-major

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0f) {}

    float& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    float at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    const float* row(std::size_t r) const { return data.data() + r * cols; }
    float* row(std::size_t r) { return data.data() + r * cols; }

    static Matrix zeros(std::size_t r, std::size_t c) { return Matrix(r, c); }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0f;
        return m;
    }

    std::string shape_str() const {
        return std::to_string(rows) + "x" + std::to_string(cols);
    }

    bool all_finite() const {
        for (float v : data) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }
};

// Arbitrary-rank tensor as stored in SRST files.
struct Tensor {
    std::vector<std::uint32_t> dims;
    std::vector<float> data;  // row-major

    std::size_t size() const {
        std::size_t n = 1;
        for (std::uint32_t d : dims) n *= d;
        return n;
    }
};

// ---------------------------------------------------------------------------
// SRST tensor file format, shared by weight dumps, video features, and
// signature dumps:
//
//   bytes 0..3   magic "SRST"
//   bytes 4..7   u32 little-endian version, must be 1
//   bytes 8..11  u32 little-endian rank
//   then rank * u32 little-endian dims
//   then prod(dims) * f32 little-endian payload, row-major
//
// Readers reject wrong magic, wrong version, truncated payloads, and trailing
// bytes.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32_le(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline std::uint32_t get_u32_le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint32_t f32_bits(float f) {
    std::uint32_t b;
    std::memcpy(&b, &f, 4);
    return b;
}

inline float bits_f32(std::uint32_t b) {
    float f;
    std::memcpy(&f, &b, 4);
    return f;
}

}  // namespace detail

inline constexpr char kTensorMagic[4] = {'S', 'R', 'S', 'T'};
inline constexpr std::uint32_t kTensorVersion = 1;

inline std::string encode_tensor(const Tensor& t) {
    if (t.data.size() != t.size()) {
        throw InternalError("tensor payload size does not match dims");
    }
    std::string out;
    out.reserve(12 + 4 * t.dims.size() + 4 * t.data.size());
    out.append(kTensorMagic, 4);
    detail::put_u32_le(out, kTensorVersion);
    detail::put_u32_le(out, static_cast<std::uint32_t>(t.dims.size()));
    for (std::uint32_t d : t.dims) detail::put_u32_le(out, d);
    for (float f : t.data) detail::put_u32_le(out, detail::f32_bits(f));
    return out;
}

inline Tensor decode_tensor(const std::string& bytes, const std::string& origin = "<memory>") {
    auto fail = [&](const std::string& why) -> Tensor {
        throw IoError("bad SRST tensor in " + origin + ": " + why);
    };
    if (bytes.size() < 12) return fail("truncated header");
    if (std::memcmp(bytes.data(), kTensorMagic, 4) != 0) return fail("wrong magic");
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    const std::uint32_t version = detail::get_u32_le(p + 4);
    if (version != kTensorVersion) return fail("unsupported version " + std::to_string(version));
    const std::uint32_t rank = detail::get_u32_le(p + 8);
    if (rank > 8) return fail("implausible rank " + std::to_string(rank));
    if (bytes.size() < 12 + 4ull * rank) return fail("truncated dims");
    Tensor t;
    t.dims.resize(rank);
    std::uint64_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
        t.dims[i] = detail::get_u32_le(p + 12 + 4 * i);
        count *= t.dims[i];
        if (count > (1ull << 32)) return fail("implausible element count");
    }
    const std::size_t expected = 12 + 4ull * rank + 4ull * count;
    if (bytes.size() < expected) return fail("truncated payload");
    if (bytes.size() > expected) return fail("trailing bytes after payload");
    t.data.resize(count);
    const unsigned char* q = p + 12 + 4 * rank;
    for (std::uint64_t i = 0; i < count; ++i) {
        t.data[i] = detail::bits_f32(detail::get_u32_le(q + 4 * i));
    }
    return t;
}

inline void write_tensor_file(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path.string());
    const std::string bytes = encode_tensor(t);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed: " + path.string());
}

inline Tensor read_tensor_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return decode_tensor(ss.str(), path.string());
}

inline Tensor matrix_to_tensor(const Matrix& m) {
    Tensor t;
    t.dims = {static_cast<std::uint32_t>(m.rows), static_cast<std::uint32_t>(m.cols)};
    t.data = m.data;
    return t;
}

inline Matrix tensor_to_matrix(const Tensor& t, const std::string& origin = "<memory>") {
    if (t.dims.size() != 2) {
        throw IoError("expected rank-2 tensor in " + origin + ", got rank " +
                      std::to_string(t.dims.size()));
    }
    Matrix m(t.dims[0], t.dims[1]);
    m.data = t.data;
    return m;
}

}  // namespace selfres
