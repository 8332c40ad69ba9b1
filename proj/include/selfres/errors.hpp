// Copyright (C) 2026 The selfres authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace selfres {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor/matrix dimension mismatches. The message names both shapes.
class ShapeError : public Error {
public:
    using Error::Error;
};

// A caller violated an operation precondition (empty input, k out of range, ...).
class UsageError : public Error {
public:
    using Error::Error;
};

// Invalid model or schedule configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Bad external input: text, file contents, synthetic-spec parameters.
class InputError : public Error {
public:
    using Error::Error;
};

// Malformed on-disk data (wrong magic, truncation, bad CSV rows).
class IoError : public Error {
public:
    using Error::Error;
};

// Broken internal invariant; indicates a bug, not a caller mistake.
class InternalError : public Error {
public:
    using Error::Error;
};

}  // namespace selfres
