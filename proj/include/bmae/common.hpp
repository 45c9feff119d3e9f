// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The bmae Authors

#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace bmae {

/// Dense row-major matrix used for parameters, activations and patch grids.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// All randomness in the library flows through explicitly passed engines of
/// this type, so runs are a pure function of their seeds.
using Rng = std::mt19937_64;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised for invalid or inconsistent configuration (CLI exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// A stored grid index no longer fits in one byte.
class OverflowError : public Error {
public:
    using Error::Error;
};

/// Malformed or truncated binary data. `offset` is the byte position at
/// which decoding failed.
class CorruptionError : public Error {
public:
    CorruptionError(const std::string& what, std::uint64_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// A loss term became NaN or infinite. `term` names the diverging component.
class NonFiniteLoss : public Error {
public:
    explicit NonFiniteLoss(std::string term)
        : Error("non-finite loss term: " + term), term_(std::move(term)) {}
    const std::string& term() const noexcept { return term_; }

private:
    std::string term_;
};

enum class LogLevel { Debug = 0, Info = 1, Warn = 2, Error = 3, Silent = 4 };

void set_log_level(LogLevel level);
LogLevel log_level();
void log(LogLevel level, const std::string& message);

inline void log_info(const std::string& m) { log(LogLevel::Info, m); }
inline void log_warn(const std::string& m) { log(LogLevel::Warn, m); }
inline void log_debug(const std::string& m) { log(LogLevel::Debug, m); }

} // namespace bmae
