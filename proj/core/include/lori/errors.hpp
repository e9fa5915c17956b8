#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace lori {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shape mismatch between operands; message names both shapes.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Invalid argument value (empty input, out-of-range index, bad enum, ...).
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Operation invoked in the wrong object state (e.g. masks not calibrated).
class StateError : public Error {
public:
    using Error::Error;
};

/// Optimization produced a non-finite loss; carries the failing step index.
class TrainingError : public Error {
public:
    TrainingError(const std::string& what, std::int64_t step)
        : Error(what), step_(step) {}
    std::int64_t step() const { return step_; }

private:
    std::int64_t step_;
};

/// Configuration file problems (unknown key, missing section, bad value).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Adapter/model file problems. Subclasses distinguish the failure mode.
class FileFormatError : public Error {
public:
    using Error::Error;
};

class BadMagicError : public FileFormatError {
public:
    using FileFormatError::FileFormatError;
};

class UnsupportedVersionError : public FileFormatError {
public:
    using FileFormatError::FileFormatError;
};

class ChecksumError : public FileFormatError {
public:
    using FileFormatError::FileFormatError;
};

class MergeError : public Error {
public:
    using Error::Error;
};

} // namespace lori
