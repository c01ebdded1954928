#pragma once

#include <stdexcept>
#include <string>

namespace bnas {

// Base class for all library errors. Subclasses map to CLI exit codes:
// ConfigError -> 2, MissingArtifactError -> 3, everything else -> 1.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape inference rejected a graph before execution.
class ShapeError : public Error {
public:
    using Error::Error;
};

// NaN/Inf encountered during forward or backward.
class NumericError : public Error {
public:
    using Error::Error;
};

// Malformed or inconsistent configuration / encoding.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Ill-formed input data (dataset files, checkpoint containers).
class DataError : public Error {
public:
    using Error::Error;
};

// An upstream artifact (checkpoint, cache, ranking) is missing.
class MissingArtifactError : public Error {
public:
    using Error::Error;
};

// relative-L1 with sigma(y) == 0.
class DegenerateTargetError : public Error {
public:
    using Error::Error;
};

// Constrained search has no feasible architecture.
class NoFeasibleModelError : public Error {
public:
    using Error::Error;
};

// Enumeration or combination cap exceeded.
class OverflowError : public Error {
public:
    using Error::Error;
};

}  // namespace bnas
