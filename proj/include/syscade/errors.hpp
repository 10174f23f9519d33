#pragma once

#include <stdexcept>
#include <string>

namespace syscade {

// Invalid or inconsistent configuration (bad generator params, missing model paths).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed external input (trace lines, label files, config files, model files).
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Well-formed input that violates a data contract (timestamp regression, unlabeled pid).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Operation applied in an illegal state (slow-path verdict for a non-borderline pid).
struct StateError : std::runtime_error {
    explicit StateError(const std::string& what) : std::runtime_error(what) {}
};

// Dimension mismatch between a model and its input.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// Training cannot proceed (single-class data, diverged loss).
struct TrainError : std::runtime_error {
    explicit TrainError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace syscade
