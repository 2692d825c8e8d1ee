#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gradleak {

/// Base class for every error this library throws on purpose.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Shape/structure mismatch between tensors or parameter sets.
struct DimensionError : Error {
    using Error::Error;
};

/// Class index or element index out of range.
struct IndexError : Error {
    using Error::Error;
};

/// Malformed input file. Message carries the file path and byte offset.
struct ParseError : Error {
    ParseError(const std::string& path, std::size_t offset, const std::string& what)
        : Error(path + ": " + what + " (byte offset " + std::to_string(offset) + ")"),
          path(path),
          offset(offset) {}

    std::string path;
    std::size_t offset;
};

/// Gradients carry no usable label signal (e.g. an all-zero last-layer gradient).
struct DegenerateGradientError : Error {
    using Error::Error;
};

/// A dataset source produced no samples.
struct EmptyDatasetError : Error {
    using Error::Error;
};

/// Filesystem write/read failure.
struct IoError : Error {
    using Error::Error;
};

/// The attack objective became NaN/Inf; carries where it happened.
struct NonFiniteLossError : Error {
    NonFiniteLossError(int iteration, double loss)
        : Error("non-finite gradient-matching loss " + std::to_string(loss) +
                " at iteration " + std::to_string(iteration)),
          iteration(iteration),
          loss(loss) {}

    int iteration;
    double loss;
};

/// Invalid configuration or command-line input.
struct UsageError : Error {
    using Error::Error;
};

}  // namespace gradleak
