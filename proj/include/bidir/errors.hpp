#pragma once

#include <stdexcept>
#include <string>

namespace bidir {

/// Shape or rank mismatch between tensor operands.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid argument value (bad distribution parameters, out-of-range labels, ...).
struct ValueError : std::runtime_error {
    explicit ValueError(const std::string& what) : std::runtime_error(what) {}
};

/// Non-finite value surfaced by a numeric operation. Training aborts on these
/// rather than letting NaN poison a long run.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed input file (dataset, checkpoint). Message carries the byte offset.
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

/// Bad experiment configuration (unknown preset, invalid combination).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace bidir
