#pragma once

#include <stdexcept>

namespace bitcn {

// Malformed config file or bad command-line usage. CLI maps this to exit 1.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data: CSV violations, bad checkpoints,
// out-of-vocabulary ids. CLI maps this to exit 2.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite values or invalid numeric arguments reached a computation.
// CLI maps this to exit 3.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor shape or op argument contract violation; a programming error
// rather than a data problem.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

} // namespace bitcn
