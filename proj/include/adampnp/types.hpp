#pragma once

#include <Eigen/Core>
#include <stdexcept>
#include <string>

namespace adampnp {

using Vec = Eigen::VectorXd;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Input text could not be parsed. `line` is 1-based, 0 when unknown.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& msg, int line = 0)
        : std::runtime_error(line > 0 ? msg + " (line " + std::to_string(line) + ")" : msg),
          line(line) {}
    int line;
};

// A vector/matrix argument has the wrong size for the operation.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// An atom (plus its kernel support) falls outside the density grid.
class OutOfGridError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// The sampler produced a non-finite state. `step` is the diffusion time
// index at which the check failed.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& msg, int step)
        : std::runtime_error(msg + " at step t=" + std::to_string(step)), step(step) {}
    int step;
};

// Configuration value out of range or inconsistent.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

} // namespace adampnp
