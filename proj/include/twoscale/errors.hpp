#ifndef TWOSCALE_ERRORS_HPP
#define TWOSCALE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace twoscale {

/// Invalid or inconsistent problem configuration (bad dimension, mesh
/// misalignment, malformed JSON, ...).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Mismatched sizes between meshes, tensors and fields.
class DimensionError : public std::runtime_error {
public:
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Coefficient data violates a validity requirement (positivity, symmetry).
class CoefficientError : public std::runtime_error {
public:
    explicit CoefficientError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Iterative or eigen solver failed to meet its contract.
class SolverError : public std::runtime_error {
public:
    explicit SolverError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Cell problem right-hand side is not orthogonal to the kernel space.
class SolvabilityError : public std::runtime_error {
public:
    SolvabilityError(const std::string& msg, double defect)
        : std::runtime_error(msg), defect_(defect) {}
    double defect() const { return defect_; }

private:
    double defect_;
};

/// A structural invariant that should hold by construction was violated.
class InvariantError : public std::runtime_error {
public:
    explicit InvariantError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace twoscale

#endif
