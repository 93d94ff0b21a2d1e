#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sip {

// Base for everything thrown by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Violated precondition (bad argument, bad call order).
class ContractError : public Error {
public:
    using Error::Error;
};

// Operand shapes do not conform for the requested operation.
class ShapeError : public ContractError {
public:
    using ContractError::ContractError;
};

// log/sqrt of a negative number and friends.
class DomainError : public Error {
public:
    using Error::Error;
};

// Cholesky hit a non-positive pivot; carries the pivot index so callers
// can escalate jitter.
class NotPositiveDefiniteError : public Error {
public:
    NotPositiveDefiniteError(const std::string& what, std::size_t pivot)
        : Error(what), pivot_index(pivot) {}
    std::size_t pivot_index;
};

// Zero diagonal in a triangular solve.
class SingularMatrixError : public Error {
public:
    using Error::Error;
};

// Conditioning failure that survived jitter escalation; carries the last
// jitter value tried.
class ConditioningError : public Error {
public:
    ConditioningError(const std::string& what, double jitter)
        : Error(what), final_jitter(jitter) {}
    double final_jitter;
};

// Non-finite loss, divergence, failed fits.
class NumericalError : public Error {
public:
    using Error::Error;
};

// Bad experiment/CLI configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace sip
