#pragma once

#include <stdexcept>
#include <string>

namespace albedo {

// Invalid or inconsistent configuration / input data.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// A precondition of the requested computation does not hold (inadmissible
// coefficients, missing subcriticality certificate, unsupported dimension).
// Callers map this to the "refusal" exit path.
struct RefusalError : std::runtime_error {
    explicit RefusalError(const std::string& msg) : std::runtime_error(msg) {}
};

// A computation finished but failed its accuracy contract (series tail above
// tolerance, tolerance check failed).
struct ToleranceError : std::runtime_error {
    explicit ToleranceError(const std::string& msg) : std::runtime_error(msg) {}
};

// Point outside the geometric domain of an operation.
struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace albedo
