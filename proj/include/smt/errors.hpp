#pragma once

#include <stdexcept>
#include <string>

namespace smt {

/// Invalid experiment configuration (edge counts, grid capacity, sizes).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Integration or root-finding produced something unusable (NaN, blow-up, underflow).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A requested quantity does not exist in the current phase (e.g. no plateau q at high T).
class PhaseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A documented precondition of an operation was not met by the caller.
class PreconditionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace smt
