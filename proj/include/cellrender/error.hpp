// Copyright Contributors to the cellrender Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace cellrender {

/// Raised when a parameter is outside its valid domain (non-finite, non-positive width, ...).
class InvalidParameter : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when input data violates an operation precondition (empty cloud, missing labels).
class InvalidInput : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Raised for mathematically undefined arguments, e.g. log compression of a negative density.
class DomainError : public std::domain_error {
  public:
    using std::domain_error::domain_error;
};

/// Raised when a linear system is singular or a computation produced non-finite values.
class NumericalError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Raised when an accelerated path is requested for a configuration it cannot handle exactly.
class PreconditionError : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

/// Raised by support queries on kernels without bounded support.
class UnsupportedKernel : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

} // namespace cellrender
