#pragma once

#include <stdexcept>
#include <string>

namespace sbridge {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// Malformed input: bad dataset, bad configuration, bad arguments.
class ValidationError : public Error {
   public:
    using Error::Error;
};

/// A well-formed input on which estimation cannot proceed.
class EstimationError : public Error {
   public:
    using Error::Error;
};

/// Diverging logistic coefficients (complete or quasi-complete separation).
class SeparationError : public EstimationError {
   public:
    using EstimationError::EstimationError;
};

/// Rank-deficient design, Gram, information or Jacobian matrix.
class SingularMatrixError : public EstimationError {
   public:
    using EstimationError::EstimationError;
};

/// A nuisance probability evaluated at or outside the (0,1) boundary.
class PositivityError : public EstimationError {
   public:
    using EstimationError::EstimationError;
};

/// Contrast requested on nonpositive risks (log undefined).
class EstimationDomainError : public EstimationError {
   public:
    using EstimationError::EstimationError;
};

}  // namespace sbridge
