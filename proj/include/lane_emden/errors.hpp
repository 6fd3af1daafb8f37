#pragma once

#include <stdexcept>
#include <string>

namespace lane_emden {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Errors that stem from invalid inputs rather than numerical failure.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Errors raised when an iterative or adaptive method does not deliver.
class NumericalError : public Error {
public:
  using Error::Error;
};

#define LANE_EMDEN_ERROR(Name, Base)            \
  class Name : public Base {                    \
  public:                                       \
    explicit Name(const std::string& what)      \
        : Base(std::string(#Name ": ") + what) {} \
  };

LANE_EMDEN_ERROR(DomainError, ConfigError)
LANE_EMDEN_ERROR(InvalidExponent, ConfigError)
LANE_EMDEN_ERROR(WrongRegime, ConfigError)
LANE_EMDEN_ERROR(OnDiagonal, ConfigError)
LANE_EMDEN_ERROR(InsufficientData, ConfigError)
LANE_EMDEN_ERROR(DivergentIntegral, ConfigError)
LANE_EMDEN_ERROR(MissingConstant, ConfigError)
LANE_EMDEN_ERROR(UnprintedBranch, ConfigError)

LANE_EMDEN_ERROR(StepFailure, NumericalError)
LANE_EMDEN_ERROR(NoConvergence, NumericalError)
LANE_EMDEN_ERROR(SingularJacobian, NumericalError)
LANE_EMDEN_ERROR(BracketNotFound, NumericalError)
LANE_EMDEN_ERROR(TailNotResolved, NumericalError)
LANE_EMDEN_ERROR(QuadratureNotConverged, NumericalError)
LANE_EMDEN_ERROR(LeftAdmissibleSet, NumericalError)
LANE_EMDEN_ERROR(TrivialSolution, NumericalError)
LANE_EMDEN_ERROR(NonFiniteOutput, NumericalError)

#undef LANE_EMDEN_ERROR

}  // namespace lane_emden
