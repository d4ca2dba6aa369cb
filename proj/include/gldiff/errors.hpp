#pragma once

#include <stdexcept>
#include <string>

namespace gldiff {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

#define GLDIFF_ERROR(Name)                                             \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& what) : Error(#Name ": " + what) {} \
  }

GLDIFF_ERROR(NotPositiveDefinite);
GLDIFF_ERROR(ConvergenceFailure);
GLDIFF_ERROR(SingularStep);
GLDIFF_ERROR(HorizonTooShort);
GLDIFF_ERROR(ConeExit);
GLDIFF_ERROR(OrderViolation);
GLDIFF_ERROR(CollisionOverflow);
GLDIFF_ERROR(KappaEvaluationFailure);
GLDIFF_ERROR(DomainError);
GLDIFF_ERROR(PoleError);
GLDIFF_ERROR(MixingFailure);
GLDIFF_ERROR(HighVariance);
GLDIFF_ERROR(StepTooSmall);
GLDIFF_ERROR(InsufficientSamples);
GLDIFF_ERROR(InsufficientNeighbors);
GLDIFF_ERROR(PreconditionError);
GLDIFF_ERROR(ConfigError);

#undef GLDIFF_ERROR

}  // namespace gldiff
