#pragma once

#include <stdexcept>
#include <string>

namespace batchstep {

// Root of every error raised by the library. Each subclass names one failure
// kind so callers (and the CLI exit-code mapping) can dispatch on type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define BATCHSTEP_DEFINE_ERROR(Name)        \
  class Name : public Error {               \
   public:                                  \
    using Error::Error;                     \
  }

// problems
BATCHSTEP_DEFINE_ERROR(InvalidBatchSize);
BATCHSTEP_DEFINE_ERROR(IndexOutOfRange);
BATCHSTEP_DEFINE_ERROR(UnknownProblem);

// optimizer
BATCHSTEP_DEFINE_ERROR(InvalidBounds);
BATCHSTEP_DEFINE_ERROR(InvalidHyperParams);
BATCHSTEP_DEFINE_ERROR(NonFiniteInput);
BATCHSTEP_DEFINE_ERROR(DivergenceDetected);

// theory
BATCHSTEP_DEFINE_ERROR(InvalidConstants);
BATCHSTEP_DEFINE_ERROR(DomainViolation);
BATCHSTEP_DEFINE_ERROR(InfeasibleBeta);
BATCHSTEP_DEFINE_ERROR(MismatchedG);

// harness
BATCHSTEP_DEFINE_ERROR(EmptyLogs);
BATCHSTEP_DEFINE_ERROR(InsufficientData);

// cli
BATCHSTEP_DEFINE_ERROR(ConfigError);

#undef BATCHSTEP_DEFINE_ERROR

}  // namespace batchstep
