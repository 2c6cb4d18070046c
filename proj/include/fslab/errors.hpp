#pragma once

#include <stdexcept>
#include <string>

namespace fslab {

// Base for every error the library raises; each condition named in the
// operation contracts gets its own type so callers can catch selectively.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define FSLAB_DEFINE_ERROR(Name) \
  struct Name : Error {          \
    using Error::Error;          \
  }

FSLAB_DEFINE_ERROR(InvalidParams);
FSLAB_DEFINE_ERROR(DomainError);
FSLAB_DEFINE_ERROR(DivergentNorm);
FSLAB_DEFINE_ERROR(OracleMismatch);

FSLAB_DEFINE_ERROR(ConfigError);
FSLAB_DEFINE_ERROR(GridMismatch);
FSLAB_DEFINE_ERROR(TailUnknown);

FSLAB_DEFINE_ERROR(ZeroProfile);
FSLAB_DEFINE_ERROR(InfeasibleScaling);

FSLAB_DEFINE_ERROR(NoSolution);
FSLAB_DEFINE_ERROR(Diverged);
FSLAB_DEFINE_ERROR(CollapseToZero);

FSLAB_DEFINE_ERROR(NonPositiveData);
FSLAB_DEFINE_ERROR(InvalidRegime);
FSLAB_DEFINE_ERROR(ZeroPeak);
FSLAB_DEFINE_ERROR(NonPositiveTail);
FSLAB_DEFINE_ERROR(SingularShift);

#undef FSLAB_DEFINE_ERROR

}  // namespace fslab
