#pragma once

#include <stdexcept>

namespace himatch {

// Base class for all himatch errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define HIMATCH_ERROR_TYPE(Name) \
  class Name : public Error {    \
   public:                       \
    using Error::Error;          \
  }

// I/O and file-format failures.
HIMATCH_ERROR_TYPE(IoError);
HIMATCH_ERROR_TYPE(BadMagic);
HIMATCH_ERROR_TYPE(TruncatedFile);
HIMATCH_ERROR_TYPE(DimOverflow);
HIMATCH_ERROR_TYPE(ConfigError);

// Geometry / container violations.
HIMATCH_ERROR_TYPE(OutOfBounds);
HIMATCH_ERROR_TYPE(EmptyOutput);
HIMATCH_ERROR_TYPE(ImageTooSmall);
HIMATCH_ERROR_TYPE(DimMismatch);
HIMATCH_ERROR_TYPE(DimensionMismatch);
HIMATCH_ERROR_TYPE(HierarchyTooShallow);

// Training / matching failures.
HIMATCH_ERROR_TYPE(NoValidNegative);
HIMATCH_ERROR_TYPE(EmptyDataset);
HIMATCH_ERROR_TYPE(EmptyCandidateSet);

// Flow / evaluation failures.
HIMATCH_ERROR_TYPE(NoSeeds);
HIMATCH_ERROR_TYPE(EmptyInput);
HIMATCH_ERROR_TYPE(LengthMismatch);
HIMATCH_ERROR_TYPE(EmptyMask);
HIMATCH_ERROR_TYPE(DegenerateTransform);

#undef HIMATCH_ERROR_TYPE

}  // namespace himatch
