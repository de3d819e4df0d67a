// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace catsg {

/// Root of every error raised by the library. Callers that only need to
/// report a failure catch this; the CLI maps subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define CATSG_DEFINE_ERROR(Name)            \
  class Name : public Error {               \
   public:                                  \
    using Error::Error;                     \
  }

CATSG_DEFINE_ERROR(SchemaError);
CATSG_DEFINE_ERROR(IoError);
CATSG_DEFINE_ERROR(ConfigError);
CATSG_DEFINE_ERROR(UnknownClass);
CATSG_DEFINE_ERROR(DimensionMismatch);
CATSG_DEFINE_ERROR(EmptyMask);
CATSG_DEFINE_ERROR(MissingMask);
CATSG_DEFINE_ERROR(MissingFrame);
CATSG_DEFINE_ERROR(ChunkOutOfRange);
CATSG_DEFINE_ERROR(InconsistentDim);
CATSG_DEFINE_ERROR(NoQualifyingChunk);
CATSG_DEFINE_ERROR(NonFiniteLoss);
CATSG_DEFINE_ERROR(AlignmentError);
CATSG_DEFINE_ERROR(LengthMismatch);
CATSG_DEFINE_ERROR(EmptyDataset);
CATSG_DEFINE_ERROR(EmptySplit);
CATSG_DEFINE_ERROR(InvalidWindow);
CATSG_DEFINE_ERROR(FingerprintMismatch);

#undef CATSG_DEFINE_ERROR

}  // namespace catsg
