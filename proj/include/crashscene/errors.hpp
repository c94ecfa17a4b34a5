#pragma once

#include <stdexcept>
#include <string>

namespace crashscene {

// Every library failure derives from Error so callers can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define CRASHSCENE_DEFINE_ERROR(Name)      \
  class Name : public Error {              \
   public:                                 \
    using Error::Error;                    \
  }

CRASHSCENE_DEFINE_ERROR(InvalidDepthError);
CRASHSCENE_DEFINE_ERROR(BoundsError);
CRASHSCENE_DEFINE_ERROR(ShapeError);
CRASHSCENE_DEFINE_ERROR(EmptyCloudError);
CRASHSCENE_DEFINE_ERROR(CalibrationInfeasibleError);
CRASHSCENE_DEFINE_ERROR(FitError);
CRASHSCENE_DEFINE_ERROR(NoInterceptError);
CRASHSCENE_DEFINE_ERROR(DegenerateLaneError);
CRASHSCENE_DEFINE_ERROR(ParameterError);
CRASHSCENE_DEFINE_ERROR(GapError);
CRASHSCENE_DEFINE_ERROR(FrameMismatchError);
CRASHSCENE_DEFINE_ERROR(ClassificationError);
CRASHSCENE_DEFINE_ERROR(UndefinedMetricsError);
CRASHSCENE_DEFINE_ERROR(IoError);
CRASHSCENE_DEFINE_ERROR(FormatError);
CRASHSCENE_DEFINE_ERROR(ConfigError);
CRASHSCENE_DEFINE_ERROR(ScriptError);
CRASHSCENE_DEFINE_ERROR(ValidationError);

#undef CRASHSCENE_DEFINE_ERROR

}  // namespace crashscene
