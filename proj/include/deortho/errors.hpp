#pragma once

#include <stdexcept>
#include <string>

namespace deortho {

/// Error classes map onto the CLI exit codes.
enum class ErrorClass { config = 2, numerical = 3, validation = 4 };

class Error : public std::runtime_error {
public:
  Error(ErrorClass cls, const std::string& what) : std::runtime_error(what), cls_(cls) {}
  ErrorClass error_class() const noexcept { return cls_; }
  int exit_code() const noexcept { return static_cast<int>(cls_); }

private:
  ErrorClass cls_;
};

#define DEORTHO_DEFINE_ERROR(Name, Class)                                                \
  class Name : public Error {                                                           \
  public:                                                                               \
    explicit Name(const std::string& what) : Error(ErrorClass::Class, #Name ": " + what) {} \
  }

DEORTHO_DEFINE_ERROR(ConfigError, config);

DEORTHO_DEFINE_ERROR(MismatchError, numerical);
DEORTHO_DEFINE_ERROR(ConvergenceError, numerical);
DEORTHO_DEFINE_ERROR(StabilityError, numerical);
DEORTHO_DEFINE_ERROR(QuadratureError, numerical);
DEORTHO_DEFINE_ERROR(StencilError, numerical);

DEORTHO_DEFINE_ERROR(LeakageError, validation);
DEORTHO_DEFINE_ERROR(ScheduleMismatch, validation);
DEORTHO_DEFINE_ERROR(CoefficientError, validation);
DEORTHO_DEFINE_ERROR(InsufficientSeries, validation);
DEORTHO_DEFINE_ERROR(InvalidArgument, validation);

#undef DEORTHO_DEFINE_ERROR

} // namespace deortho
