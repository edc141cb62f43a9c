#pragma once

#include <stdexcept>
#include <string>

namespace confdepth {

/// Coarse error category; the CLI maps each one onto a process exit code.
enum class ErrorKind {
    Config,   // bad parameters, malformed config, inconsistent request
    Data,     // unreadable, corrupt or inconsistent input data
    Numeric,  // a computation had nothing usable to work on
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

#define CONFDEPTH_DEFINE_ERROR(Name, Kind)                                      \
    class Name : public Error {                                                 \
    public:                                                                     \
        explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
    };

CONFDEPTH_DEFINE_ERROR(ConfigError, Config)
CONFDEPTH_DEFINE_ERROR(ParameterError, Config)
CONFDEPTH_DEFINE_ERROR(ValidationError, Config)
CONFDEPTH_DEFINE_ERROR(ShapeError, Data)
CONFDEPTH_DEFINE_ERROR(IoError, Data)
CONFDEPTH_DEFINE_ERROR(ParseError, Data)
CONFDEPTH_DEFINE_ERROR(UnsupportedFormatError, Data)
CONFDEPTH_DEFINE_ERROR(CorruptFileError, Data)
CONFDEPTH_DEFINE_ERROR(InvalidDimensionsError, Data)
CONFDEPTH_DEFINE_ERROR(TriangulationError, Numeric)
CONFDEPTH_DEFINE_ERROR(ProjectionError, Numeric)
CONFDEPTH_DEFINE_ERROR(EmptySupervisionError, Numeric)
CONFDEPTH_DEFINE_ERROR(EmptyMaskError, Numeric)
CONFDEPTH_DEFINE_ERROR(ScalingError, Numeric)
CONFDEPTH_DEFINE_ERROR(InvalidDepthError, Numeric)

#undef CONFDEPTH_DEFINE_ERROR

}  // namespace confdepth
