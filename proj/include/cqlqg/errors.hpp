#pragma once

#include <stdexcept>
#include <string>

namespace cqlqg {

// Exit-code classes used by the CLI: 2 validation, 3 infeasible,
// 4 instability, 5 numerical failure.
enum class ErrorClass : int {
    validation = 2,
    infeasible = 3,
    instability = 4,
    numerical = 5,
};

class Error : public std::runtime_error {
public:
    Error(ErrorClass cls, const std::string& tag, const std::string& msg)
        : std::runtime_error(tag + ": " + msg), cls_(cls) {}

    ErrorClass error_class() const noexcept { return cls_; }
    int exit_code() const noexcept { return static_cast<int>(cls_); }

private:
    ErrorClass cls_;
};

#define CQLQG_DEFINE_ERROR(Name, Cls)                       \
    struct Name : Error {                                   \
        explicit Name(const std::string& msg)               \
            : Error(ErrorClass::Cls, #Name, msg) {}         \
    }

CQLQG_DEFINE_ERROR(DimensionMismatch, validation);
CQLQG_DEFINE_ERROR(OddDimension, validation);
CQLQG_DEFINE_ERROR(NotAntisymmetric, validation);
CQLQG_DEFINE_ERROR(OddChannelCount, validation);
CQLQG_DEFINE_ERROR(OutputExceedsField, validation);
CQLQG_DEFINE_ERROR(BadFeedthrough, validation);
CQLQG_DEFINE_ERROR(ParseError, validation);
CQLQG_DEFINE_ERROR(ValidationError, validation);

CQLQG_DEFINE_ERROR(DimensionDeficit, infeasible);
CQLQG_DEFINE_ERROR(InfeasibleGains, infeasible);
CQLQG_DEFINE_ERROR(NotFound, infeasible);

CQLQG_DEFINE_ERROR(NotHurwitz, instability);

CQLQG_DEFINE_ERROR(SingularSystem, numerical);
CQLQG_DEFINE_ERROR(SingularInput, numerical);
CQLQG_DEFINE_ERROR(SingularCcr, numerical);
CQLQG_DEFINE_ERROR(SingularTransform, numerical);
CQLQG_DEFINE_ERROR(ResonantSpectrum, numerical);
CQLQG_DEFINE_ERROR(StaleGramians, numerical);
CQLQG_DEFINE_ERROR(LostStability, numerical);
CQLQG_DEFINE_ERROR(InconsistentGramians, numerical);
CQLQG_DEFINE_ERROR(NotPsd, numerical);
CQLQG_DEFINE_ERROR(NumericalError, numerical);

#undef CQLQG_DEFINE_ERROR

}  // namespace cqlqg
