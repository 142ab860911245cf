#pragma once

#include <stdexcept>
#include <string>

namespace qdl {

enum class ErrorCode {
    NonPositiveParameter,
    AssumptionHViolated,
    RegimeCountUnsupported,
    RootStructureViolated,
    SingularParticularSystem,
    IllConditionedSystem,
    NoRoot,
    NoValidCase,
    NegativeSurplus,
    InvalidStart,
    NotConverged,
    InvalidInput,
};

inline const char* to_string(ErrorCode c) {
    switch (c) {
    case ErrorCode::NonPositiveParameter:     return "NonPositiveParameter";
    case ErrorCode::AssumptionHViolated:      return "AssumptionHViolated";
    case ErrorCode::RegimeCountUnsupported:   return "RegimeCountUnsupported";
    case ErrorCode::RootStructureViolated:    return "RootStructureViolated";
    case ErrorCode::SingularParticularSystem: return "SingularParticularSystem";
    case ErrorCode::IllConditionedSystem:     return "IllConditionedSystem";
    case ErrorCode::NoRoot:                   return "NoRoot";
    case ErrorCode::NoValidCase:              return "NoValidCase";
    case ErrorCode::NegativeSurplus:          return "NegativeSurplus";
    case ErrorCode::InvalidStart:             return "InvalidStart";
    case ErrorCode::NotConverged:             return "NotConverged";
    case ErrorCode::InvalidInput:             return "InvalidInput";
    }
    return "UnknownError";
}

/// All qdl failures carry a machine-checkable code plus a human message.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace qdl
