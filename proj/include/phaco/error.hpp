#pragma once

#include <stdexcept>
#include <string>

namespace phaco {

enum class ErrorCode {
    EmptyMask,
    MultipleComponents,
    ContourTooShort,
    AllPointsRejected,
    TooFewPoints,
    DegenerateGeometry,
    NumericalFailure,
    DegenerateAnnulus,
    ZeroVariance,
    ShapeMismatch,
    LengthMismatch,
    EmptyClass,
    DivergenceDetected,
    MissingInput,
    MissingColor,
    NoIntersection,
    InvalidConfig,
    InvalidFormat,
    IoFailure,
    InputExhausted,
};

inline const char* error_code_name(ErrorCode code) {
    switch (code) {
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::MultipleComponents: return "MultipleComponents";
    case ErrorCode::ContourTooShort: return "ContourTooShort";
    case ErrorCode::AllPointsRejected: return "AllPointsRejected";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::DegenerateGeometry: return "DegenerateGeometry";
    case ErrorCode::NumericalFailure: return "NumericalFailure";
    case ErrorCode::DegenerateAnnulus: return "DegenerateAnnulus";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptyClass: return "EmptyClass";
    case ErrorCode::DivergenceDetected: return "DivergenceDetected";
    case ErrorCode::MissingInput: return "MissingInput";
    case ErrorCode::MissingColor: return "MissingColor";
    case ErrorCode::NoIntersection: return "NoIntersection";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InvalidFormat: return "InvalidFormat";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::InputExhausted: return "InputExhausted";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace phaco
