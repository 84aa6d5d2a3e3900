#include "nlpt/error.hpp"

namespace nlpt {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidDomain: return "InvalidDomain";
    case ErrorCode::ResolutionTooCoarse: return "ResolutionTooCoarse";
    case ErrorCode::LevelOutOfRange: return "LevelOutOfRange";
    case ErrorCode::DegenerateGradient: return "DegenerateGradient";
    case ErrorCode::NoCatalogEntry: return "NoCatalogEntry";
    case ErrorCode::IndeterminateTail: return "IndeterminateTail";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::UnverifiedExhaustion: return "UnverifiedExhaustion";
    case ErrorCode::NoPotential: return "NoPotential";
    case ErrorCode::SupportTouchesBoundary: return "SupportTouchesBoundary";
    case ErrorCode::ZeroDenominator: return "ZeroDenominator";
    case ErrorCode::AllDenominatorsZero: return "AllDenominatorsZero";
    case ErrorCode::BoundaryConditionViolated: return "BoundaryConditionViolated";
    case ErrorCode::WindowTooShort: return "WindowTooShort";
    case ErrorCode::EmptyFamily: return "EmptyFamily";
    case ErrorCode::DisjointnessViolated: return "DisjointnessViolated";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::NoCurvePayload: return "NoCurvePayload";
  }
  return "Unknown";
}

}  // namespace nlpt
