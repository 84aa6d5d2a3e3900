#pragma once

#include <stdexcept>
#include <string>

namespace nlpt {

enum class ErrorCode {
  InvalidDomain,
  ResolutionTooCoarse,
  LevelOutOfRange,
  DegenerateGradient,
  NoCatalogEntry,
  IndeterminateTail,
  NonConvergence,
  UnverifiedExhaustion,
  NoPotential,
  SupportTouchesBoundary,
  ZeroDenominator,
  AllDenominatorsZero,
  BoundaryConditionViolated,
  WindowTooShort,
  EmptyFamily,
  DisjointnessViolated,
  ConfigInvalid,
  NoCurvePayload,
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace nlpt
