#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace mcrd {

enum class ErrorCode {
  OrderUnavailable,
  NoBistability,
  SignPatternViolation,
  NoMassBalance,
  DegenerateBalance,
  NoConvergence,
  DomainTooSmall,
  SolvabilityViolation,
  StageOrderViolation,
  IndependenceViolation,
  DegenerateJump,
  MassOutOfRange,
  GridTooCoarse,
  SingularJacobian,
  IterationStall,
  NoRootInWindow,
  MultipleRoots,
  ConfigInvalid,
  IoFailure,
  InvalidArgument,
};

inline const char* error_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::OrderUnavailable: return "OrderUnavailable";
    case ErrorCode::NoBistability: return "NoBistability";
    case ErrorCode::SignPatternViolation: return "SignPatternViolation";
    case ErrorCode::NoMassBalance: return "NoMassBalance";
    case ErrorCode::DegenerateBalance: return "DegenerateBalance";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::DomainTooSmall: return "DomainTooSmall";
    case ErrorCode::SolvabilityViolation: return "SolvabilityViolation";
    case ErrorCode::StageOrderViolation: return "StageOrderViolation";
    case ErrorCode::IndependenceViolation: return "IndependenceViolation";
    case ErrorCode::DegenerateJump: return "DegenerateJump";
    case ErrorCode::MassOutOfRange: return "MassOutOfRange";
    case ErrorCode::GridTooCoarse: return "GridTooCoarse";
    case ErrorCode::SingularJacobian: return "SingularJacobian";
    case ErrorCode::IterationStall: return "IterationStall";
    case ErrorCode::NoRootInWindow: return "NoRootInWindow";
    case ErrorCode::MultipleRoots: return "MultipleRoots";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

// Short scientific formatting for diagnostics.
inline std::string sci(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", x);
  return buf;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_name(code)) + ": " + what), code_(code) {}
  ErrorCode code() const { return code_; }
  const char* name() const { return error_name(code_); }

 private:
  ErrorCode code_;
};

}  // namespace mcrd
