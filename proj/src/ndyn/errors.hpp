#pragma once

#include <stdexcept>
#include <string>

namespace ndyn {

// Error taxonomy shared by the library, the C API and the CLI. Each class
// carries a stable code so the C layer can translate without string matching.
enum class ErrCode : int {
  Ok = 0,
  Domain = 1,
  Config = 2,
  UnsupportedConjugate = 3,
  UnsupportedClassification = 4,
  Quadrature = 5,
  GlueNotMonotone = 6,
  SlowVarConditionFails = 7,
  ExpansionFails = 8,
  Convergence = 9,
  PowerIterationStall = 10,
  InsufficientOrbit = 11,
  TruncatedReturn = 12,
  VerdictGate = 13,
  Internal = 14,
};

class Error : public std::runtime_error {
public:
  Error(ErrCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrCode code() const { return code_; }

private:
  ErrCode code_;
};

inline const char* err_code_name(ErrCode c) {
  switch (c) {
    case ErrCode::Ok: return "ok";
    case ErrCode::Domain: return "domain_error";
    case ErrCode::Config: return "config_error";
    case ErrCode::UnsupportedConjugate: return "unsupported_conjugate";
    case ErrCode::UnsupportedClassification: return "unsupported_classification";
    case ErrCode::Quadrature: return "quadrature_error";
    case ErrCode::GlueNotMonotone: return "glue_not_monotone";
    case ErrCode::SlowVarConditionFails: return "slow_variation_condition_fails";
    case ErrCode::ExpansionFails: return "expansion_fails";
    case ErrCode::Convergence: return "convergence_failure";
    case ErrCode::PowerIterationStall: return "power_iteration_stall";
    case ErrCode::InsufficientOrbit: return "insufficient_orbit";
    case ErrCode::TruncatedReturn: return "truncated_return";
    case ErrCode::VerdictGate: return "verdict_gate";
    case ErrCode::Internal: return "internal_error";
  }
  return "unknown";
}

[[noreturn]] inline void fail(ErrCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace ndyn
