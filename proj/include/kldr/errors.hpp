#pragma once

#include <stdexcept>
#include <string>

namespace kldr {

// Failure categories surfaced by the library. Config problems map to CLI
// exit code 2, everything else to exit code 3.
enum class errc {
  non_convergent,
  numerical_failure,
  singular_gamma0,
  rank_deficient,
  not_exponentially_ergodic,
  asymmetric_gamma1,
  invalid_d,
  invalid_solution,
  support_mismatch,
  no_convergence,
  verification_failed,
  singular_omega_cov,
  unstable_law,
  rank_deficient_h,
  invalid_argument,
  config_error,
};

inline const char* errc_name(errc c) {
  switch (c) {
    case errc::non_convergent: return "NonConvergent";
    case errc::numerical_failure: return "NumericalFailure";
    case errc::singular_gamma0: return "SingularGamma0";
    case errc::rank_deficient: return "RankDeficient";
    case errc::not_exponentially_ergodic: return "NotExponentiallyErgodic";
    case errc::asymmetric_gamma1: return "AsymmetricGamma1";
    case errc::invalid_d: return "InvalidD";
    case errc::invalid_solution: return "InvalidSolution";
    case errc::support_mismatch: return "SupportMismatch";
    case errc::no_convergence: return "NoConvergence";
    case errc::verification_failed: return "VerificationFailed";
    case errc::singular_omega_cov: return "SingularOmegaCov";
    case errc::unstable_law: return "UnstableLaw";
    case errc::rank_deficient_h: return "RankDeficientH";
    case errc::invalid_argument: return "InvalidArgument";
    case errc::config_error: return "ConfigError";
  }
  return "UnknownError";
}

class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message),
        code_(code) {}

  errc code() const noexcept { return code_; }
  bool is_config_error() const noexcept { return code_ == errc::config_error; }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool cond, errc code, const std::string& message) {
  if (!cond) fail(code, message);
}

}  // namespace kldr
