#ifndef POSEFUSE_SELFCHECK_HPP
#define POSEFUSE_SELFCHECK_HPP

#include <string>
#include <vector>

#include "posefuse/nn.hpp"

namespace posefuse::selfcheck {

struct CheckResult {
  std::string name;
  double tolerance = 0.0;
  nn::GradCheckReport report;
};

struct SuiteResult {
  bool pass = true;
  std::vector<CheckResult> checks;
  std::vector<std::string> failing;  // "check: param[index]" entries
  std::string summary() const;
};

// Finite-difference verification of every layer backward (tolerance 1e-6,
// h = 1e-5), the geodesic pose loss and the full joint objective on a tiny
// k=3, d=8 model (tolerance 1e-4), away from ReLU kinks and the 1/sin clamp
// zones. inject_fault corrupts one analytic gradient so the failure path can
// be exercised.
SuiteResult run_gradcheck_suite(bool inject_fault = false);

}  // namespace posefuse::selfcheck

#endif
