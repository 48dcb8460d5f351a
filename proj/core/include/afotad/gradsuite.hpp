#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "afotad/gradcheck.hpp"

namespace afotad {

struct GradSuiteOptions {
  int cases_per_op = 100;
  double eps = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 1;
  // Test-only: flip the sign of one op's analytic gradient to prove the
  // checker catches wrong gradients.
  bool inject_sign_flip = false;
};

struct OpGradReport {
  std::string op;
  int cases = 0;
  int retries = 0;  // finite-difference kink hits absorbed by re-sampling
  double max_rel_error = 0.0;
  std::uint64_t worst_seed = 0;
  bool pass = false;
};

// Checks every differentiable operation against central finite differences:
// conv1d (plain and dilated), maxpool1d, softmax, the elementwise ops,
// deform_conv1d (input/weight/offset/modulation paths), the offset-prediction
// branch, the IoU and classification losses, and the end-to-end joint loss of
// a tiny model including alpha.
std::vector<OpGradReport> run_gradient_suite(const GradSuiteOptions& options = {});

bool suite_passed(const std::vector<OpGradReport>& reports);
std::string format_suite_report(const std::vector<OpGradReport>& reports);

}  // namespace afotad
