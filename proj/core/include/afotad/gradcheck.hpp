#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "afotad/tensor.hpp"

namespace afotad {

// Operation under test: builds its forward pass on the given graph from the
// given inputs and returns the output tensor (any shape).
using CheckedFn = std::function<Tensor(Graph&, const std::vector<Tensor>&)>;

struct GradCheckOptions {
  double eps = 1e-5;       // central-difference step, must lie in [1e-7, 1e-3]
  std::uint64_t seed = 1;  // seeds the random projection reducing the output to a scalar
  // Test-only hook, applied to the analytic gradients before comparison.
  // Used to prove the checker detects wrong gradients.
  std::function<void(std::vector<Tensor>&)> corrupt_analytic;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  int worst_input = -1;       // index into the inputs vector
  std::int64_t worst_coord = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Compares the analytic gradient of a random scalar projection of f against
// central finite differences, coordinate by coordinate, over every input.
// Relative error convention: |a - n| / max(1e-8, |a| + |n|).
GradCheckResult grad_check(const CheckedFn& f, std::vector<Tensor> inputs,
                           const GradCheckOptions& options = {});

}  // namespace afotad
