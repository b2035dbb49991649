#pragma once

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vrnmt/tensor.hpp"

namespace vrnmt {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_tensor;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
  bool ok(double tol) const { return max_rel_err <= tol; }
};

// eval(with_grad): rebuilds the objective from the tensors' current values and
// returns its scalar value; when with_grad it must also accumulate into each
// tensor's .grad.  The harness perturbs entries in place and restores them.
GradCheckResult check_gradient(const NamedParams& params,
                               const std::function<double(bool)>& eval,
                               double step = 1e-5);

}  // namespace vrnmt
