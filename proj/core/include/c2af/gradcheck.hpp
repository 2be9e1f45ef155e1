#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "c2af/adam.hpp"

namespace c2af {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> per_param;
  double max_rel_err = 0.0;

  bool pass(double tol) const { return max_rel_err < tol; }
};

// Compares already-populated analytic gradients against central finite
// differences (f(x+eps) - f(x-eps)) / (2 eps). For each param tensor, up to
// coords_per_tensor coordinates are sampled (all of them when the tensor is
// small enough). Relative error is |a - n| / max(|a|, |n|, 1e-6).
//
// loss_fn must be a deterministic function of the param values; it is
// re-evaluated with single coordinates perturbed in place and restored.
// Throws on eps <= 0 and on a non-finite loss value.
GradCheckReport finite_diff_check(const std::function<double()>& loss_fn,
                                  const std::vector<Param*>& params,
                                  double eps = 1e-5,
                                  std::size_t coords_per_tensor = 20,
                                  std::uint64_t seed = 17);

}  // namespace c2af
