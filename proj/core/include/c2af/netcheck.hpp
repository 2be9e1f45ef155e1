#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "c2af/gradcheck.hpp"

namespace c2af {

// Finite-difference verification of the whole network on a small instance:
// V=3 views, K=4 classes, T=8 steps, D^v=3 features, d_global=4, two conv
// layers of width 4, N_k=2, over a random 6-sample batch. Each view's
// encoder is checked through its view loss, the fusion parameters through
// the fusion loss with the per-view predictions held fixed.
struct NetworkGradCheck {
  struct Group {
    std::string name;
    GradCheckReport report;
  };
  std::vector<Group> groups;
  double max_rel_err = 0.0;

  bool pass(double tol = 1e-4) const { return max_rel_err < tol; }
};

NetworkGradCheck run_network_gradcheck(std::uint64_t seed, double eps,
                                       std::size_t coords_per_tensor = 20);

}  // namespace c2af
