#include "c2af/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "c2af/rng.hpp"

namespace c2af {

namespace {
double checked_loss(const std::function<double()>& loss_fn) {
  const double v = loss_fn();
  if (!std::isfinite(v)) throw std::runtime_error("finite_diff_check: non-finite loss");
  return v;
}
}  // namespace

GradCheckReport finite_diff_check(const std::function<double()>& loss_fn,
                                  const std::vector<Param*>& params, double eps,
                                  std::size_t coords_per_tensor,
                                  std::uint64_t seed) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite_diff_check: eps must be > 0");
  if (coords_per_tensor == 0) {
    throw std::invalid_argument("finite_diff_check: need at least one coordinate");
  }
  Rng rng = Rng::stream(seed, /*tag=*/0xF1D1FFull);
  GradCheckReport report;
  for (Param* p : params) {
    const std::size_t n = p->value.size();
    std::vector<std::size_t> coords;
    if (n <= coords_per_tensor) {
      coords.resize(n);
      for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    } else {
      // Sample distinct coordinates: shuffle an index vector, take a prefix.
      std::vector<std::size_t> all(n);
      for (std::size_t i = 0; i < n; ++i) all[i] = i;
      rng.shuffle(all);
      coords.assign(all.begin(), all.begin() + coords_per_tensor);
      std::sort(coords.begin(), coords.end());
    }

    double worst = 0.0;
    for (std::size_t c : coords) {
      const double saved = p->value[c];
      p->value[c] = saved + eps;
      const double plus = checked_loss(loss_fn);
      p->value[c] = saved - eps;
      const double minus = checked_loss(loss_fn);
      p->value[c] = saved;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double analytic = p->grad[c];
      const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-6});
      worst = std::max(worst, std::fabs(analytic - numeric) / denom);
    }
    report.per_param.push_back({p->name, worst});
    report.max_rel_err = std::max(report.max_rel_err, worst);
  }
  return report;
}

}  // namespace c2af
