#include "c2af/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace c2af {

AdamState::AdamState(const std::vector<Param*>& params) {
  for (const Param* p : params) {
    if (p->name.empty()) throw std::invalid_argument("adam: unnamed param");
    if (moments_.count(p->name)) {
      throw std::invalid_argument("adam: duplicate param name " + p->name);
    }
    moments_[p->name] = Moments{Tensor(p->value.shape()), Tensor(p->value.shape())};
  }
}

const Tensor& AdamState::first_moment(const std::string& name) const {
  auto it = moments_.find(name);
  if (it == moments_.end()) throw std::out_of_range("adam: no state for " + name);
  return it->second.m;
}

const Tensor& AdamState::second_moment(const std::string& name) const {
  auto it = moments_.find(name);
  if (it == moments_.end()) throw std::out_of_range("adam: no state for " + name);
  return it->second.v;
}

void AdamState::restore(const std::string& name, Tensor m, Tensor v) {
  if (!m.same_shape(v)) throw std::invalid_argument("adam: moment shape mismatch");
  moments_[name] = Moments{std::move(m), std::move(v)};
}

void adam_step(const std::vector<Param*>& params, AdamState& state,
               const AdamConfig& cfg) {
  state.step_ += 1;
  const double t = static_cast<double>(state.step_);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (Param* p : params) {
    auto it = state.moments_.find(p->name);
    if (it == state.moments_.end()) {
      throw std::runtime_error("adam: uninitialized state for param " + p->name);
    }
    Tensor& m = it->second.m;
    Tensor& v = it->second.v;
    if (!m.same_shape(p->value)) {
      throw std::runtime_error("adam: state shape mismatch for " + p->name);
    }
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p->value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

}  // namespace c2af
