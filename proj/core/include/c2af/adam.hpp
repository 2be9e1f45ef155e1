#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "c2af/tensor.hpp"

namespace c2af {

// A learnable tensor with its gradient buffer and a stable path-style name
// (e.g. "view0.lstm.w_f") used for optimizer state and checkpoints.
struct Param {
  Tensor value;
  Tensor grad;
  std::string name;

  Param() = default;
  Param(std::string name_, Tensor value_)
      : value(std::move(value_)), grad(value.shape()), name(std::move(name_)) {}

  void zero_grad() { grad.fill(0.0); }
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Shared step counter plus first/second moment buffers per registered param.
class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(const std::vector<Param*>& params);

  std::size_t step_count() const { return step_; }
  bool has(const std::string& name) const { return moments_.count(name) != 0; }

  // Checkpoint access.
  const Tensor& first_moment(const std::string& name) const;
  const Tensor& second_moment(const std::string& name) const;
  void restore(const std::string& name, Tensor m, Tensor v);
  void set_step(std::size_t s) { step_ = s; }

  friend void adam_step(const std::vector<Param*>& params, AdamState& state,
                        const AdamConfig& cfg);

 private:
  struct Moments {
    Tensor m, v;
  };
  std::size_t step_ = 0;
  std::unordered_map<std::string, Moments> moments_;
};

// One Adam update with bias correction over all params in the group.
// Throws if a param has no registered state.
void adam_step(const std::vector<Param*>& params, AdamState& state,
               const AdamConfig& cfg = {});

}  // namespace c2af
