#include "c2af/tensor.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace c2af {

namespace {
std::size_t checked_numel(const std::vector<std::size_t>& shape) {
  if (shape.empty()) throw std::invalid_argument("tensor: empty shape");
  std::size_t n = 1;
  for (std::size_t e : shape) {
    if (e == 0) throw std::invalid_argument("tensor: zero extent");
    n *= e;
  }
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(checked_numel(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (checked_numel(shape_) != data_.size()) {
    throw std::invalid_argument("tensor: shape/data size mismatch");
  }
}

std::size_t Tensor::extent(std::size_t axis) const {
  if (axis >= shape_.size()) throw std::out_of_range("tensor: axis");
  return shape_[axis];
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::fill(double v) {
  for (double& x : data_) x = v;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

}  // namespace c2af
