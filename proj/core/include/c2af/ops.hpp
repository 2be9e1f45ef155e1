#pragma once

#include <cmath>

#include "c2af/tensor.hpp"

namespace c2af {

// Hand-derived forward/backward pairs. There is no tape: callers chain the
// backward functions in reverse order of the forward calls.

inline constexpr double kCrossEntropyEps = 1e-12;

// C = A (m x k) * B (k x n)
Tensor matmul(const Tensor& a, const Tensor& b);
// Accumulates dL/dA and dL/dB given dL/dC. Either output may be null.
void matmul_backward(const Tensor& a, const Tensor& b, const Tensor& dout,
                     Tensor* da, Tensor* db);

// Stable (max-subtracted) softmax over a rank-1 tensor.
Tensor softmax(const Tensor& z);
// dz given y = softmax(z) and dL/dy.
Tensor softmax_backward(const Tensor& y, const Tensor& dy);

// -log(p[label] + eps) over a probability vector.
double cross_entropy(const Tensor& p, std::size_t label);
// dL/dp for the loss above.
Tensor cross_entropy_backward(const Tensor& p, std::size_t label);

// Element-wise activations. Backward for sigmoid/tanh is expressed in the
// forward output y; relu needs the pre-activation input.
Tensor sigmoid(const Tensor& x);
Tensor sigmoid_backward(const Tensor& y, const Tensor& dy);
Tensor tanh(const Tensor& x);
Tensor tanh_backward(const Tensor& y, const Tensor& dy);
Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& dy);

inline double sigmoid_scalar(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace c2af
