#include "c2af/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace c2af {

namespace {
void require_rank2(const Tensor& t, const char* who) {
  if (t.rank() != 2) {
    throw std::invalid_argument(std::string(who) + ": expected rank-2 tensor, got " +
                                shape_str(t.shape()));
  }
}
void require_rank1(const Tensor& t, const char* who) {
  if (t.rank() != 1) {
    throw std::invalid_argument(std::string(who) + ": expected rank-1 tensor, got " +
                                shape_str(t.shape()));
  }
}
void require_same_shape(const Tensor& a, const Tensor& b, const char* who) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(who) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}
}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  if (b.extent(0) != k) {
    throw std::invalid_argument("matmul: inner extents differ, " + shape_str(a.shape()) +
                                " * " + shape_str(b.shape()));
  }
  Tensor c({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = a(i, kk);
      const double* brow = b.data() + kk * n;
      double* crow = c.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

void matmul_backward(const Tensor& a, const Tensor& b, const Tensor& dout,
                     Tensor* da, Tensor* db) {
  const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  if (dout.rank() != 2 || dout.extent(0) != m || dout.extent(1) != n) {
    throw std::invalid_argument("matmul_backward: bad upstream gradient shape");
  }
  if (da) {
    if (da->empty()) *da = Tensor({m, k});
    require_same_shape(*da, a, "matmul_backward");
    // dA = dC * B^T
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t kk = 0; kk < k; ++kk) {
        double acc = 0.0;
        const double* drow = dout.data() + i * n;
        const double* brow = b.data() + kk * n;
        for (std::size_t j = 0; j < n; ++j) acc += drow[j] * brow[j];
        (*da)(i, kk) += acc;
      }
    }
  }
  if (db) {
    if (db->empty()) *db = Tensor({k, n});
    require_same_shape(*db, b, "matmul_backward");
    // dB = A^T * dC
    for (std::size_t kk = 0; kk < k; ++kk) {
      for (std::size_t i = 0; i < m; ++i) {
        const double av = a(i, kk);
        const double* drow = dout.data() + i * n;
        double* dbrow = db->data() + kk * n;
        for (std::size_t j = 0; j < n; ++j) dbrow[j] += av * drow[j];
      }
    }
  }
}

Tensor softmax(const Tensor& z) {
  require_rank1(z, "softmax");
  Tensor y(z.shape());
  const double zmax = *std::max_element(z.values().begin(), z.values().end());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    y[i] = std::exp(z[i] - zmax);
    sum += y[i];
  }
  for (std::size_t i = 0; i < y.size(); ++i) y[i] /= sum;
  return y;
}

Tensor softmax_backward(const Tensor& y, const Tensor& dy) {
  require_same_shape(y, dy, "softmax_backward");
  double dot = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) dot += dy[i] * y[i];
  Tensor dz(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) dz[i] = y[i] * (dy[i] - dot);
  return dz;
}

double cross_entropy(const Tensor& p, std::size_t label) {
  require_rank1(p, "cross_entropy");
  if (label >= p.size()) throw std::out_of_range("cross_entropy: label out of range");
  // The log argument is capped at 1 so the loss cannot dip below zero when
  // the epsilon pushes a saturated probability past 1.
  return -std::log(std::min(p[label] + kCrossEntropyEps, 1.0));
}

Tensor cross_entropy_backward(const Tensor& p, std::size_t label) {
  if (label >= p.size()) throw std::out_of_range("cross_entropy: label out of range");
  Tensor dp(p.shape());
  const double arg = p[label] + kCrossEntropyEps;
  dp[label] = arg < 1.0 ? -1.0 / arg : 0.0;
  return dp;
}

Tensor sigmoid(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid_scalar(x[i]);
  return y;
}

Tensor sigmoid_backward(const Tensor& y, const Tensor& dy) {
  require_same_shape(y, dy, "sigmoid_backward");
  Tensor dx(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] = dy[i] * y[i] * (1.0 - y[i]);
  return dx;
}

Tensor tanh(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
  return y;
}

Tensor tanh_backward(const Tensor& y, const Tensor& dy) {
  require_same_shape(y, dy, "tanh_backward");
  Tensor dx(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] = dy[i] * (1.0 - y[i] * y[i]);
  return dx;
}

Tensor relu(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& dy) {
  require_same_shape(x, dy, "relu_backward");
  Tensor dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
  return dx;
}

}  // namespace c2af
