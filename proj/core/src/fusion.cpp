#include "c2af/fusion.hpp"

#include <cmath>
#include <stdexcept>

#include "c2af/ops.hpp"

namespace c2af {

namespace {

void require_probability(const Tensor& y, const char* who) {
  if (y.rank() != 1) {
    throw std::invalid_argument(std::string(who) + ": expected rank-1 input");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] < 0.0) {
      throw std::invalid_argument(std::string(who) + ": negative probability entry");
    }
    sum += y[i];
  }
  if (std::fabs(sum - 1.0) > 1e-6) {
    throw std::invalid_argument(std::string(who) + ": probabilities sum to " +
                                std::to_string(sum));
  }
}

Tensor concat_probs(const std::vector<Tensor>& yhat) {
  std::size_t total = 0;
  for (const Tensor& y : yhat) total += y.size();
  Tensor flat({total});
  std::size_t at = 0;
  for (const Tensor& y : yhat) {
    for (std::size_t i = 0; i < y.size(); ++i) flat[at++] = y[i];
  }
  return flat;
}

// 1x1 filtering over an arbitrary P0 x P1 x C stack.
Tensor channel_fuse_raw(const Tensor& stacked, const FusionParams& fp) {
  if (!fp.has_filters()) {
    throw std::logic_error("channel_fuse: mode has no 1x1 stage");
  }
  if (stacked.rank() != 3 || stacked.extent(2) != fp.channels) {
    throw std::invalid_argument("channel_fuse: stack " + shape_str(stacked.shape()) +
                                " does not match filter channels " +
                                std::to_string(fp.channels));
  }
  const std::size_t p0 = stacked.extent(0), p1 = stacked.extent(1);
  const std::size_t c = fp.channels, nk = fp.kernels;
  Tensor r({p0, p1, nk});
  for (std::size_t p = 0; p < p0; ++p) {
    for (std::size_t q = 0; q < p1; ++q) {
      const double* cell = stacked.data() + (p * p1 + q) * c;
      for (std::size_t o = 0; o < nk; ++o) {
        double acc = fp.filt_b.value[o];
        const double* w = fp.filt_w.value.data() + o * c;
        for (std::size_t j = 0; j < c; ++j) acc += w[j] * cell[j];
        r(p, q, o) = acc > 0.0 ? acc : 0.0;
      }
    }
  }
  return r;
}

// The head input for a given mode: a rank-3 stack for filter modes, or the
// already-flat classifier input for the linear-only modes.
Tensor head_input(const std::vector<Tensor>& yhat, const FusionParams& fp) {
  switch (fp.mode) {
    case FusionMode::kComplete:
    case FusionMode::kIntraOnly:
    case FusionMode::kInterOnly:
      return correlation_stack(yhat, fp.mode).values;
    case FusionMode::kFusionOnly: {
      Tensor flat = concat_probs(yhat);
      const std::size_t n = flat.size();
      return Tensor({1, n, 1}, std::move(flat.values()));
    }
    case FusionMode::kNoChannelFusion:
      return stack_correlations(yhat).values;
    case FusionMode::kLabelConcat:
      return concat_probs(yhat);
  }
  throw std::logic_error("head_input: unreachable");
}

Tensor linear_softmax(const Tensor& flat, const FusionParams& fp) {
  if (flat.size() != fp.flat_dim) {
    throw std::invalid_argument("final_classify: input size " +
                                std::to_string(flat.size()) + " != D_f " +
                                std::to_string(fp.flat_dim));
  }
  const std::size_t k = fp.classes;
  Tensor logits({k});
  for (std::size_t r = 0; r < k; ++r) {
    double acc = fp.cls_b.value[r];
    const double* w = fp.cls_w.value.data() + r * fp.flat_dim;
    for (std::size_t j = 0; j < fp.flat_dim; ++j) acc += w[j] * flat[j];
    logits[r] = acc;
  }
  return softmax(logits);
}

}  // namespace

Tensor intra_matrix(const Tensor& y) {
  require_probability(y, "intra_matrix");
  const std::size_t k = y.size();
  Tensor g({k, k});
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t q = 0; q < k; ++q) g(p, q) = y[p] * y[q];
  }
  return g;
}

Tensor inter_matrix(const Tensor& yu, const Tensor& yw) {
  require_probability(yu, "inter_matrix");
  require_probability(yw, "inter_matrix");
  if (yu.size() != yw.size()) {
    throw std::invalid_argument("inter_matrix: class count mismatch");
  }
  const std::size_t k = yu.size();
  Tensor g({k, k});
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t q = 0; q < k; ++q) g(p, q) = yu[p] * yw[q];
  }
  return g;
}

CorrelationTensor stack_correlations(const std::vector<Tensor>& yhat) {
  return correlation_stack(yhat, FusionMode::kComplete);
}

CorrelationTensor correlation_stack(const std::vector<Tensor>& yhat, FusionMode mode) {
  if (yhat.empty()) throw std::invalid_argument("stack_correlations: no views");
  const std::size_t v = yhat.size();
  const std::size_t k = yhat[0].size();
  for (const Tensor& y : yhat) {
    if (y.size() != k) {
      throw std::invalid_argument("stack_correlations: inconsistent class counts");
    }
  }
  const bool want_intra = mode != FusionMode::kInterOnly;
  const bool want_inter = mode != FusionMode::kIntraOnly;
  if (mode == FusionMode::kInterOnly && v < 2) {
    throw std::invalid_argument("stack_correlations: inter-only needs at least two views");
  }

  CorrelationTensor ct;
  std::vector<Tensor> mats;
  if (want_intra) {
    for (std::size_t i = 0; i < v; ++i) {
      ct.channels.emplace_back(i, i);
      mats.push_back(intra_matrix(yhat[i]));
    }
  }
  if (want_inter) {
    for (std::size_t u = 0; u < v; ++u) {
      for (std::size_t w = u + 1; w < v; ++w) {
        ct.channels.emplace_back(u, w);
        mats.push_back(inter_matrix(yhat[u], yhat[w]));
      }
    }
  }
  const std::size_t c = mats.size();
  ct.values = Tensor({k, k, c});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t p = 0; p < k; ++p) {
      for (std::size_t q = 0; q < k; ++q) ct.values(p, q, ch) = mats[ch](p, q);
    }
  }
  return ct;
}

const char* to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::kComplete: return "complete";
    case FusionMode::kIntraOnly: return "intra_only";
    case FusionMode::kInterOnly: return "inter_only";
    case FusionMode::kFusionOnly: return "fusion_only";
    case FusionMode::kNoChannelFusion: return "no_channel_fusion";
    case FusionMode::kLabelConcat: return "label_concat";
  }
  return "?";
}

FusionMode parse_fusion_mode(const std::string& name) {
  if (name == "complete") return FusionMode::kComplete;
  if (name == "intra_only") return FusionMode::kIntraOnly;
  if (name == "inter_only") return FusionMode::kInterOnly;
  if (name == "fusion_only") return FusionMode::kFusionOnly;
  if (name == "no_channel_fusion") return FusionMode::kNoChannelFusion;
  if (name == "label_concat") return FusionMode::kLabelConcat;
  throw std::invalid_argument("unknown fusion mode: " + name);
}

std::vector<Param*> FusionParams::params() {
  if (has_filters()) return {&filt_w, &filt_b, &cls_w, &cls_b};
  return {&cls_w, &cls_b};
}

void FusionParams::zero_grads() {
  for (Param* p : params()) p->zero_grad();
}

FusionParams make_fusion_params(FusionMode mode, std::size_t views,
                                std::size_t classes, std::size_t kernels,
                                const std::string& name_prefix, Rng& rng) {
  if (views == 0 || classes == 0) {
    throw std::invalid_argument("fusion: need at least one view and one class");
  }
  FusionParams fp;
  fp.mode = mode;
  fp.views = views;
  fp.classes = classes;
  fp.kernels = kernels;
  switch (mode) {
    case FusionMode::kComplete:
      fp.channels = correlation_channel_count(views);
      fp.positions = classes * classes;
      break;
    case FusionMode::kIntraOnly:
      fp.channels = views;
      fp.positions = classes * classes;
      break;
    case FusionMode::kInterOnly:
      if (views < 2) throw std::invalid_argument("fusion: inter-only needs V >= 2");
      fp.channels = views * (views - 1) / 2;
      fp.positions = classes * classes;
      break;
    case FusionMode::kFusionOnly:
      fp.channels = 1;
      fp.positions = views * classes;
      break;
    case FusionMode::kNoChannelFusion:
      fp.channels = 0;
      fp.positions = classes * classes;
      fp.flat_dim = classes * classes * correlation_channel_count(views);
      break;
    case FusionMode::kLabelConcat:
      fp.channels = 0;
      fp.positions = 0;
      fp.flat_dim = views * classes;
      break;
  }
  if (fp.has_filters()) {
    if (kernels == 0) throw std::invalid_argument("fusion: N_k must be >= 1");
    fp.flat_dim = fp.positions * kernels;
    const double a = 1.0 / std::sqrt(static_cast<double>(fp.channels));
    Tensor w({kernels, fp.channels});
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-a, a);
    fp.filt_w = Param(name_prefix + ".filt.w", std::move(w));
    fp.filt_b = Param(name_prefix + ".filt.b", Tensor({kernels}));
  }
  const double a = 1.0 / std::sqrt(static_cast<double>(fp.flat_dim));
  Tensor cw({classes, fp.flat_dim});
  for (std::size_t i = 0; i < cw.size(); ++i) cw[i] = rng.uniform(-a, a);
  fp.cls_w = Param(name_prefix + ".cls.w", std::move(cw));
  fp.cls_b = Param(name_prefix + ".cls.b", Tensor({classes}));
  return fp;
}

Tensor channel_fuse(const CorrelationTensor& ct, const FusionParams& fp) {
  return channel_fuse_raw(ct.values, fp);
}

Tensor final_classify(const Tensor& r, const FusionParams& fp) {
  // Row-major storage already matches the documented (p, q, o) flatten order.
  Tensor flat({r.size()}, r.values());
  return linear_softmax(flat, fp);
}

Tensor fusion_predict(const std::vector<Tensor>& yhat, const FusionParams& fp) {
  if (yhat.size() != fp.views) {
    throw std::invalid_argument("fusion_predict: expected " + std::to_string(fp.views) +
                                " views, got " + std::to_string(yhat.size()));
  }
  Tensor input = head_input(yhat, fp);
  if (fp.has_filters()) {
    return final_classify(channel_fuse_raw(input, fp), fp);
  }
  const std::size_t n = input.size();
  return linear_softmax(Tensor({n}, std::move(input.values())), fp);
}

double fusion_batch_loss(const std::vector<std::vector<Tensor>>& yhat,
                         const std::vector<std::size_t>& labels,
                         const FusionParams& fp) {
  if (yhat.empty()) throw std::invalid_argument("fusion_batch_loss: empty batch");
  if (yhat.size() != labels.size()) {
    throw std::invalid_argument("fusion_batch_loss: batch/label size mismatch");
  }
  double loss = 0.0;
  for (std::size_t s = 0; s < yhat.size(); ++s) {
    loss += cross_entropy(fusion_predict(yhat[s], fp), labels[s]);
  }
  return loss / static_cast<double>(yhat.size());
}

double fusion_loss_and_grads(const std::vector<std::vector<Tensor>>& yhat,
                             const std::vector<std::size_t>& labels,
                             FusionParams& fp) {
  if (yhat.empty()) throw std::invalid_argument("fusion_loss_and_grads: empty batch");
  if (yhat.size() != labels.size()) {
    throw std::invalid_argument("fusion_loss_and_grads: batch/label size mismatch");
  }
  fp.zero_grads();
  const std::size_t batch = yhat.size();
  const double inv_batch = 1.0 / static_cast<double>(batch);
  double loss = 0.0;

  for (std::size_t s = 0; s < batch; ++s) {
    Tensor input = head_input(yhat[s], fp);
    Tensor flat;   // classifier input
    Tensor preact; // pre-relu filter outputs, flat (p,q,o) order
    if (fp.has_filters()) {
      const std::size_t p0 = input.extent(0), p1 = input.extent(1);
      const std::size_t c = fp.channels, nk = fp.kernels;
      preact = Tensor({p0 * p1 * nk});
      flat = Tensor({p0 * p1 * nk});
      for (std::size_t pq = 0; pq < p0 * p1; ++pq) {
        const double* cell = input.data() + pq * c;
        for (std::size_t o = 0; o < nk; ++o) {
          double acc = fp.filt_b.value[o];
          const double* w = fp.filt_w.value.data() + o * c;
          for (std::size_t j = 0; j < c; ++j) acc += w[j] * cell[j];
          preact[pq * nk + o] = acc;
          flat[pq * nk + o] = acc > 0.0 ? acc : 0.0;
        }
      }
    } else {
      const std::size_t n = input.size();
      flat = Tensor({n}, std::move(input.values()));
    }
    const Tensor probs = linear_softmax(flat, fp);
    loss += cross_entropy(probs, labels[s]);

    Tensor dlogits = softmax_backward(probs, cross_entropy_backward(probs, labels[s]));
    for (std::size_t i = 0; i < dlogits.size(); ++i) dlogits[i] *= inv_batch;
    for (std::size_t r = 0; r < fp.classes; ++r) {
      const double dv = dlogits[r];
      double* gw = fp.cls_w.grad.data() + r * fp.flat_dim;
      for (std::size_t j = 0; j < fp.flat_dim; ++j) gw[j] += dv * flat[j];
      fp.cls_b.grad[r] += dv;
    }
    if (fp.has_filters()) {
      // dflat = cls_w^T dlogits, gated by relu, into filter grads.
      const std::size_t c = fp.channels, nk = fp.kernels;
      const std::size_t cells = fp.positions;
      const Tensor& head_in = input;  // still valid: filters branch did not move it
      for (std::size_t pq = 0; pq < cells; ++pq) {
        const double* cell = head_in.data() + pq * c;
        for (std::size_t o = 0; o < nk; ++o) {
          if (preact[pq * nk + o] <= 0.0) continue;
          double dflat = 0.0;
          for (std::size_t r = 0; r < fp.classes; ++r) {
            dflat += dlogits[r] * fp.cls_w.value(r, pq * nk + o);
          }
          fp.filt_b.grad[o] += dflat;
          double* gw = fp.filt_w.grad.data() + o * c;
          for (std::size_t j = 0; j < c; ++j) gw[j] += dflat * cell[j];
        }
      }
    }
  }
  return loss * inv_batch;
}

}  // namespace c2af
