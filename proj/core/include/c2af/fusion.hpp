#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "c2af/adam.hpp"
#include "c2af/rng.hpp"

namespace c2af {

// K x K x C stack of label-correlation matrices. Channel order is fixed:
// intra channels (0,0)..(V-1,V-1) first, then inter pairs (u,w) with u < w
// in lexicographic order.
struct CorrelationTensor {
  Tensor values;  // K x K x C
  std::vector<std::pair<std::size_t, std::size_t>> channels;

  std::size_t num_channels() const { return channels.size(); }
};

inline std::size_t correlation_channel_count(std::size_t views) {
  return views + views * (views - 1) / 2;
}

// Outer product of a probability vector with itself.
Tensor intra_matrix(const Tensor& y);
// Outer product of two different views' probability vectors (u < w by
// convention at the call site).
Tensor inter_matrix(const Tensor& yu, const Tensor& yw);
// Full stack: V intra channels then the V(V-1)/2 inter channels.
CorrelationTensor stack_correlations(const std::vector<Tensor>& yhat);

// Which part of the prediction head is active. The first five values match
// the ablation study; kLabelConcat is the trained late-fusion baseline head.
enum class FusionMode {
  kComplete,
  kIntraOnly,
  kInterOnly,
  kFusionOnly,
  kNoChannelFusion,
  kLabelConcat,
};

const char* to_string(FusionMode mode);
FusionMode parse_fusion_mode(const std::string& name);

// Channel subset for the given mode (complete/intra/inter).
CorrelationTensor correlation_stack(const std::vector<Tensor>& yhat, FusionMode mode);

struct FusionParams {
  FusionMode mode = FusionMode::kComplete;
  std::size_t views = 0;
  std::size_t classes = 0;
  std::size_t kernels = 0;    // N_k
  std::size_t channels = 0;   // C entering the 1x1 stage (0 when absent)
  std::size_t positions = 0;  // spatial positions seen by the 1x1 stage
  std::size_t flat_dim = 0;   // D_f, classifier input width

  Param filt_w;  // N_k x C
  Param filt_b;  // N_k
  Param cls_w;   // K x D_f
  Param cls_b;   // K

  bool has_filters() const {
    return mode != FusionMode::kNoChannelFusion && mode != FusionMode::kLabelConcat;
  }
  std::vector<Param*> params();
  void zero_grads();
};

FusionParams make_fusion_params(FusionMode mode, std::size_t views,
                                std::size_t classes, std::size_t kernels,
                                const std::string& name_prefix, Rng& rng);

// r_(p,q)^(o) = relu(b^(o) + <W^(o), ct_(p,q,.)>) — per-position channel
// mixing, no spatial coupling.
Tensor channel_fuse(const CorrelationTensor& ct, const FusionParams& fp);

// Flatten r row-major (p, q, o), apply the final linear classifier, softmax.
Tensor final_classify(const Tensor& r, const FusionParams& fp);

// Mode-aware head: per-view probabilities in, fused probabilities out.
Tensor fusion_predict(const std::vector<Tensor>& yhat, const FusionParams& fp);

// Forward only; used by the finite-difference checks.
double fusion_batch_loss(const std::vector<std::vector<Tensor>>& yhat,
                         const std::vector<std::size_t>& labels,
                         const FusionParams& fp);

// Mean cross-entropy of the fused prediction plus gradients for the fusion
// parameters only; nothing flows back into the per-view predictions.
double fusion_loss_and_grads(const std::vector<std::vector<Tensor>>& yhat,
                             const std::vector<std::size_t>& labels,
                             FusionParams& fp);

}  // namespace c2af
