#include "c2af/netcheck.hpp"

#include <algorithm>

#include "c2af/encoder.hpp"
#include "c2af/fusion.hpp"

namespace c2af {

NetworkGradCheck run_network_gradcheck(std::uint64_t seed, double eps,
                                       std::size_t coords_per_tensor) {
  constexpr std::size_t kViews = 3, kClasses = 4, kSeqLen = 8, kFeatures = 3;
  constexpr std::size_t kHidden = 4, kKernels = 2, kBatch = 6;
  const std::vector<std::size_t> conv_channels{4, 4};
  const std::vector<std::size_t> conv_kernels{3, 3};

  Rng rng = Rng::stream(seed, 0x6C4DC4Eull);
  std::vector<ViewEncoderParams> views;
  for (std::size_t v = 0; v < kViews; ++v) {
    views.push_back(make_view_encoder(kFeatures, kSeqLen, kClasses, kHidden,
                                      conv_channels, conv_kernels,
                                      "view" + std::to_string(v), rng));
    // Nudge attention away from the uniform initialization so its gradient
    // path is exercised at a generic point.
    for (std::size_t t = 0; t < kSeqLen; ++t) {
      views.back().attention.logits.value[t] = rng.uniform(-0.5, 0.5);
    }
  }
  FusionParams fusion = make_fusion_params(FusionMode::kComplete, kViews, kClasses,
                                           kKernels, "fusion", rng);

  std::vector<std::vector<Tensor>> inputs(kViews);
  std::vector<std::size_t> labels(kBatch);
  for (std::size_t s = 0; s < kBatch; ++s) labels[s] = s % kClasses;
  for (std::size_t v = 0; v < kViews; ++v) {
    for (std::size_t s = 0; s < kBatch; ++s) {
      Tensor x({kSeqLen, kFeatures});
      for (std::size_t j = 0; j < x.size(); ++j) x[j] = rng.normal();
      inputs[v].push_back(std::move(x));
    }
  }

  NetworkGradCheck result;
  for (std::size_t v = 0; v < kViews; ++v) {
    std::vector<const Tensor*> xs;
    for (const Tensor& x : inputs[v]) xs.push_back(&x);
    view_loss_and_grads(xs, labels, views[v], /*update_running_stats=*/false);
    auto loss_fn = [&xs, &labels, &views, v]() {
      return view_batch_loss(xs, labels, views[v]);
    };
    GradCheckReport report = finite_diff_check(loss_fn, views[v].params(), eps,
                                               coords_per_tensor, seed + v);
    result.max_rel_err = std::max(result.max_rel_err, report.max_rel_err);
    result.groups.push_back({"view" + std::to_string(v), std::move(report)});
  }

  // The fusion loss stops at the per-view predictions, so they are computed
  // once and held fixed while fusion params are perturbed.
  std::vector<std::vector<Tensor>> yhat(kBatch, std::vector<Tensor>(kViews));
  for (std::size_t v = 0; v < kViews; ++v) {
    std::vector<const Tensor*> xs;
    for (const Tensor& x : inputs[v]) xs.push_back(&x);
    std::vector<Tensor> probs = view_forward_batch(xs, views[v], Mode::kTrain,
                                                   /*update_running_stats=*/false);
    for (std::size_t s = 0; s < kBatch; ++s) yhat[s][v] = std::move(probs[s]);
  }
  fusion_loss_and_grads(yhat, labels, fusion);
  auto loss_fn = [&yhat, &labels, &fusion]() {
    return fusion_batch_loss(yhat, labels, fusion);
  };
  GradCheckReport report = finite_diff_check(loss_fn, fusion.params(), eps,
                                             coords_per_tensor, seed + kViews);
  result.max_rel_err = std::max(result.max_rel_err, report.max_rel_err);
  result.groups.push_back({"fusion", std::move(report)});
  return result;
}

}  // namespace c2af
