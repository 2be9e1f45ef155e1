#pragma once

#include <cstdint>
#include <vector>

#include "c2af/adam.hpp"
#include "c2af/ops.hpp"
#include "c2af/rng.hpp"

namespace c2af {

enum class Mode { kTrain, kInfer };

inline constexpr double kBnEps = 1e-5;
inline constexpr double kBnMomentum = 0.9;

struct LstmParams {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  Param w_f, w_i, w_o, w_c;  // hidden x input
  Param u_f, u_i, u_o, u_c;  // hidden x hidden
  Param b_f, b_i, b_o, b_c;  // hidden

  std::vector<Param*> params();
};

// Attention over time is parameterized as logits; the effective weights are
// softmax(logits), so pooling is always a convex combination.
struct AttentionParams {
  Param logits;  // length T

  Tensor weights() const { return softmax(logits.value); }
  std::vector<Param*> params() { return {&logits}; }
};

struct TcnLayerParams {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  Param w;            // out x in x kernel
  Param b;            // out
  Param gamma, beta;  // out
  Tensor running_mean, running_var;  // out; inference statistics

  std::vector<Param*> params() { return {&w, &b, &gamma, &beta}; }
};

struct ViewEncoderParams {
  std::size_t seq_len = 0;
  std::size_t num_classes = 0;
  LstmParams lstm;
  AttentionParams attention;
  std::vector<TcnLayerParams> tcn;
  Param cls_w;  // K x (d_global + D_M)
  Param cls_b;  // K

  std::size_t d_global() const { return lstm.hidden_dim; }
  std::size_t d_local() const { return tcn.back().out_channels; }
  std::size_t feature_dim() const { return d_global() + d_local(); }

  // Stable order: lstm, attention, tcn layers, classifier. Initialization,
  // optimizer registration and checkpoints all follow it.
  std::vector<Param*> params();

  void zero_grads();
};

ViewEncoderParams make_view_encoder(std::size_t input_dim, std::size_t seq_len,
                                    std::size_t num_classes, std::size_t d_global,
                                    const std::vector<std::size_t>& conv_channels,
                                    const std::vector<std::size_t>& conv_kernels,
                                    const std::string& name_prefix, Rng& rng);

// ---- single-sample forward ops ----

// Hidden sequence for input x (T x D); h0 = c0 = 0.
Tensor lstm_forward(const Tensor& x, const LstmParams& p);

// H_g = sum_t softmax(logits)_t * h_t.
Tensor attention_pool(const Tensor& hseq, const AttentionParams& a);

// Valid 1-D convolution, stride 1 (pre-activation): out T-k+1 x out_channels.
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b);

// conv -> relu -> batch norm, in that order. Train mode normalizes with the
// statistics of the incoming batch (here: this one sample, over its time
// axis) and updates the running statistics; infer mode uses running stats.
Tensor conv1d_block(const Tensor& x, TcnLayerParams& layer, Mode mode);

// Per-channel mean over the time axis.
Tensor global_avg_pool(const Tensor& f);

// concat(H_g, H_l), global stream first.
Tensor encode_view(const Tensor& x, ViewEncoderParams& p, Mode mode);

// softmax(W h + b).
Tensor classify_view(const Tensor& h, const ViewEncoderParams& p);

// ---- batched training path ----
// Train-mode batch norm couples a mini-batch, so the loss/grad entry points
// take the whole batch at once.

std::vector<Tensor> view_forward_batch(const std::vector<const Tensor*>& batch_x,
                                       ViewEncoderParams& p, Mode mode,
                                       bool update_running_stats);

// Mean cross-entropy over the batch, forward only (train-mode statistics,
// running stats untouched). Used by the finite-difference checks.
double view_batch_loss(const std::vector<const Tensor*>& batch_x,
                       const std::vector<std::size_t>& labels,
                       ViewEncoderParams& p);

struct ViewBatchResult {
  double loss = 0.0;
  std::vector<Tensor> probs;  // per-sample class probabilities
};

// Forward + backward over a mini-batch. Gradients are mean-reduced and
// written into p (previous contents cleared).
ViewBatchResult view_loss_and_grads(const std::vector<const Tensor*>& batch_x,
                                    const std::vector<std::size_t>& labels,
                                    ViewEncoderParams& p,
                                    bool update_running_stats = true);

}  // namespace c2af
