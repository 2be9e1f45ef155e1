#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "c2af/config.hpp"
#include "c2af/dataset.hpp"
#include "c2af/encoder.hpp"
#include "c2af/fusion.hpp"

namespace c2af {

struct TrainConfig {
  std::size_t steps = 2000;        // S
  std::size_t warmup_steps = 400;  // S0; config default is steps / 5
  std::size_t batch_size = 32;
  double lr = 1e-4;
  std::uint64_t seed = 1;
  std::size_t d_global = 64;
  std::vector<std::size_t> conv_channels{64, 128, 64};
  std::vector<std::size_t> conv_kernels{7, 5, 3};
  std::size_t n_kernels = 8;  // N_k
  std::size_t eval_interval = 100;
  double test_fraction = 1.0 / 6.0;  // held-out share of the container
  FusionMode fusion_mode = FusionMode::kComplete;

  void validate() const;
  // Stable "key = value" rendering of every field; fingerprint() hashes it.
  std::string canonical_text() const;
  std::uint64_t fingerprint() const;

  // Reads the documented schema; unknown keys are rejected. warmup_steps
  // defaults to steps / 5 when absent.
  static TrainConfig from_config(const KeyValueConfig& kv);
};

std::uint64_t fnv1a64(const std::string& s);

// All learnable state plus the input standardization fitted at train time.
struct Model {
  std::vector<ViewEncoderParams> views;
  FusionParams fusion;
  Standardizer norm;
  std::size_t num_classes = 0;
  std::size_t seq_len = 0;
  std::vector<std::size_t> view_dims;

  std::size_t num_views() const { return views.size(); }
  std::vector<Param*> view_params(std::size_t v) { return views[v].params(); }
  std::vector<Param*> fusion_params() { return fusion.params(); }
  std::vector<Param*> all_params();
};

// Fresh model with the documented initialization: weight matrices uniform
// in +-1/sqrt(fan-in), biases and attention logits zero, BN gamma=1 beta=0.
Model make_model(const MultiViewDataset& ds, const TrainConfig& cfg);

// Infer-mode per-view probabilities for one standardized sample.
std::vector<Tensor> view_probabilities(Model& model,
                                       const std::vector<Tensor>& sample);

struct SplitIndices {
  std::vector<std::size_t> train, test;
};

// Deterministic shuffled split; same (n, fraction, seed) always gives the
// same partition.
SplitIndices split_dataset(std::size_t n, double test_fraction, std::uint64_t seed);

struct Checkpoint {
  Model model;
  std::vector<AdamState> view_opt;
  AdamState fusion_opt;
  std::size_t step = 0;
  TrainConfig config;                  // run configuration, fully recoverable
  std::uint64_t config_fingerprint = 0;
  std::size_t dataset_size = 0;  // container size seen at train time
};

// Same header conventions as the dataset container (record type 1); payload
// is named little-endian float64 blobs covering params, BN running stats,
// normalization stats, optimizer moments and run metadata.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// The held-out indices a checkpoint was validated on: recomputed when the
// container has the recorded size, otherwise every sample is evaluated.
std::vector<std::size_t> eval_indices_for(const Checkpoint& ckpt,
                                          const MultiViewDataset& ds);

struct TrainResult {
  Checkpoint best;
  std::string metric_log;
  double best_fused_accuracy = 0.0;
  std::size_t best_step = 0;
};

struct SplitEval {
  std::vector<double> view_accuracy;
  double fused_accuracy = 0.0;
};

// Drives the alternating schedule: batches are shared by all V view steps
// and the fusion step of one iteration; the first warmup_steps iterations
// skip the fusion step. Exposed stepwise so tests can instrument parameter
// isolation between updates.
class Trainer {
 public:
  Trainer(const MultiViewDataset& raw, const TrainConfig& cfg);

  TrainResult run();

  std::vector<std::size_t> next_batch();
  double train_step_view(const std::vector<std::size_t>& batch, std::size_t v);
  double train_step_fusion(const std::vector<std::size_t>& batch);

  Model& model() { return model_; }
  const TrainConfig& config() const { return cfg_; }
  const SplitIndices& split() const { return split_; }
  const MultiViewDataset& data() const { return data_; }
  std::vector<AdamState>& view_opt() { return view_opt_; }
  AdamState& fusion_opt() { return fusion_opt_; }

  SplitEval evaluate_on(const std::vector<std::size_t>& indices);
  Checkpoint snapshot(std::size_t step) const;

 private:
  TrainConfig cfg_;
  MultiViewDataset data_;  // standardized copy
  SplitIndices split_;
  Model model_;
  std::vector<AdamState> view_opt_;
  AdamState fusion_opt_;
  Rng batch_rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

TrainResult train_loop(const MultiViewDataset& raw, const TrainConfig& cfg);

// Trains several fusion heads against one shared encoder trajectory. View
// steps never depend on the fusion head (stop-gradient plus separate random
// streams), so every head sees exactly the run it would see in a solo
// train_loop with its mode; results are bit-identical to solo runs. Used to
// evaluate ablation grids at roughly the cost of a single run.
class MultiHeadTrainer {
 public:
  struct HeadResult {
    FusionMode mode;
    Checkpoint best;
    std::string metric_log;
    double best_fused_accuracy = 0.0;
    std::size_t best_step = 0;
  };

  MultiHeadTrainer(const MultiViewDataset& raw, const TrainConfig& cfg,
                   const std::vector<FusionMode>& modes);
  std::vector<HeadResult> run();

 private:
  TrainConfig cfg_;
  MultiViewDataset data_;
  SplitIndices split_;
  Model views_;  // fusion member unused; heads_ carry the heads
  std::vector<FusionParams> heads_;
  std::vector<AdamState> view_opt_;
  std::vector<AdamState> head_opt_;
  Rng batch_rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;

  std::vector<std::size_t> next_batch();
};

std::string format_double(double v);  // deterministic %.17g rendering

}  // namespace c2af
