#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "c2af/train.hpp"

namespace c2af {

// Argmax with ties resolved to the lowest class index; the one rule used by
// accuracy, confusion counting and every fusion baseline.
std::size_t argmax_class(const Tensor& scores);

double accuracy(const std::vector<std::size_t>& preds,
                const std::vector<std::size_t>& labels);

struct ConfusionMatrix {
  std::size_t classes = 0;
  std::vector<std::int64_t> counts;  // row: true class, column: prediction

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t k) : classes(k), counts(k * k, 0) {}
  std::int64_t& at(std::size_t i, std::size_t j) { return counts[i * classes + j]; }
  std::int64_t at(std::size_t i, std::size_t j) const { return counts[i * classes + j]; }
  std::int64_t total() const;
  std::int64_t trace() const;
};

ConfusionMatrix confusion(const std::vector<std::size_t>& preds,
                          const std::vector<std::size_t>& labels, std::size_t classes);

// Element-wise fusion of per-view probability vectors.
Tensor late_fuse_average(const std::vector<Tensor>& yhat);
Tensor late_fuse_max(const std::vector<Tensor>& yhat);

enum class LateFusionMode { kConcat, kAverage, kMax };
LateFusionMode parse_late_fusion_mode(const std::string& name);
const char* to_string(LateFusionMode mode);

// Fused scores for one sample. kConcat needs the trained concat head.
Tensor late_fusion_baseline(const std::vector<Tensor>& yhat, LateFusionMode mode,
                            const FusionParams* concat_head = nullptr);

struct EvalReport {
  std::string fusion_tag = "complete";  // which head produced the fused row
  std::uint64_t config_fingerprint = 0;
  std::uint64_t seed = 0;
  std::size_t step = 0;
  std::vector<double> view_accuracy;
  double fused_accuracy = 0.0;
  std::vector<ConfusionMatrix> view_confusion;
  ConfusionMatrix fused_confusion;
};

enum class ReportFormat { kJson, kCsv };
ReportFormat parse_report_format(const std::string& name);

// Stable-key, full-precision rendering; identical reports give identical
// bytes.
std::string render_report(const EvalReport& report, ReportFormat format);
void emit_report(const EvalReport& report, const std::string& path,
                 ReportFormat format);

using FuseFn = std::function<Tensor(const std::vector<Tensor>&)>;

// Evaluates raw (unstandardized) samples at the given indices; the model's
// stored normalization is applied on the fly.
EvalReport evaluate_model(Model& model, const MultiViewDataset& raw,
                          const std::vector<std::size_t>& indices,
                          std::uint64_t config_fingerprint, std::uint64_t seed,
                          std::size_t step);
EvalReport evaluate_with_fuser(Model& model, const MultiViewDataset& raw,
                               const std::vector<std::size_t>& indices,
                               const FuseFn& fuse, const std::string& tag,
                               std::uint64_t config_fingerprint, std::uint64_t seed,
                               std::size_t step);

// Trains the Label-Concat head on the checkpoint's train split with the
// fusion-phase schedule (steps - warmup_steps Adam updates, same batching
// stream), encoders frozen.
FusionParams train_concat_head(const Checkpoint& ckpt, const MultiViewDataset& raw);

// One ablation cell: train with the head restricted to `mode`, evaluate the
// best checkpoint on the held-out split.
EvalReport ablation_run(const MultiViewDataset& raw, TrainConfig cfg, FusionMode mode);

struct AblationSummary {
  struct Run {
    FusionMode mode;
    std::uint64_t seed;
    EvalReport report;
  };
  std::vector<Run> runs;
  std::vector<std::pair<FusionMode, double>> mode_means;  // mean fused accuracy
};

// Full grid; runs are independent and may execute on up to max_parallel
// threads (results are identical either way).
AblationSummary ablate(const MultiViewDataset& raw, const TrainConfig& base,
                       const std::vector<FusionMode>& modes,
                       const std::vector<std::uint64_t>& seeds,
                       std::size_t max_parallel = 2);

std::string render_ablation_json(const AblationSummary& summary);
void emit_ablation_report(const AblationSummary& summary, const std::string& path);

}  // namespace c2af
