#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "c2af/rng.hpp"
#include "c2af/tensor.hpp"

namespace c2af {

// N samples, each carrying V time-aligned series (T x D^v) and one label.
struct MultiViewDataset {
  std::size_t num_views = 0;
  std::size_t num_classes = 0;
  std::size_t seq_len = 0;
  std::vector<std::size_t> view_dims;
  std::vector<std::vector<Tensor>> samples;  // [sample][view]
  std::vector<std::size_t> labels;

  std::size_t size() const { return labels.size(); }
  void validate() const;
};

// Cut-or-repeat alignment: longer series keep their first target_len frames,
// shorter ones repeat cyclically from the start. Idempotent.
Tensor align_length(const Tensor& series, std::size_t target_len);

class ContainerError : public std::runtime_error {
 public:
  enum class Kind {
    kIo,
    kBadMagic,
    kVersionMismatch,
    kTruncated,
    kLabelOutOfRange,
    kMalformed,
  };
  ContainerError(Kind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Binary container, little-endian throughout:
//   "C2AF" | u32 version=1 | u32 record_type=0 | u32 V,N,T,K | V x u32 dims
//   | N x u32 labels | per view: N*T*D^v f32 values in [sample][time][feature]
// Values are stored in 32-bit precision and widened to 64-bit on load.
void save_container(const MultiViewDataset& ds, const std::string& path);
MultiViewDataset load_container(const std::string& path);

struct SynthConfig {
  std::size_t classes = 6;
  std::size_t views = 3;
  std::size_t samples = 3600;
  std::size_t length = 32;
  std::vector<std::size_t> dims;  // per view; empty means 8 per view
  double noise = 0.35;
  // confusions[v] lists class pairs view v cannot tell apart (their
  // signatures are made identical in that view).
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> confusions;
  std::uint64_t seed = 1;

  std::vector<std::size_t> effective_dims() const;
  void validate() const;
};

// Noise-free class templates per view: a fixed three-sinusoid mixture per
// feature. Signatures depend only on (view, class, T, D^v), never on the
// sample seed, so train/test containers generated with different seeds share
// them. Classes confused in a view are mapped to the signature of the lowest
// class index in their confusion group.
std::vector<std::vector<Tensor>> synth_signatures(const SynthConfig& cfg);

// Lowest-index representative of each class under a view's confusion groups
// (transitively closed), indexed [view][class].
std::vector<std::vector<std::size_t>> confusion_representatives(const SynthConfig& cfg);

// Labels are assigned round-robin (sample i gets class i mod K); Gaussian
// noise with scale cfg.noise comes from the Box-Muller stream of cfg.seed.
MultiViewDataset synth_generate(const SynthConfig& cfg);

// Reference classifier: nearest signature by summed squared distance over
// the chosen views, ties broken by lowest class index.
std::size_t nearest_signature_predict(const std::vector<Tensor>& sample_views,
                                      const std::vector<std::vector<Tensor>>& signatures,
                                      const std::vector<std::size_t>& view_subset);
double nearest_signature_accuracy(const MultiViewDataset& ds, const SynthConfig& cfg,
                                  const std::vector<std::size_t>& view_subset);

// Early-fusion transform: per-frame concatenation of all views, in view
// order, giving a single-view dataset with D = sum of D^v.
MultiViewDataset feature_concat(const MultiViewDataset& ds);

// Per-feature zero-mean/unit-variance transform fit on a subset of samples
// (the training split) and applied everywhere.
struct Standardizer {
  std::vector<Tensor> mean;    // per view, length D^v
  std::vector<Tensor> stddev;  // per view, length D^v (floored at 1e-8)

  static Standardizer fit(const MultiViewDataset& ds,
                          const std::vector<std::size_t>& indices);
  void apply(MultiViewDataset& ds) const;
  Tensor apply_view(const Tensor& x, std::size_t view) const;
  bool empty() const { return mean.empty(); }
};

// Text form of the confusion design, e.g. "0-1,2-3;2-4,3-5;0-5,1-4" (one
// ';'-separated segment per view, each a comma list of a-b pairs; a segment
// may be empty). The empty string means no confusions anywhere.
std::vector<std::vector<std::pair<std::size_t, std::size_t>>> parse_confusion_spec(
    const std::string& spec, std::size_t views);
std::string format_confusion_spec(
    const std::vector<std::vector<std::pair<std::size_t, std::size_t>>>& confusions);

}  // namespace c2af
