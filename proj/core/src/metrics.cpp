#include "c2af/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <future>
#include <stdexcept>

#include <json.hpp>

namespace c2af {

namespace {
using ordered_json = nlohmann::ordered_json;

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}
}  // namespace

std::size_t argmax_class(const Tensor& scores) {
  if (scores.size() == 0) throw std::invalid_argument("argmax: empty input");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;  // strict: ties keep lowest index
  }
  return best;
}

double accuracy(const std::vector<std::size_t>& preds,
                const std::vector<std::size_t>& labels) {
  if (preds.size() != labels.size()) {
    throw std::invalid_argument("accuracy: length mismatch");
  }
  if (preds.empty()) throw std::invalid_argument("accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

std::int64_t ConfusionMatrix::total() const {
  std::int64_t t = 0;
  for (std::int64_t c : counts) t += c;
  return t;
}

std::int64_t ConfusionMatrix::trace() const {
  std::int64_t t = 0;
  for (std::size_t i = 0; i < classes; ++i) t += at(i, i);
  return t;
}

ConfusionMatrix confusion(const std::vector<std::size_t>& preds,
                          const std::vector<std::size_t>& labels, std::size_t classes) {
  if (preds.size() != labels.size()) {
    throw std::invalid_argument("confusion: length mismatch");
  }
  ConfusionMatrix m(classes);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (labels[i] >= classes || preds[i] >= classes) {
      throw std::out_of_range("confusion: class out of range at " + std::to_string(i));
    }
    ++m.at(labels[i], preds[i]);
  }
  return m;
}

Tensor late_fuse_average(const std::vector<Tensor>& yhat) {
  if (yhat.empty()) throw std::invalid_argument("late_fuse_average: no views");
  Tensor out(yhat[0].shape());
  for (const Tensor& y : yhat) {
    if (!y.same_shape(out)) throw std::invalid_argument("late fusion: K mismatch");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] /= static_cast<double>(yhat.size());
  }
  return out;
}

Tensor late_fuse_max(const std::vector<Tensor>& yhat) {
  if (yhat.empty()) throw std::invalid_argument("late_fuse_max: no views");
  Tensor out = yhat[0];
  for (std::size_t v = 1; v < yhat.size(); ++v) {
    if (!yhat[v].same_shape(out)) throw std::invalid_argument("late fusion: K mismatch");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(out[i], yhat[v][i]);
  }
  return out;
}

LateFusionMode parse_late_fusion_mode(const std::string& name) {
  if (name == "concat") return LateFusionMode::kConcat;
  if (name == "average") return LateFusionMode::kAverage;
  if (name == "max") return LateFusionMode::kMax;
  throw std::invalid_argument("unknown late fusion mode: " + name);
}

const char* to_string(LateFusionMode mode) {
  switch (mode) {
    case LateFusionMode::kConcat: return "concat";
    case LateFusionMode::kAverage: return "average";
    case LateFusionMode::kMax: return "max";
  }
  return "?";
}

Tensor late_fusion_baseline(const std::vector<Tensor>& yhat, LateFusionMode mode,
                            const FusionParams* concat_head) {
  switch (mode) {
    case LateFusionMode::kAverage: return late_fuse_average(yhat);
    case LateFusionMode::kMax: return late_fuse_max(yhat);
    case LateFusionMode::kConcat:
      if (!concat_head || concat_head->mode != FusionMode::kLabelConcat) {
        throw std::invalid_argument("late_fusion_baseline: concat needs a trained head");
      }
      return fusion_predict(yhat, *concat_head);
  }
  throw std::logic_error("late_fusion_baseline: unreachable");
}

ReportFormat parse_report_format(const std::string& name) {
  if (name == "json") return ReportFormat::kJson;
  if (name == "csv") return ReportFormat::kCsv;
  throw std::invalid_argument("unknown report format: " + name);
}

namespace {

ordered_json confusion_json(const ConfusionMatrix& m) {
  ordered_json rows = ordered_json::array();
  for (std::size_t i = 0; i < m.classes; ++i) {
    ordered_json row = ordered_json::array();
    for (std::size_t j = 0; j < m.classes; ++j) row.push_back(m.at(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

void confusion_csv(std::string& out, const std::string& name, const ConfusionMatrix& m) {
  out += name + "\n";
  for (std::size_t i = 0; i < m.classes; ++i) {
    for (std::size_t j = 0; j < m.classes; ++j) {
      if (j) out += ",";
      out += std::to_string(m.at(i, j));
    }
    out += "\n";
  }
}

}  // namespace

std::string render_report(const EvalReport& report, ReportFormat format) {
  if (format == ReportFormat::kJson) {
    ordered_json j;
    j["mode"] = report.fusion_tag;
    j["seed"] = report.seed;
    j["step"] = report.step;
    j["config_fingerprint"] = hex64(report.config_fingerprint);
    j["view_accuracy"] = report.view_accuracy;
    j["fused_accuracy"] = report.fused_accuracy;
    ordered_json vc = ordered_json::array();
    for (const ConfusionMatrix& m : report.view_confusion) {
      vc.push_back(confusion_json(m));
    }
    j["view_confusion"] = std::move(vc);
    j["fused_confusion"] = confusion_json(report.fused_confusion);
    return j.dump(2) + "\n";
  }
  std::string out = "metric,value\n";
  out += "mode," + report.fusion_tag + "\n";
  out += "seed," + std::to_string(report.seed) + "\n";
  out += "step," + std::to_string(report.step) + "\n";
  out += "config_fingerprint," + hex64(report.config_fingerprint) + "\n";
  for (std::size_t v = 0; v < report.view_accuracy.size(); ++v) {
    out += "view" + std::to_string(v) + "_accuracy," +
           format_double(report.view_accuracy[v]) + "\n";
  }
  out += "fused_accuracy," + format_double(report.fused_accuracy) + "\n";
  confusion_csv(out, "confusion_fused", report.fused_confusion);
  for (std::size_t v = 0; v < report.view_confusion.size(); ++v) {
    confusion_csv(out, "confusion_view" + std::to_string(v), report.view_confusion[v]);
  }
  return out;
}

void emit_report(const EvalReport& report, const std::string& path,
                 ReportFormat format) {
  const std::string text = render_report(report, format);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("report: cannot open " + path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("report: write failed: " + path);
}

EvalReport evaluate_with_fuser(Model& model, const MultiViewDataset& raw,
                               const std::vector<std::size_t>& indices,
                               const FuseFn& fuse, const std::string& tag,
                               std::uint64_t config_fingerprint, std::uint64_t seed,
                               std::size_t step) {
  if (indices.empty()) throw std::invalid_argument("evaluate: no samples");
  const std::size_t nviews = model.num_views();
  std::vector<std::vector<std::size_t>> view_preds(nviews);
  std::vector<std::size_t> fused_preds, labels;
  for (std::size_t i : indices) {
    std::vector<Tensor> sample(nviews);
    for (std::size_t v = 0; v < nviews; ++v) {
      sample[v] = model.norm.empty() ? raw.samples[i][v]
                                     : model.norm.apply_view(raw.samples[i][v], v);
    }
    const std::vector<Tensor> yhat = view_probabilities(model, sample);
    for (std::size_t v = 0; v < nviews; ++v) {
      view_preds[v].push_back(argmax_class(yhat[v]));
    }
    fused_preds.push_back(argmax_class(fuse(yhat)));
    labels.push_back(raw.labels[i]);
  }
  EvalReport report;
  report.fusion_tag = tag;
  report.config_fingerprint = config_fingerprint;
  report.seed = seed;
  report.step = step;
  for (std::size_t v = 0; v < nviews; ++v) {
    report.view_accuracy.push_back(accuracy(view_preds[v], labels));
    report.view_confusion.push_back(confusion(view_preds[v], labels, raw.num_classes));
  }
  report.fused_accuracy = accuracy(fused_preds, labels);
  report.fused_confusion = confusion(fused_preds, labels, raw.num_classes);
  return report;
}

EvalReport evaluate_model(Model& model, const MultiViewDataset& raw,
                          const std::vector<std::size_t>& indices,
                          std::uint64_t config_fingerprint, std::uint64_t seed,
                          std::size_t step) {
  return evaluate_with_fuser(
      model, raw, indices,
      [&model](const std::vector<Tensor>& yhat) {
        return fusion_predict(yhat, model.fusion);
      },
      to_string(model.fusion.mode), config_fingerprint, seed, step);
}

FusionParams train_concat_head(const Checkpoint& ckpt, const MultiViewDataset& raw) {
  const TrainConfig& cfg = ckpt.config;
  Model model = ckpt.model;
  const SplitIndices split =
      split_dataset(raw.size(), cfg.test_fraction, cfg.seed);
  if (split.train.empty()) throw std::invalid_argument("concat head: empty train split");

  // Frozen encoders: per-sample predictions are fixed, compute them once.
  std::vector<std::vector<Tensor>> yhat(split.train.size());
  std::vector<std::size_t> labels(split.train.size());
  for (std::size_t i = 0; i < split.train.size(); ++i) {
    const std::size_t idx = split.train[i];
    std::vector<Tensor> sample(model.num_views());
    for (std::size_t v = 0; v < model.num_views(); ++v) {
      sample[v] = model.norm.empty() ? raw.samples[idx][v]
                                     : model.norm.apply_view(raw.samples[idx][v], v);
    }
    yhat[i] = view_probabilities(model, sample);
    labels[i] = raw.labels[idx];
  }

  Rng init = Rng::stream(cfg.seed, 0xC04CA7ull);
  FusionParams head = make_fusion_params(FusionMode::kLabelConcat, model.num_views(),
                                         model.num_classes, cfg.n_kernels,
                                         "baseline_concat", init);
  AdamState opt_state(head.params());
  AdamConfig opt;
  opt.lr = cfg.lr;

  const std::size_t fusion_steps = cfg.steps - cfg.warmup_steps;
  Rng batch_rng = Rng::stream(cfg.seed, 0xBA7C5ull);
  std::vector<std::size_t> order(split.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  batch_rng.shuffle(order);
  std::size_t cursor = 0;
  for (std::size_t step = 0; step < fusion_steps; ++step) {
    if (cursor >= order.size()) {
      batch_rng.shuffle(order);
      cursor = 0;
    }
    const std::size_t take = std::min(cfg.batch_size, order.size() - cursor);
    std::vector<std::vector<Tensor>> batch_yhat(take);
    std::vector<std::size_t> batch_labels(take);
    for (std::size_t i = 0; i < take; ++i) {
      batch_yhat[i] = yhat[order[cursor + i]];
      batch_labels[i] = labels[order[cursor + i]];
    }
    cursor += take;
    fusion_loss_and_grads(batch_yhat, batch_labels, head);
    adam_step(head.params(), opt_state, opt);
  }
  return head;
}

EvalReport ablation_run(const MultiViewDataset& raw, TrainConfig cfg, FusionMode mode) {
  if (mode == FusionMode::kLabelConcat) {
    throw std::invalid_argument("ablation_run: invalid mode label_concat");
  }
  cfg.fusion_mode = mode;
  TrainResult tr = train_loop(raw, cfg);
  const std::vector<std::size_t> test = eval_indices_for(tr.best, raw);
  return evaluate_model(tr.best.model, raw, test, tr.best.config_fingerprint,
                        cfg.seed, tr.best.step);
}

AblationSummary ablate(const MultiViewDataset& raw, const TrainConfig& base,
                       const std::vector<FusionMode>& modes,
                       const std::vector<std::uint64_t>& seeds,
                       std::size_t max_parallel) {
  if (modes.empty() || seeds.empty()) {
    throw std::invalid_argument("ablate: need at least one mode and one seed");
  }
  struct Job {
    FusionMode mode;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (FusionMode m : modes) {
    for (std::uint64_t s : seeds) jobs.push_back({m, s});
  }
  std::vector<EvalReport> reports(jobs.size());
  const std::size_t workers = std::max<std::size_t>(1, max_parallel);
  for (std::size_t start = 0; start < jobs.size(); start += workers) {
    const std::size_t stop = std::min(jobs.size(), start + workers);
    std::vector<std::future<EvalReport>> futures;
    for (std::size_t i = start; i < stop; ++i) {
      futures.push_back(std::async(std::launch::async, [&raw, &base, &jobs, i]() {
        TrainConfig cfg = base;
        cfg.seed = jobs[i].seed;
        return ablation_run(raw, cfg, jobs[i].mode);
      }));
    }
    for (std::size_t i = start; i < stop; ++i) {
      reports[i] = futures[i - start].get();
    }
  }
  AblationSummary summary;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    summary.runs.push_back({jobs[i].mode, jobs[i].seed, std::move(reports[i])});
  }
  for (FusionMode m : modes) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& run : summary.runs) {
      if (run.mode == m) {
        sum += run.report.fused_accuracy;
        ++n;
      }
    }
    summary.mode_means.emplace_back(m, sum / static_cast<double>(n));
  }
  return summary;
}

std::string render_ablation_json(const AblationSummary& summary) {
  ordered_json j;
  ordered_json runs = ordered_json::array();
  for (const auto& run : summary.runs) {
    ordered_json r;
    r["mode"] = to_string(run.mode);
    r["seed"] = run.seed;
    r["fused_accuracy"] = run.report.fused_accuracy;
    r["view_accuracy"] = run.report.view_accuracy;
    r["step"] = run.report.step;
    r["config_fingerprint"] = hex64(run.report.config_fingerprint);
    runs.push_back(std::move(r));
  }
  j["runs"] = std::move(runs);
  ordered_json means;
  for (const auto& [mode, mean] : summary.mode_means) {
    means[to_string(mode)] = mean;
  }
  j["mode_mean_fused_accuracy"] = std::move(means);
  return j.dump(2) + "\n";
}

void emit_ablation_report(const AblationSummary& summary, const std::string& path) {
  const std::string text = render_ablation_json(summary);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("report: cannot open " + path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("report: write failed: " + path);
}

}  // namespace c2af
