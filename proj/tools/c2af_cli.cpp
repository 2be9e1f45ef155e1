// Command-line front end: synthetic data generation, training, evaluation,
// ablations, late-fusion baselines and the network gradient check.

#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "c2af/dataset.hpp"
#include "c2af/metrics.hpp"
#include "c2af/netcheck.hpp"
#include "c2af/train.hpp"

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

c2af::SynthConfig synth_config_from_kv(const c2af::KeyValueConfig& kv) {
  static const std::vector<std::string> known = {"classes", "views",  "samples",
                                                 "length",  "dims",   "noise",
                                                 "confusions", "seed"};
  for (const std::string& k : kv.keys()) {
    if (std::find(known.begin(), known.end(), k) == known.end()) {
      throw std::runtime_error("synth config: unknown key '" + k + "'");
    }
  }
  c2af::SynthConfig cfg;
  cfg.classes = kv.get_size("classes", cfg.classes);
  cfg.views = kv.get_size("views", cfg.views);
  cfg.samples = kv.get_size("samples", cfg.samples);
  cfg.length = kv.get_size("length", cfg.length);
  cfg.dims = kv.get_size_list("dims", cfg.dims);
  cfg.noise = kv.get_double("noise", cfg.noise);
  cfg.seed = kv.get_u64("seed", cfg.seed);
  const std::string spec = kv.get_string("confusions", "");
  if (!spec.empty()) cfg.confusions = c2af::parse_confusion_spec(spec, cfg.views);
  return cfg;
}

std::vector<std::size_t> parse_size_list(const std::string& s) {
  std::vector<std::size_t> out;
  for (const std::string& item : split_list(s)) out.push_back(std::stoull(item));
  return out;
}

struct SynthFlags {
  c2af::SynthConfig values;
  std::string dims;
  std::string confusions;
  bool has_classes = false, has_views = false, has_samples = false;
  bool has_length = false, has_dims = false, has_noise = false;
  bool has_confusions = false, has_seed = false;
};

int cmd_synth(const std::string& out_path, const std::string& config_path,
              const SynthFlags& flags) {
  c2af::SynthConfig cfg;
  if (!config_path.empty()) {
    cfg = synth_config_from_kv(c2af::KeyValueConfig::parse_file(config_path));
  }
  if (flags.has_classes) cfg.classes = flags.values.classes;
  if (flags.has_views) cfg.views = flags.values.views;
  if (flags.has_samples) cfg.samples = flags.values.samples;
  if (flags.has_length) cfg.length = flags.values.length;
  if (flags.has_dims) cfg.dims = parse_size_list(flags.dims);
  if (flags.has_noise) cfg.noise = flags.values.noise;
  if (flags.has_seed) cfg.seed = flags.values.seed;
  // Parsed last so an overriding --views is already in effect.
  if (flags.has_confusions) {
    cfg.confusions = c2af::parse_confusion_spec(flags.confusions, cfg.views);
  }

  const c2af::MultiViewDataset ds = c2af::synth_generate(cfg);
  c2af::save_container(ds, out_path);
  std::printf("wrote %s: N=%zu V=%zu K=%zu T=%zu noise=%s\n", out_path.c_str(),
              ds.size(), ds.num_views, ds.num_classes, ds.seq_len,
              c2af::format_double(cfg.noise).c_str());
  // Reference accuracies of the nearest-signature classifier, per view and
  // with all views joined; useful when tuning the noise level.
  std::vector<std::size_t> all_views;
  for (std::size_t v = 0; v < ds.num_views; ++v) {
    all_views.push_back(v);
    const double acc = c2af::nearest_signature_accuracy(ds, cfg, {v});
    std::printf("oracle view%zu accuracy: %s\n", v, c2af::format_double(acc).c_str());
  }
  const double acc = c2af::nearest_signature_accuracy(ds, cfg, all_views);
  std::printf("oracle all-view accuracy: %s\n", c2af::format_double(acc).c_str());
  return 0;
}

int cmd_train(const std::string& data_path, const std::string& config_path,
              const std::string& out_path, const std::string& log_path,
              bool seed_given, std::uint64_t seed) {
  const c2af::MultiViewDataset ds = c2af::load_container(data_path);
  c2af::TrainConfig cfg =
      c2af::TrainConfig::from_config(c2af::KeyValueConfig::parse_file(config_path));
  if (seed_given) cfg.seed = seed;
  const c2af::TrainResult result = c2af::train_loop(ds, cfg);
  c2af::save_checkpoint(result.best, out_path);
  write_text(log_path, result.metric_log);
  std::printf("best step %zu, held-out fused accuracy %s\n", result.best_step,
              c2af::format_double(result.best_fused_accuracy).c_str());
  std::printf("checkpoint: %s\nlog: %s\n", out_path.c_str(), log_path.c_str());
  return 0;
}

int cmd_eval(const std::string& data_path, const std::string& ckpt_path,
             const std::string& report_path, const std::string& format) {
  const c2af::MultiViewDataset ds = c2af::load_container(data_path);
  c2af::Checkpoint ckpt = c2af::load_checkpoint(ckpt_path);
  const std::vector<std::size_t> indices = c2af::eval_indices_for(ckpt, ds);
  const c2af::EvalReport report =
      c2af::evaluate_model(ckpt.model, ds, indices, ckpt.config_fingerprint,
                           ckpt.config.seed, ckpt.step);
  c2af::emit_report(report, report_path, c2af::parse_report_format(format));
  std::printf("evaluated %zu samples: fused accuracy %s -> %s\n", indices.size(),
              c2af::format_double(report.fused_accuracy).c_str(),
              report_path.c_str());
  return 0;
}

int cmd_ablate(const std::string& data_path, const std::string& config_path,
               const std::string& modes_list, const std::string& seeds_list,
               const std::string& report_path, std::size_t jobs) {
  const c2af::MultiViewDataset ds = c2af::load_container(data_path);
  const c2af::TrainConfig base =
      c2af::TrainConfig::from_config(c2af::KeyValueConfig::parse_file(config_path));
  std::vector<c2af::FusionMode> modes;
  for (const std::string& m : split_list(modes_list)) {
    modes.push_back(c2af::parse_fusion_mode(m));
  }
  std::vector<std::uint64_t> seeds;
  for (const std::string& s : split_list(seeds_list)) {
    seeds.push_back(std::stoull(s));
  }
  const c2af::AblationSummary summary = c2af::ablate(ds, base, modes, seeds, jobs);
  c2af::emit_ablation_report(summary, report_path);
  for (const auto& [mode, mean] : summary.mode_means) {
    std::printf("%s: mean fused accuracy %s\n", c2af::to_string(mode),
                c2af::format_double(mean).c_str());
  }
  std::printf("report: %s\n", report_path.c_str());
  return 0;
}

int cmd_baseline(const std::string& data_path, const std::string& ckpt_path,
                 const std::string& mode_name, const std::string& report_path) {
  const c2af::MultiViewDataset ds = c2af::load_container(data_path);
  c2af::Checkpoint ckpt = c2af::load_checkpoint(ckpt_path);
  const std::vector<std::size_t> indices = c2af::eval_indices_for(ckpt, ds);
  const c2af::LateFusionMode mode = c2af::parse_late_fusion_mode(mode_name);

  c2af::FusionParams concat_head;
  if (mode == c2af::LateFusionMode::kConcat) {
    concat_head = c2af::train_concat_head(ckpt, ds);
  }
  const c2af::EvalReport report = c2af::evaluate_with_fuser(
      ckpt.model, ds, indices,
      [&](const std::vector<c2af::Tensor>& yhat) {
        return c2af::late_fusion_baseline(
            yhat, mode,
            mode == c2af::LateFusionMode::kConcat ? &concat_head : nullptr);
      },
      mode_name, ckpt.config_fingerprint, ckpt.config.seed, ckpt.step);
  c2af::emit_report(report, report_path, c2af::ReportFormat::kJson);
  std::printf("%s fusion accuracy %s -> %s\n", mode_name.c_str(),
              c2af::format_double(report.fused_accuracy).c_str(),
              report_path.c_str());
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, double eps) {
  const c2af::NetworkGradCheck result = c2af::run_network_gradcheck(seed, eps);
  for (const auto& group : result.groups) {
    std::printf("%-8s max rel err %s\n", group.name.c_str(),
                c2af::format_double(group.report.max_rel_err).c_str());
  }
  const bool ok = result.pass(1e-4);
  std::printf("overall max rel err %s: %s\n",
              c2af::format_double(result.max_rel_err).c_str(),
              ok ? "PASS" : "FAIL");
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"C2AF: correlative channel-aware fusion for multi-view time series"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset container");
  std::string synth_out, synth_config;
  SynthFlags sflags;
  synth->add_option("--out", synth_out, "output container path")->required();
  synth->add_option("--config", synth_config, "key=value config file");
  synth->add_option("--classes", sflags.values.classes, "number of classes K");
  synth->add_option("--views", sflags.values.views, "number of views V");
  synth->add_option("--samples", sflags.values.samples, "number of samples N");
  synth->add_option("--length", sflags.values.length, "sequence length T");
  synth->add_option("--dims", sflags.dims, "per-view feature widths, e.g. 8,8,8");
  synth->add_option("--noise", sflags.values.noise, "Gaussian noise scale");
  synth->add_option("--confusions", sflags.confusions,
                    "per-view confused pairs, e.g. '0-1,2-3;2-4,3-5;0-5,1-4'");
  synth->add_option("--seed", sflags.values.seed, "sample noise seed");

  // train
  auto* train = app.add_subcommand("train", "train on a dataset container");
  std::string train_data, train_config, train_out, train_log;
  std::uint64_t train_seed = 0;
  train->add_option("--data", train_data, "dataset container")->required();
  train->add_option("--config", train_config, "key=value config file")->required();
  train->add_option("--out", train_out, "checkpoint output path")->required();
  train->add_option("--log", train_log, "metric log output path")->required();
  auto* train_seed_opt = train->add_option("--seed", train_seed, "seed override");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_data, eval_ckpt, eval_report, eval_format = "json";
  eval->add_option("--data", eval_data, "dataset container")->required();
  eval->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
  eval->add_option("--report", eval_report, "report output path")->required();
  eval->add_option("--format", eval_format, "json|csv");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "run the ablation grid");
  std::string ab_data, ab_config, ab_report;
  std::string ab_modes = "complete,intra_only,inter_only,fusion_only,no_channel_fusion";
  std::string ab_seeds = "1,2,3";
  std::size_t ab_jobs = 2;
  ablate->add_option("--data", ab_data, "dataset container")->required();
  ablate->add_option("--config", ab_config, "key=value config file")->required();
  ablate->add_option("--modes", ab_modes, "comma-separated ablation modes");
  ablate->add_option("--seeds", ab_seeds, "comma-separated seeds");
  ablate->add_option("--report", ab_report, "report output path")->required();
  ablate->add_option("--jobs", ab_jobs, "max parallel runs");

  // baseline
  auto* baseline = app.add_subcommand("baseline", "late-fusion baselines");
  std::string bl_data, bl_ckpt, bl_mode, bl_report;
  baseline->add_option("--data", bl_data, "dataset container")->required();
  baseline->add_option("--ckpt", bl_ckpt, "checkpoint path")->required();
  baseline->add_option("--mode", bl_mode, "concat|average|max")->required();
  baseline->add_option("--report", bl_report, "report output path")->required();

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "full-network finite differences");
  std::uint64_t gc_seed = 1;
  double gc_eps = 1e-5;
  gradcheck->add_option("--seed", gc_seed, "random seed");
  gradcheck->add_option("--eps", gc_eps, "central difference step");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      sflags.has_classes = synth->count("--classes") > 0;
      sflags.has_views = synth->count("--views") > 0;
      sflags.has_samples = synth->count("--samples") > 0;
      sflags.has_length = synth->count("--length") > 0;
      sflags.has_dims = synth->count("--dims") > 0;
      sflags.has_noise = synth->count("--noise") > 0;
      sflags.has_confusions = synth->count("--confusions") > 0;
      sflags.has_seed = synth->count("--seed") > 0;
      return cmd_synth(synth_out, synth_config, sflags);
    }
    if (train->parsed()) {
      return cmd_train(train_data, train_config, train_out, train_log,
                       train_seed_opt->count() > 0, train_seed);
    }
    if (eval->parsed()) return cmd_eval(eval_data, eval_ckpt, eval_report, eval_format);
    if (ablate->parsed()) {
      return cmd_ablate(ab_data, ab_config, ab_modes, ab_seeds, ab_report, ab_jobs);
    }
    if (baseline->parsed()) return cmd_baseline(bl_data, bl_ckpt, bl_mode, bl_report);
    if (gradcheck->parsed()) return cmd_gradcheck(gc_seed, gc_eps);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
