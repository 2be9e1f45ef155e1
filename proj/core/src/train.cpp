#include "c2af/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>
#include <unordered_map>

#include "binio.hpp"
#include "c2af/ops.hpp"

namespace c2af {

namespace {
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kCheckpointRecord = 1;
constexpr std::uint64_t kInitTag = 0x1217ull;
constexpr std::uint64_t kSplitTag = 0x5B117ull;
constexpr std::uint64_t kBatchTag = 0xBA7C4ull;

std::size_t fusion_mode_index(FusionMode m) { return static_cast<std::size_t>(m); }

FusionMode fusion_mode_from_index(std::size_t i) {
  if (i > static_cast<std::size_t>(FusionMode::kLabelConcat)) {
    throw std::runtime_error("checkpoint: bad fusion mode index");
  }
  return static_cast<FusionMode>(i);
}
}  // namespace

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

void TrainConfig::validate() const {
  if (steps == 0) throw std::invalid_argument("config: steps must be >= 1");
  if (warmup_steps > steps) {
    throw std::invalid_argument("config: warmup_steps must not exceed steps");
  }
  if (batch_size == 0) throw std::invalid_argument("config: batch_size must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("config: lr must be > 0");
  if (d_global == 0) throw std::invalid_argument("config: d_global must be >= 1");
  if (conv_channels.empty() || conv_channels.size() != conv_kernels.size()) {
    throw std::invalid_argument("config: conv_channels/conv_kernels must be non-empty and match");
  }
  if (n_kernels == 0) throw std::invalid_argument("config: n_kernels must be >= 1");
  if (eval_interval == 0) throw std::invalid_argument("config: eval_interval must be >= 1");
  if (!(test_fraction > 0.0) || !(test_fraction < 1.0)) {
    throw std::invalid_argument("config: test_fraction must be in (0, 1)");
  }
}

std::string TrainConfig::canonical_text() const {
  std::string s;
  auto list = [](const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) out += ",";
      out += std::to_string(v[i]);
    }
    return out;
  };
  s += "steps = " + std::to_string(steps) + "\n";
  s += "warmup_steps = " + std::to_string(warmup_steps) + "\n";
  s += "batch_size = " + std::to_string(batch_size) + "\n";
  s += "lr = " + format_double(lr) + "\n";
  s += "seed = " + std::to_string(seed) + "\n";
  s += "d_global = " + std::to_string(d_global) + "\n";
  s += "conv_channels = " + list(conv_channels) + "\n";
  s += "conv_kernels = " + list(conv_kernels) + "\n";
  s += "n_kernels = " + std::to_string(n_kernels) + "\n";
  s += "eval_interval = " + std::to_string(eval_interval) + "\n";
  s += "test_fraction = " + format_double(test_fraction) + "\n";
  s += "fusion_mode = " + std::string(to_string(fusion_mode)) + "\n";
  return s;
}

std::uint64_t TrainConfig::fingerprint() const { return fnv1a64(canonical_text()); }

TrainConfig TrainConfig::from_config(const KeyValueConfig& kv) {
  static const std::set<std::string> known = {
      "steps",       "warmup_steps", "batch_size",    "lr",
      "seed",        "d_global",     "conv_channels", "conv_kernels",
      "n_kernels",   "eval_interval", "test_fraction", "fusion_mode"};
  for (const std::string& k : kv.keys()) {
    if (!known.count(k)) throw std::runtime_error("config: unknown key '" + k + "'");
  }
  TrainConfig cfg;
  cfg.steps = kv.get_size("steps", cfg.steps);
  cfg.warmup_steps = kv.get_size("warmup_steps", cfg.steps / 5);
  cfg.batch_size = kv.get_size("batch_size", cfg.batch_size);
  cfg.lr = kv.get_double("lr", cfg.lr);
  cfg.seed = kv.get_u64("seed", cfg.seed);
  cfg.d_global = kv.get_size("d_global", cfg.d_global);
  cfg.conv_channels = kv.get_size_list("conv_channels", cfg.conv_channels);
  cfg.conv_kernels = kv.get_size_list("conv_kernels", cfg.conv_kernels);
  cfg.n_kernels = kv.get_size("n_kernels", cfg.n_kernels);
  cfg.eval_interval = kv.get_size("eval_interval", cfg.eval_interval);
  cfg.test_fraction = kv.get_double("test_fraction", cfg.test_fraction);
  cfg.fusion_mode = parse_fusion_mode(kv.get_string("fusion_mode", "complete"));
  cfg.validate();
  return cfg;
}

std::vector<Param*> Model::all_params() {
  std::vector<Param*> out;
  for (auto& v : views) {
    for (Param* p : v.params()) out.push_back(p);
  }
  for (Param* p : fusion.params()) out.push_back(p);
  return out;
}

Model make_model(const MultiViewDataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  Model m;
  m.num_classes = ds.num_classes;
  m.seq_len = ds.seq_len;
  m.view_dims = ds.view_dims;
  Rng rng = Rng::stream(cfg.seed, kInitTag);
  for (std::size_t v = 0; v < ds.num_views; ++v) {
    m.views.push_back(make_view_encoder(ds.view_dims[v], ds.seq_len, ds.num_classes,
                                        cfg.d_global, cfg.conv_channels,
                                        cfg.conv_kernels,
                                        "view" + std::to_string(v), rng));
  }
  m.fusion = make_fusion_params(cfg.fusion_mode, ds.num_views, ds.num_classes,
                                cfg.n_kernels, "fusion", rng);
  return m;
}

std::vector<Tensor> view_probabilities(Model& model, const std::vector<Tensor>& sample) {
  std::vector<Tensor> yhat(model.num_views());
  for (std::size_t v = 0; v < model.num_views(); ++v) {
    const Tensor h = encode_view(sample[v], model.views[v], Mode::kInfer);
    yhat[v] = classify_view(h, model.views[v]);
  }
  return yhat;
}

SplitIndices split_dataset(std::size_t n, double test_fraction, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("split: empty dataset");
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng = Rng::stream(seed, kSplitTag);
  rng.shuffle(perm);
  std::size_t n_test = static_cast<std::size_t>(
      std::llround(test_fraction * static_cast<double>(n)));
  if (n_test >= n) n_test = n - 1;
  SplitIndices s;
  s.test.assign(perm.begin(), perm.begin() + n_test);
  s.train.assign(perm.begin() + n_test, perm.end());
  return s;
}

// ---- checkpoint serialization ----

namespace {

struct BlobWriter {
  std::vector<unsigned char> payload;
  std::uint32_t count = 0;

  void add(const std::string& name, const std::vector<std::size_t>& shape,
           const double* data, std::size_t n) {
    binio::put_u32(payload, static_cast<std::uint32_t>(name.size()));
    binio::put_bytes(payload, name.data(), name.size());
    binio::put_u32(payload, static_cast<std::uint32_t>(shape.size()));
    for (std::size_t e : shape) binio::put_u32(payload, static_cast<std::uint32_t>(e));
    for (std::size_t i = 0; i < n; ++i) binio::put_f64(payload, data[i]);
    ++count;
  }
  void add(const std::string& name, const Tensor& t) {
    add(name, t.shape(), t.data(), t.size());
  }
  void add_values(const std::string& name, const std::vector<double>& v) {
    add(name, {v.size()}, v.data(), v.size());
  }
};

std::pair<double, double> split_u64(std::uint64_t v) {
  return {static_cast<double>(v >> 32), static_cast<double>(v & 0xFFFFFFFFull)};
}

std::uint64_t join_u64(double hi, double lo) {
  return (static_cast<std::uint64_t>(hi) << 32) | static_cast<std::uint64_t>(lo);
}

void add_adam_group(BlobWriter& w, const std::string& group, const AdamState& state,
                    const std::vector<Param*>& params) {
  w.add_values("adam." + group + ".step",
               {static_cast<double>(state.step_count())});
  for (const Param* p : params) {
    w.add("adam." + p->name + ".m", state.first_moment(p->name));
    w.add("adam." + p->name + ".v", state.second_moment(p->name));
  }
}

struct BlobMap {
  std::unordered_map<std::string, Tensor> blobs;
  std::set<std::string> consumed;

  const Tensor& get(const std::string& name) {
    auto it = blobs.find(name);
    if (it == blobs.end()) {
      throw std::runtime_error("checkpoint: missing blob " + name);
    }
    consumed.insert(name);
    return it->second;
  }
  double get_scalar(const std::string& name) {
    const Tensor& t = get(name);
    if (t.size() != 1) throw std::runtime_error("checkpoint: blob " + name + " not scalar");
    return t[0];
  }
  void take_into(const std::string& name, Tensor& dst) {
    const Tensor& src = get(name);
    if (!src.same_shape(dst)) {
      throw std::runtime_error("checkpoint: blob " + name + " has shape " +
                               shape_str(src.shape()) + ", expected " +
                               shape_str(dst.shape()));
    }
    dst = src;
  }
};

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  BlobWriter w;
  Checkpoint& c = const_cast<Checkpoint&>(ckpt);  // params() is non-const only

  std::vector<double> dims{static_cast<double>(c.model.num_views()),
                           static_cast<double>(c.model.num_classes),
                           static_cast<double>(c.model.seq_len)};
  for (std::size_t d : c.model.view_dims) dims.push_back(static_cast<double>(d));
  w.add_values("meta.dims", dims);

  const TrainConfig& cfg = c.config;
  std::vector<double> channels, kernels;
  for (std::size_t x : cfg.conv_channels) channels.push_back(static_cast<double>(x));
  for (std::size_t x : cfg.conv_kernels) kernels.push_back(static_cast<double>(x));
  w.add_values("meta.conv_channels", channels);
  w.add_values("meta.conv_kernels", kernels);
  w.add_values("meta.arch", {static_cast<double>(cfg.d_global),
                             static_cast<double>(cfg.n_kernels),
                             static_cast<double>(fusion_mode_index(cfg.fusion_mode))});
  w.add_values("meta.schedule",
               {static_cast<double>(cfg.steps), static_cast<double>(cfg.warmup_steps),
                static_cast<double>(cfg.batch_size), cfg.lr,
                static_cast<double>(cfg.eval_interval)});
  w.add_values("meta.step", {static_cast<double>(c.step)});
  const auto [shi, slo] = split_u64(cfg.seed);
  w.add_values("meta.seed", {shi, slo});
  const auto [fhi, flo] = split_u64(c.config_fingerprint);
  w.add_values("meta.config_fingerprint", {fhi, flo});
  w.add_values("meta.test_fraction", {cfg.test_fraction});
  w.add_values("meta.dataset_size", {static_cast<double>(c.dataset_size)});

  for (std::size_t v = 0; v < c.model.num_views(); ++v) {
    for (Param* p : c.model.views[v].params()) w.add(p->name, p->value);
    for (std::size_t m = 0; m < c.model.views[v].tcn.size(); ++m) {
      const auto& layer = c.model.views[v].tcn[m];
      const std::string ln = "view" + std::to_string(v) + ".tcn" + std::to_string(m);
      w.add(ln + ".running_mean", layer.running_mean);
      w.add(ln + ".running_var", layer.running_var);
    }
  }
  for (Param* p : c.model.fusion.params()) w.add(p->name, p->value);

  if (!c.model.norm.empty()) {
    for (std::size_t v = 0; v < c.model.num_views(); ++v) {
      w.add("norm.view" + std::to_string(v) + ".mean", c.model.norm.mean[v]);
      w.add("norm.view" + std::to_string(v) + ".std", c.model.norm.stddev[v]);
    }
  }

  if (c.view_opt.size() != c.model.num_views()) {
    throw std::runtime_error("checkpoint: optimizer state count mismatch");
  }
  for (std::size_t v = 0; v < c.model.num_views(); ++v) {
    add_adam_group(w, "view" + std::to_string(v), c.view_opt[v],
                   c.model.views[v].params());
  }
  add_adam_group(w, "fusion", c.fusion_opt, c.model.fusion.params());

  std::vector<unsigned char> buf;
  binio::put_bytes(buf, "C2AF", 4);
  binio::put_u32(buf, kVersion);
  binio::put_u32(buf, kCheckpointRecord);
  binio::put_u32(buf, w.count);
  buf.insert(buf.end(), w.payload.begin(), w.payload.end());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path);
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  binio::Reader r(buf.data(), buf.size());
  if (r.str(4) != "C2AF" || !r.ok()) {
    throw std::runtime_error("checkpoint: bad magic in " + path);
  }
  if (r.u32() != kVersion) throw std::runtime_error("checkpoint: version mismatch");
  if (r.u32() != kCheckpointRecord) {
    throw std::runtime_error("checkpoint: not a checkpoint record");
  }
  const std::uint32_t count = r.u32();
  if (!r.ok()) throw std::runtime_error("checkpoint: truncated header");

  BlobMap blobs;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = r.u32();
    const std::string name = r.str(name_len);
    const std::uint32_t rank = r.u32();
    std::vector<std::size_t> shape(rank);
    for (std::uint32_t a = 0; a < rank; ++a) shape[a] = r.u32();
    if (!r.ok()) throw std::runtime_error("checkpoint: truncated blob header");
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    std::vector<double> data(n);
    for (std::size_t j = 0; j < n; ++j) data[j] = r.f64();
    if (!r.ok()) throw std::runtime_error("checkpoint: truncated blob " + name);
    blobs.blobs.emplace(name, Tensor(shape, std::move(data)));
  }
  if (r.remaining() != 0) throw std::runtime_error("checkpoint: trailing bytes");

  // Rebuild the model skeleton from metadata, then restore values by name.
  const Tensor& dims = blobs.get("meta.dims");
  if (dims.size() < 4) throw std::runtime_error("checkpoint: bad meta.dims");
  const std::size_t num_views = static_cast<std::size_t>(dims[0]);
  const std::size_t classes = static_cast<std::size_t>(dims[1]);
  const std::size_t seq_len = static_cast<std::size_t>(dims[2]);
  if (dims.size() != 3 + num_views) throw std::runtime_error("checkpoint: bad meta.dims");
  std::vector<std::size_t> view_dims(num_views);
  for (std::size_t v = 0; v < num_views; ++v) {
    view_dims[v] = static_cast<std::size_t>(dims[3 + v]);
  }
  const Tensor& arch = blobs.get("meta.arch");
  if (arch.size() != 3) throw std::runtime_error("checkpoint: bad meta.arch");
  const std::size_t d_global = static_cast<std::size_t>(arch[0]);
  const std::size_t n_kernels = static_cast<std::size_t>(arch[1]);
  const FusionMode mode = fusion_mode_from_index(static_cast<std::size_t>(arch[2]));
  const Tensor& cc = blobs.get("meta.conv_channels");
  const Tensor& ck = blobs.get("meta.conv_kernels");
  std::vector<std::size_t> conv_channels(cc.size()), conv_kernels(ck.size());
  for (std::size_t i = 0; i < cc.size(); ++i) conv_channels[i] = static_cast<std::size_t>(cc[i]);
  for (std::size_t i = 0; i < ck.size(); ++i) conv_kernels[i] = static_cast<std::size_t>(ck[i]);

  Checkpoint ckpt;
  ckpt.step = static_cast<std::size_t>(blobs.get_scalar("meta.step"));
  {
    const Tensor& s = blobs.get("meta.seed");
    ckpt.config.seed = join_u64(s[0], s[1]);
    const Tensor& f = blobs.get("meta.config_fingerprint");
    ckpt.config_fingerprint = join_u64(f[0], f[1]);
  }
  ckpt.config.test_fraction = blobs.get_scalar("meta.test_fraction");
  ckpt.dataset_size = static_cast<std::size_t>(blobs.get_scalar("meta.dataset_size"));
  {
    const Tensor& sched = blobs.get("meta.schedule");
    if (sched.size() != 5) throw std::runtime_error("checkpoint: bad meta.schedule");
    ckpt.config.steps = static_cast<std::size_t>(sched[0]);
    ckpt.config.warmup_steps = static_cast<std::size_t>(sched[1]);
    ckpt.config.batch_size = static_cast<std::size_t>(sched[2]);
    ckpt.config.lr = sched[3];
    ckpt.config.eval_interval = static_cast<std::size_t>(sched[4]);
  }
  ckpt.config.d_global = d_global;
  ckpt.config.n_kernels = n_kernels;
  ckpt.config.fusion_mode = mode;
  ckpt.config.conv_channels = conv_channels;
  ckpt.config.conv_kernels = conv_kernels;
  if (ckpt.config.fingerprint() != ckpt.config_fingerprint) {
    throw std::runtime_error("checkpoint: config fingerprint mismatch");
  }

  Rng scratch(0);
  ckpt.model.num_classes = classes;
  ckpt.model.seq_len = seq_len;
  ckpt.model.view_dims = view_dims;
  for (std::size_t v = 0; v < num_views; ++v) {
    ckpt.model.views.push_back(make_view_encoder(view_dims[v], seq_len, classes,
                                                 d_global, conv_channels, conv_kernels,
                                                 "view" + std::to_string(v), scratch));
  }
  ckpt.model.fusion =
      make_fusion_params(mode, num_views, classes, n_kernels, "fusion", scratch);

  for (std::size_t v = 0; v < num_views; ++v) {
    for (Param* p : ckpt.model.views[v].params()) blobs.take_into(p->name, p->value);
    for (std::size_t m = 0; m < ckpt.model.views[v].tcn.size(); ++m) {
      auto& layer = ckpt.model.views[v].tcn[m];
      const std::string ln = "view" + std::to_string(v) + ".tcn" + std::to_string(m);
      blobs.take_into(ln + ".running_mean", layer.running_mean);
      blobs.take_into(ln + ".running_var", layer.running_var);
    }
  }
  for (Param* p : ckpt.model.fusion.params()) blobs.take_into(p->name, p->value);

  if (blobs.blobs.count("norm.view0.mean")) {
    ckpt.model.norm.mean.resize(num_views);
    ckpt.model.norm.stddev.resize(num_views);
    for (std::size_t v = 0; v < num_views; ++v) {
      ckpt.model.norm.mean[v] = Tensor({view_dims[v]});
      ckpt.model.norm.stddev[v] = Tensor({view_dims[v]});
      blobs.take_into("norm.view" + std::to_string(v) + ".mean", ckpt.model.norm.mean[v]);
      blobs.take_into("norm.view" + std::to_string(v) + ".std", ckpt.model.norm.stddev[v]);
    }
  }

  auto restore_group = [&](const std::string& group, const std::vector<Param*>& params) {
    AdamState state(params);
    state.set_step(
        static_cast<std::size_t>(blobs.get_scalar("adam." + group + ".step")));
    for (const Param* p : params) {
      Tensor m(p->value.shape()), v(p->value.shape());
      blobs.take_into("adam." + p->name + ".m", m);
      blobs.take_into("adam." + p->name + ".v", v);
      state.restore(p->name, std::move(m), std::move(v));
    }
    return state;
  };
  for (std::size_t v = 0; v < num_views; ++v) {
    ckpt.view_opt.push_back(
        restore_group("view" + std::to_string(v), ckpt.model.views[v].params()));
  }
  ckpt.fusion_opt = restore_group("fusion", ckpt.model.fusion.params());

  for (const auto& [name, t] : blobs.blobs) {
    if (!blobs.consumed.count(name)) {
      throw std::runtime_error("checkpoint: unexpected blob " + name);
    }
  }
  return ckpt;
}

std::vector<std::size_t> eval_indices_for(const Checkpoint& ckpt,
                                          const MultiViewDataset& ds) {
  if (ds.size() == ckpt.dataset_size && ckpt.config.test_fraction > 0.0) {
    return split_dataset(ds.size(), ckpt.config.test_fraction, ckpt.config.seed).test;
  }
  std::vector<std::size_t> all(ds.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return all;
}

// ---- trainer ----

Trainer::Trainer(const MultiViewDataset& raw, const TrainConfig& cfg)
    : cfg_(cfg), batch_rng_(Rng::stream(cfg.seed, kBatchTag)) {
  cfg_.validate();
  raw.validate();
  split_ = split_dataset(raw.size(), cfg_.test_fraction, cfg_.seed);
  if (split_.train.empty()) throw std::invalid_argument("trainer: empty train split");
  data_ = raw;
  Standardizer norm = Standardizer::fit(data_, split_.train);
  norm.apply(data_);
  model_ = make_model(data_, cfg_);
  model_.norm = std::move(norm);
  for (std::size_t v = 0; v < model_.num_views(); ++v) {
    view_opt_.emplace_back(model_.view_params(v));
  }
  fusion_opt_ = AdamState(model_.fusion_params());
  order_ = split_.train;
  batch_rng_.shuffle(order_);
}

std::vector<std::size_t> Trainer::next_batch() {
  if (cursor_ >= order_.size()) {
    batch_rng_.shuffle(order_);
    cursor_ = 0;
  }
  const std::size_t take = std::min(cfg_.batch_size, order_.size() - cursor_);
  std::vector<std::size_t> batch(order_.begin() + cursor_,
                                 order_.begin() + cursor_ + take);
  cursor_ += take;
  return batch;
}

double Trainer::train_step_view(const std::vector<std::size_t>& batch, std::size_t v) {
  if (batch.empty()) throw std::invalid_argument("train_step_view: empty batch");
  if (v >= model_.num_views()) throw std::out_of_range("train_step_view: view index");
  std::vector<const Tensor*> xs(batch.size());
  std::vector<std::size_t> ys(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    xs[i] = &data_.samples[batch[i]][v];
    ys[i] = data_.labels[batch[i]];
  }
  const ViewBatchResult r = view_loss_and_grads(xs, ys, model_.views[v],
                                                /*update_running_stats=*/true);
  AdamConfig opt;
  opt.lr = cfg_.lr;
  adam_step(model_.view_params(v), view_opt_[v], opt);
  return r.loss;
}

double Trainer::train_step_fusion(const std::vector<std::size_t>& batch) {
  if (batch.empty()) throw std::invalid_argument("train_step_fusion: empty batch");
  // Fresh per-view predictions from the just-updated encoders (train-mode
  // statistics; running stats were already advanced by the view steps).
  std::vector<std::vector<Tensor>> yhat(batch.size(),
                                        std::vector<Tensor>(model_.num_views()));
  std::vector<std::size_t> ys(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) ys[i] = data_.labels[batch[i]];
  for (std::size_t v = 0; v < model_.num_views(); ++v) {
    std::vector<const Tensor*> xs(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      xs[i] = &data_.samples[batch[i]][v];
    }
    std::vector<Tensor> probs = view_forward_batch(xs, model_.views[v], Mode::kTrain,
                                                   /*update_running_stats=*/false);
    for (std::size_t i = 0; i < batch.size(); ++i) yhat[i][v] = std::move(probs[i]);
  }
  const double loss = fusion_loss_and_grads(yhat, ys, model_.fusion);
  AdamConfig opt;
  opt.lr = cfg_.lr;
  adam_step(model_.fusion_params(), fusion_opt_, opt);
  return loss;
}

SplitEval Trainer::evaluate_on(const std::vector<std::size_t>& indices) {
  SplitEval ev;
  ev.view_accuracy.assign(model_.num_views(), 0.0);
  if (indices.empty()) return ev;
  std::size_t fused_hits = 0;
  std::vector<std::size_t> view_hits(model_.num_views(), 0);
  for (std::size_t i : indices) {
    const std::vector<Tensor> yhat = view_probabilities(model_, data_.samples[i]);
    for (std::size_t v = 0; v < model_.num_views(); ++v) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < yhat[v].size(); ++k) {
        if (yhat[v][k] > yhat[v][best]) best = k;
      }
      if (best == data_.labels[i]) ++view_hits[v];
    }
    const Tensor fused = fusion_predict(yhat, model_.fusion);
    std::size_t best = 0;
    for (std::size_t k = 1; k < fused.size(); ++k) {
      if (fused[k] > fused[best]) best = k;
    }
    if (best == data_.labels[i]) ++fused_hits;
  }
  const double n = static_cast<double>(indices.size());
  for (std::size_t v = 0; v < model_.num_views(); ++v) {
    ev.view_accuracy[v] = static_cast<double>(view_hits[v]) / n;
  }
  ev.fused_accuracy = static_cast<double>(fused_hits) / n;
  return ev;
}

Checkpoint Trainer::snapshot(std::size_t step) const {
  Checkpoint c;
  c.model = model_;
  c.view_opt = view_opt_;
  c.fusion_opt = fusion_opt_;
  c.step = step;
  c.config = cfg_;
  c.config_fingerprint = cfg_.fingerprint();
  c.dataset_size = data_.size();
  return c;
}

TrainResult Trainer::run() {
  TrainResult result;
  std::string log;
  bool have_best = false;
  for (std::size_t step = 1; step <= cfg_.steps; ++step) {
    const std::vector<std::size_t> batch = next_batch();
    std::vector<double> view_losses(model_.num_views());
    for (std::size_t v = 0; v < model_.num_views(); ++v) {
      view_losses[v] = train_step_view(batch, v);
    }
    double fusion_loss = 0.0;
    const bool fusion_active = step > cfg_.warmup_steps;
    if (fusion_active) fusion_loss = train_step_fusion(batch);

    if (step % cfg_.eval_interval == 0 || step == cfg_.steps) {
      const SplitEval ev = evaluate_on(split_.test);
      log += "step=" + std::to_string(step);
      log += " view_loss=";
      for (std::size_t v = 0; v < view_losses.size(); ++v) {
        if (v) log += ",";
        log += format_double(view_losses[v]);
      }
      log += " fusion_loss=";
      log += fusion_active ? format_double(fusion_loss) : std::string("na");
      log += " view_acc=";
      for (std::size_t v = 0; v < ev.view_accuracy.size(); ++v) {
        if (v) log += ",";
        log += format_double(ev.view_accuracy[v]);
      }
      log += " fused_acc=" + format_double(ev.fused_accuracy);
      log += "\n";
      // Ties keep the earlier step.
      if (!have_best || ev.fused_accuracy > result.best_fused_accuracy) {
        have_best = true;
        result.best_fused_accuracy = ev.fused_accuracy;
        result.best_step = step;
        result.best = snapshot(step);
      }
    }
  }
  result.metric_log = std::move(log);
  return result;
}

TrainResult train_loop(const MultiViewDataset& raw, const TrainConfig& cfg) {
  Trainer trainer(raw, cfg);
  return trainer.run();
}

// ---- shared-trajectory multi-head training ----

MultiHeadTrainer::MultiHeadTrainer(const MultiViewDataset& raw, const TrainConfig& cfg,
                                   const std::vector<FusionMode>& modes)
    : cfg_(cfg), batch_rng_(Rng::stream(cfg.seed, kBatchTag)) {
  cfg_.validate();
  raw.validate();
  if (modes.empty()) throw std::invalid_argument("multi-head trainer: no modes");
  split_ = split_dataset(raw.size(), cfg_.test_fraction, cfg_.seed);
  if (split_.train.empty()) {
    throw std::invalid_argument("multi-head trainer: empty train split");
  }
  data_ = raw;
  Standardizer norm = Standardizer::fit(data_, split_.train);
  norm.apply(data_);

  // Mirror make_model's draw order: all view encoders first, then the head.
  // Each head is initialized from a copy of the post-view stream state, so
  // it matches the head a solo run with that fusion_mode would draw.
  Rng rng = Rng::stream(cfg_.seed, kInitTag);
  views_.num_classes = data_.num_classes;
  views_.seq_len = data_.seq_len;
  views_.view_dims = data_.view_dims;
  for (std::size_t v = 0; v < data_.num_views; ++v) {
    views_.views.push_back(make_view_encoder(data_.view_dims[v], data_.seq_len,
                                             data_.num_classes, cfg_.d_global,
                                             cfg_.conv_channels, cfg_.conv_kernels,
                                             "view" + std::to_string(v), rng));
  }
  views_.norm = std::move(norm);
  for (FusionMode mode : modes) {
    Rng head_rng = rng;  // copy of the post-view state
    heads_.push_back(make_fusion_params(mode, data_.num_views, data_.num_classes,
                                        cfg_.n_kernels, "fusion", head_rng));
    head_opt_.emplace_back(heads_.back().params());
  }
  for (std::size_t v = 0; v < views_.num_views(); ++v) {
    view_opt_.emplace_back(views_.view_params(v));
  }
  order_ = split_.train;
  batch_rng_.shuffle(order_);
}

std::vector<std::size_t> MultiHeadTrainer::next_batch() {
  if (cursor_ >= order_.size()) {
    batch_rng_.shuffle(order_);
    cursor_ = 0;
  }
  const std::size_t take = std::min(cfg_.batch_size, order_.size() - cursor_);
  std::vector<std::size_t> batch(order_.begin() + cursor_,
                                 order_.begin() + cursor_ + take);
  cursor_ += take;
  return batch;
}

std::vector<MultiHeadTrainer::HeadResult> MultiHeadTrainer::run() {
  std::vector<HeadResult> results(heads_.size());
  std::vector<bool> have_best(heads_.size(), false);
  for (std::size_t h = 0; h < heads_.size(); ++h) results[h].mode = heads_[h].mode;

  AdamConfig opt;
  opt.lr = cfg_.lr;
  for (std::size_t step = 1; step <= cfg_.steps; ++step) {
    const std::vector<std::size_t> batch = next_batch();
    std::vector<double> view_losses(views_.num_views());
    for (std::size_t v = 0; v < views_.num_views(); ++v) {
      std::vector<const Tensor*> xs(batch.size());
      std::vector<std::size_t> ys(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i) {
        xs[i] = &data_.samples[batch[i]][v];
        ys[i] = data_.labels[batch[i]];
      }
      view_losses[v] =
          view_loss_and_grads(xs, ys, views_.views[v], true).loss;
      adam_step(views_.view_params(v), view_opt_[v], opt);
    }

    const bool fusion_active = step > cfg_.warmup_steps;
    std::vector<double> head_losses(heads_.size(), 0.0);
    if (fusion_active) {
      // One shared forward per view; every head consumes the same batch of
      // predictions, exactly as its solo run would.
      std::vector<std::vector<Tensor>> yhat(batch.size(),
                                            std::vector<Tensor>(views_.num_views()));
      std::vector<std::size_t> ys(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i) ys[i] = data_.labels[batch[i]];
      for (std::size_t v = 0; v < views_.num_views(); ++v) {
        std::vector<const Tensor*> xs(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) {
          xs[i] = &data_.samples[batch[i]][v];
        }
        std::vector<Tensor> probs =
            view_forward_batch(xs, views_.views[v], Mode::kTrain, false);
        for (std::size_t i = 0; i < batch.size(); ++i) {
          yhat[i][v] = std::move(probs[i]);
        }
      }
      for (std::size_t h = 0; h < heads_.size(); ++h) {
        head_losses[h] = fusion_loss_and_grads(yhat, ys, heads_[h]);
        adam_step(heads_[h].params(), head_opt_[h], opt);
      }
    }

    if (step % cfg_.eval_interval == 0 || step == cfg_.steps) {
      // Per-view accuracies are head-independent; fused accuracy per head.
      std::vector<std::size_t> view_hits(views_.num_views(), 0);
      std::vector<std::size_t> fused_hits(heads_.size(), 0);
      for (std::size_t i : split_.test) {
        const std::vector<Tensor> yhat = view_probabilities(views_, data_.samples[i]);
        for (std::size_t v = 0; v < views_.num_views(); ++v) {
          std::size_t best = 0;
          for (std::size_t k = 1; k < yhat[v].size(); ++k) {
            if (yhat[v][k] > yhat[v][best]) best = k;
          }
          if (best == data_.labels[i]) ++view_hits[v];
        }
        for (std::size_t h = 0; h < heads_.size(); ++h) {
          const Tensor fused = fusion_predict(yhat, heads_[h]);
          std::size_t best = 0;
          for (std::size_t k = 1; k < fused.size(); ++k) {
            if (fused[k] > fused[best]) best = k;
          }
          if (best == data_.labels[i]) ++fused_hits[h];
        }
      }
      const double n_test = static_cast<double>(split_.test.size());
      std::string shared_prefix = "step=" + std::to_string(step);
      shared_prefix += " view_loss=";
      for (std::size_t v = 0; v < view_losses.size(); ++v) {
        if (v) shared_prefix += ",";
        shared_prefix += format_double(view_losses[v]);
      }
      std::string view_acc = " view_acc=";
      for (std::size_t v = 0; v < views_.num_views(); ++v) {
        if (v) view_acc += ",";
        view_acc += format_double(static_cast<double>(view_hits[v]) / n_test);
      }
      for (std::size_t h = 0; h < heads_.size(); ++h) {
        const double fused_acc = static_cast<double>(fused_hits[h]) / n_test;
        std::string line = shared_prefix + " fusion_loss=";
        line += fusion_active ? format_double(head_losses[h]) : std::string("na");
        line += view_acc;
        line += " fused_acc=" + format_double(fused_acc);
        line += "\n";
        results[h].metric_log += line;
        if (!have_best[h] || fused_acc > results[h].best_fused_accuracy) {
          have_best[h] = true;
          results[h].best_fused_accuracy = fused_acc;
          results[h].best_step = step;
          Checkpoint& c = results[h].best;
          c.model.views = views_.views;
          c.model.fusion = heads_[h];
          c.model.norm = views_.norm;
          c.model.num_classes = views_.num_classes;
          c.model.seq_len = views_.seq_len;
          c.model.view_dims = views_.view_dims;
          c.view_opt = view_opt_;
          c.fusion_opt = head_opt_[h];
          c.step = step;
          c.config = cfg_;
          c.config.fusion_mode = heads_[h].mode;
          c.config_fingerprint = c.config.fingerprint();
          c.dataset_size = data_.size();
        }
      }
    }
  }
  return results;
}

}  // namespace c2af
