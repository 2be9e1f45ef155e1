#include "c2af/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>

#include "binio.hpp"

namespace c2af {

namespace {
constexpr char kMagic[4] = {'C', '2', 'A', 'F'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kDatasetRecord = 0;
// Signature draws never mix with sample noise: they come from a fixed seed
// so containers generated under different sample seeds share class shapes.
constexpr std::uint64_t kSignatureSeed = 0xC2AF51674E55ull;
constexpr std::uint64_t kNoiseTag = 0x4E015Eull;
constexpr double kTwoPi = 6.283185307179586476925286766559;
}  // namespace

void MultiViewDataset::validate() const {
  if (num_views == 0 || num_classes == 0 || seq_len == 0) {
    throw std::invalid_argument("dataset: V, K and T must all be positive");
  }
  if (view_dims.size() != num_views) {
    throw std::invalid_argument("dataset: view_dims size mismatch");
  }
  if (samples.size() != labels.size() || samples.empty()) {
    throw std::invalid_argument("dataset: need N >= 1 samples with labels");
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (labels[i] >= num_classes) {
      throw std::invalid_argument("dataset: label out of range at sample " +
                                  std::to_string(i));
    }
    if (samples[i].size() != num_views) {
      throw std::invalid_argument("dataset: sample " + std::to_string(i) +
                                  " has wrong view count");
    }
    for (std::size_t v = 0; v < num_views; ++v) {
      const Tensor& x = samples[i][v];
      if (x.rank() != 2 || x.extent(0) != seq_len || x.extent(1) != view_dims[v]) {
        throw std::invalid_argument("dataset: sample " + std::to_string(i) + " view " +
                                    std::to_string(v) + " has shape " +
                                    shape_str(x.shape()));
      }
    }
  }
}

Tensor align_length(const Tensor& series, std::size_t target_len) {
  if (series.rank() != 2 || series.extent(0) == 0) {
    throw std::invalid_argument("align_length: need a non-empty T x D series");
  }
  if (target_len == 0) throw std::invalid_argument("align_length: target length 0");
  const std::size_t len = series.extent(0), d = series.extent(1);
  if (len == target_len) return series;
  Tensor out({target_len, d});
  for (std::size_t t = 0; t < target_len; ++t) {
    const std::size_t src = t % len;  // cut (t < len) and cyclic repeat in one rule
    for (std::size_t j = 0; j < d; ++j) out(t, j) = series(src, j);
  }
  return out;
}

void save_container(const MultiViewDataset& ds, const std::string& path) {
  ds.validate();
  std::vector<unsigned char> buf;
  binio::put_bytes(buf, kMagic, 4);
  binio::put_u32(buf, kVersion);
  binio::put_u32(buf, kDatasetRecord);
  binio::put_u32(buf, static_cast<std::uint32_t>(ds.num_views));
  binio::put_u32(buf, static_cast<std::uint32_t>(ds.size()));
  binio::put_u32(buf, static_cast<std::uint32_t>(ds.seq_len));
  binio::put_u32(buf, static_cast<std::uint32_t>(ds.num_classes));
  for (std::size_t d : ds.view_dims) binio::put_u32(buf, static_cast<std::uint32_t>(d));
  for (std::size_t y : ds.labels) binio::put_u32(buf, static_cast<std::uint32_t>(y));
  for (std::size_t v = 0; v < ds.num_views; ++v) {
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const Tensor& x = ds.samples[i][v];
      for (std::size_t j = 0; j < x.size(); ++j) {
        binio::put_f32(buf, static_cast<float>(x[j]));
      }
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ContainerError(ContainerError::Kind::kIo, "cannot open " + path);
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
  if (!out) throw ContainerError(ContainerError::Kind::kIo, "write failed: " + path);
}

MultiViewDataset load_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContainerError(ContainerError::Kind::kIo, "cannot open " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  binio::Reader r(buf.data(), buf.size());

  const std::string magic = r.str(4);
  if (!r.ok() || magic != std::string(kMagic, 4)) {
    throw ContainerError(ContainerError::Kind::kBadMagic, "bad magic in " + path);
  }
  const std::uint32_t version = r.u32();
  if (!r.ok()) throw ContainerError(ContainerError::Kind::kTruncated, "truncated header");
  if (version != kVersion) {
    throw ContainerError(ContainerError::Kind::kVersionMismatch,
                         "container version " + std::to_string(version) +
                             ", expected " + std::to_string(kVersion));
  }
  const std::uint32_t record = r.u32();
  if (!r.ok()) throw ContainerError(ContainerError::Kind::kTruncated, "truncated header");
  if (record != kDatasetRecord) {
    throw ContainerError(ContainerError::Kind::kMalformed,
                         "record type " + std::to_string(record) + " is not a dataset");
  }

  MultiViewDataset ds;
  ds.num_views = r.u32();
  const std::size_t n = r.u32();
  ds.seq_len = r.u32();
  ds.num_classes = r.u32();
  if (!r.ok()) throw ContainerError(ContainerError::Kind::kTruncated, "truncated header");
  if (ds.num_views == 0 || n == 0 || ds.seq_len == 0 || ds.num_classes == 0) {
    throw ContainerError(ContainerError::Kind::kMalformed, "zero extent in header");
  }
  ds.view_dims.resize(ds.num_views);
  for (std::size_t v = 0; v < ds.num_views; ++v) {
    ds.view_dims[v] = r.u32();
    if (r.ok() && ds.view_dims[v] == 0) {
      throw ContainerError(ContainerError::Kind::kMalformed, "zero view width");
    }
  }
  if (!r.ok()) throw ContainerError(ContainerError::Kind::kTruncated, "truncated widths");

  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t y = r.u32();
    if (!r.ok()) {
      throw ContainerError(ContainerError::Kind::kTruncated, "truncated labels");
    }
    if (y >= ds.num_classes) {
      throw ContainerError(ContainerError::Kind::kLabelOutOfRange,
                           "label " + std::to_string(y) + " out of range at sample " +
                               std::to_string(i));
    }
    ds.labels[i] = y;
  }

  ds.samples.assign(n, std::vector<Tensor>(ds.num_views));
  for (std::size_t v = 0; v < ds.num_views; ++v) {
    for (std::size_t i = 0; i < n; ++i) {
      Tensor x({ds.seq_len, ds.view_dims[v]});
      for (std::size_t j = 0; j < x.size(); ++j) x[j] = static_cast<double>(r.f32());
      if (!r.ok()) {
        throw ContainerError(ContainerError::Kind::kTruncated, "truncated payload");
      }
      if (!x.all_finite()) {
        throw ContainerError(ContainerError::Kind::kMalformed,
                             "non-finite value in payload");
      }
      ds.samples[i][v] = std::move(x);
    }
  }
  if (r.remaining() != 0) {
    throw ContainerError(ContainerError::Kind::kMalformed, "trailing bytes after payload");
  }
  return ds;
}

std::vector<std::size_t> SynthConfig::effective_dims() const {
  if (!dims.empty()) return dims;
  return std::vector<std::size_t>(views, 8);
}

void SynthConfig::validate() const {
  if (classes == 0 || views == 0 || samples == 0 || length == 0) {
    throw std::invalid_argument("synth: K, V, N and T must be positive");
  }
  if (!(noise >= 0.0) || !std::isfinite(noise)) {
    throw std::invalid_argument("synth: noise must be finite and >= 0");
  }
  const auto d = effective_dims();
  if (d.size() != views) {
    throw std::invalid_argument("synth: dims list must have one entry per view");
  }
  for (std::size_t w : d) {
    if (w == 0) throw std::invalid_argument("synth: zero feature width");
  }
  if (!confusions.empty() && confusions.size() != views) {
    throw std::invalid_argument("synth: invalid confusion design (need one group per view)");
  }
  for (const auto& view_pairs : confusions) {
    for (const auto& [a, b] : view_pairs) {
      if (a >= classes || b >= classes || a == b) {
        throw std::invalid_argument("synth: invalid confusion design (bad pair " +
                                    std::to_string(a) + "-" + std::to_string(b) + ")");
      }
    }
  }
  // Fusion-sufficiency: every class pair must stay separable in some view.
  const auto reps = confusion_representatives(*this);
  for (std::size_t i = 0; i < classes; ++i) {
    for (std::size_t j = i + 1; j < classes; ++j) {
      bool separable = false;
      for (std::size_t v = 0; v < views && !separable; ++v) {
        separable = reps[v][i] != reps[v][j];
      }
      if (!separable) {
        throw std::invalid_argument("synth: invalid confusion design (classes " +
                                    std::to_string(i) + " and " + std::to_string(j) +
                                    " indistinguishable in every view)");
      }
    }
  }
}

std::vector<std::vector<std::size_t>> confusion_representatives(const SynthConfig& cfg) {
  std::vector<std::vector<std::size_t>> reps(cfg.views);
  for (std::size_t v = 0; v < cfg.views; ++v) {
    // Union-find over classes; representative = lowest index in the group.
    std::vector<std::size_t> parent(cfg.classes);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    if (v < cfg.confusions.size()) {
      for (const auto& [a, b] : cfg.confusions[v]) {
        const std::size_t ra = find(a), rb = find(b);
        if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
      }
    }
    reps[v].resize(cfg.classes);
    for (std::size_t c = 0; c < cfg.classes; ++c) reps[v][c] = find(c);
  }
  return reps;
}

std::vector<std::vector<Tensor>> synth_signatures(const SynthConfig& cfg) {
  cfg.validate();
  const auto dims = cfg.effective_dims();
  const auto reps = confusion_representatives(cfg);
  std::vector<std::vector<Tensor>> sigs(cfg.views);
  for (std::size_t v = 0; v < cfg.views; ++v) {
    std::vector<Tensor> base(cfg.classes);
    for (std::size_t c = 0; c < cfg.classes; ++c) {
      Rng rng = Rng::stream(kSignatureSeed, splitmix64(v * 0x10001ull + c));
      Tensor s({cfg.length, dims[v]});
      for (std::size_t f = 0; f < dims[v]; ++f) {
        double amp[3], freq[3], phase[3];
        for (int h = 0; h < 3; ++h) {
          amp[h] = rng.uniform(0.5, 1.5);
          freq[h] = rng.uniform(1.0, 4.0);
          phase[h] = rng.uniform(0.0, kTwoPi);
        }
        for (std::size_t t = 0; t < cfg.length; ++t) {
          const double pos = static_cast<double>(t) / static_cast<double>(cfg.length);
          double val = 0.0;
          for (int h = 0; h < 3; ++h) {
            val += amp[h] * std::sin(kTwoPi * freq[h] * pos + phase[h]);
          }
          s(t, f) = val;
        }
      }
      base[c] = std::move(s);
    }
    sigs[v].resize(cfg.classes);
    for (std::size_t c = 0; c < cfg.classes; ++c) sigs[v][c] = base[reps[v][c]];
  }
  return sigs;
}

MultiViewDataset synth_generate(const SynthConfig& cfg) {
  const auto sigs = synth_signatures(cfg);  // validates cfg
  const auto dims = cfg.effective_dims();
  MultiViewDataset ds;
  ds.num_views = cfg.views;
  ds.num_classes = cfg.classes;
  ds.seq_len = cfg.length;
  ds.view_dims = dims;
  ds.labels.resize(cfg.samples);
  ds.samples.assign(cfg.samples, std::vector<Tensor>(cfg.views));
  Rng noise = Rng::stream(cfg.seed, kNoiseTag);
  for (std::size_t i = 0; i < cfg.samples; ++i) {
    const std::size_t y = i % cfg.classes;
    ds.labels[i] = y;
    for (std::size_t v = 0; v < cfg.views; ++v) {
      Tensor x = sigs[v][y];
      if (cfg.noise > 0.0) {
        for (std::size_t j = 0; j < x.size(); ++j) x[j] += cfg.noise * noise.normal();
      }
      ds.samples[i][v] = std::move(x);
    }
  }
  return ds;
}

std::size_t nearest_signature_predict(const std::vector<Tensor>& sample_views,
                                      const std::vector<std::vector<Tensor>>& signatures,
                                      const std::vector<std::size_t>& view_subset) {
  if (view_subset.empty()) {
    throw std::invalid_argument("nearest_signature: empty view subset");
  }
  const std::size_t classes = signatures.at(0).size();
  std::size_t best = 0;
  double best_dist = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    double dist = 0.0;
    for (std::size_t v : view_subset) {
      const Tensor& x = sample_views.at(v);
      const Tensor& s = signatures.at(v).at(c);
      for (std::size_t j = 0; j < x.size(); ++j) {
        const double d = x[j] - s[j];
        dist += d * d;
      }
    }
    if (c == 0 || dist < best_dist) {  // strict: ties keep the lowest index
      best = c;
      best_dist = dist;
    }
  }
  return best;
}

double nearest_signature_accuracy(const MultiViewDataset& ds, const SynthConfig& cfg,
                                  const std::vector<std::size_t>& view_subset) {
  const auto sigs = synth_signatures(cfg);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (nearest_signature_predict(ds.samples[i], sigs, view_subset) == ds.labels[i]) {
      ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(ds.size());
}

MultiViewDataset feature_concat(const MultiViewDataset& ds) {
  ds.validate();
  MultiViewDataset out;
  out.num_views = 1;
  out.num_classes = ds.num_classes;
  out.seq_len = ds.seq_len;
  std::size_t total = 0;
  for (std::size_t d : ds.view_dims) total += d;
  out.view_dims = {total};
  out.labels = ds.labels;
  out.samples.assign(ds.size(), std::vector<Tensor>(1));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    Tensor x({ds.seq_len, total});
    for (std::size_t t = 0; t < ds.seq_len; ++t) {
      std::size_t at = 0;
      for (std::size_t v = 0; v < ds.num_views; ++v) {
        const Tensor& src = ds.samples[i][v];
        for (std::size_t j = 0; j < ds.view_dims[v]; ++j) x(t, at++) = src(t, j);
      }
    }
    out.samples[i][0] = std::move(x);
  }
  return out;
}

Standardizer Standardizer::fit(const MultiViewDataset& ds,
                               const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw std::invalid_argument("standardizer: empty fit set");
  Standardizer st;
  st.mean.resize(ds.num_views);
  st.stddev.resize(ds.num_views);
  const double n = static_cast<double>(indices.size() * ds.seq_len);
  for (std::size_t v = 0; v < ds.num_views; ++v) {
    const std::size_t d = ds.view_dims[v];
    Tensor mu({d}), sd({d});
    for (std::size_t i : indices) {
      const Tensor& x = ds.samples.at(i)[v];
      for (std::size_t t = 0; t < ds.seq_len; ++t) {
        for (std::size_t j = 0; j < d; ++j) mu[j] += x(t, j);
      }
    }
    for (std::size_t j = 0; j < d; ++j) mu[j] /= n;
    for (std::size_t i : indices) {
      const Tensor& x = ds.samples.at(i)[v];
      for (std::size_t t = 0; t < ds.seq_len; ++t) {
        for (std::size_t j = 0; j < d; ++j) {
          const double dev = x(t, j) - mu[j];
          sd[j] += dev * dev;
        }
      }
    }
    for (std::size_t j = 0; j < d; ++j) {
      sd[j] = std::max(std::sqrt(sd[j] / n), 1e-8);
    }
    st.mean[v] = std::move(mu);
    st.stddev[v] = std::move(sd);
  }
  return st;
}

Tensor Standardizer::apply_view(const Tensor& x, std::size_t view) const {
  const Tensor& mu = mean.at(view);
  const Tensor& sd = stddev.at(view);
  Tensor out(x.shape());
  const std::size_t t_len = x.extent(0), d = x.extent(1);
  for (std::size_t t = 0; t < t_len; ++t) {
    for (std::size_t j = 0; j < d; ++j) out(t, j) = (x(t, j) - mu[j]) / sd[j];
  }
  return out;
}

void Standardizer::apply(MultiViewDataset& ds) const {
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t v = 0; v < ds.num_views; ++v) {
      ds.samples[i][v] = apply_view(ds.samples[i][v], v);
    }
  }
}

std::vector<std::vector<std::pair<std::size_t, std::size_t>>> parse_confusion_spec(
    const std::string& spec, std::size_t views) {
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> out(views);
  if (spec.empty()) return out;
  std::vector<std::string> segments;
  std::string cur;
  for (char ch : spec) {
    if (ch == ';') {
      segments.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(ch))) {
      cur += ch;
    }
  }
  segments.push_back(cur);
  if (segments.size() != views) {
    throw std::invalid_argument("confusion spec: expected " + std::to_string(views) +
                                " ';'-separated segments, got " +
                                std::to_string(segments.size()));
  }
  for (std::size_t v = 0; v < views; ++v) {
    const std::string& seg = segments[v];
    if (seg.empty()) continue;
    std::size_t start = 0;
    while (start <= seg.size()) {
      const std::size_t comma = std::min(seg.find(',', start), seg.size());
      const std::string pair = seg.substr(start, comma - start);
      const std::size_t dash = pair.find('-');
      if (dash == std::string::npos || dash == 0 || dash + 1 >= pair.size()) {
        throw std::invalid_argument("confusion spec: bad pair '" + pair + "'");
      }
      try {
        out[v].emplace_back(std::stoul(pair.substr(0, dash)),
                            std::stoul(pair.substr(dash + 1)));
      } catch (const std::exception&) {
        throw std::invalid_argument("confusion spec: bad pair '" + pair + "'");
      }
      if (comma == seg.size()) break;
      start = comma + 1;
    }
  }
  return out;
}

std::string format_confusion_spec(
    const std::vector<std::vector<std::pair<std::size_t, std::size_t>>>& confusions) {
  std::string out;
  for (std::size_t v = 0; v < confusions.size(); ++v) {
    if (v) out += ';';
    for (std::size_t i = 0; i < confusions[v].size(); ++i) {
      if (i) out += ',';
      out += std::to_string(confusions[v][i].first) + "-" +
             std::to_string(confusions[v][i].second);
    }
  }
  return out;
}

}  // namespace c2af
