#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "c2af/dataset.hpp"

using namespace c2af;

namespace {

// Values that survive the container's 32-bit storage unchanged.
Tensor random_f32_tensor(std::vector<std::size_t> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = static_cast<double>(static_cast<float>(rng.uniform(-5.0, 5.0)));
  }
  return t;
}

MultiViewDataset tiny_dataset(std::size_t n, Rng& rng) {
  MultiViewDataset ds;
  ds.num_views = 2;
  ds.num_classes = 3;
  ds.seq_len = 4;
  ds.view_dims = {2, 3};
  for (std::size_t i = 0; i < n; ++i) {
    ds.samples.push_back({random_f32_tensor({4, 2}, rng), random_f32_tensor({4, 3}, rng)});
    ds.labels.push_back(i % 3);
  }
  return ds;
}

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::vector<unsigned char>((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

const char* tmp_path(const char* name) {
  static std::string holder;
  holder = std::string("/tmp/c2af_test_") + name;
  return holder.c_str();
}

}  // namespace

TEST_CASE("align_length is identity, prefix cut, or cyclic repeat") {
  Tensor series({3, 1}, {1, 2, 3});
  CHECK(bit_equal(align_length(series, 3), series));

  const Tensor repeated = align_length(series, 7);
  REQUIRE(repeated.shape() == std::vector<std::size_t>{7, 1});
  const double expected[] = {1, 2, 3, 1, 2, 3, 1};
  for (std::size_t t = 0; t < 7; ++t) CHECK(repeated(t, 0) == expected[t]);

  Tensor longer({100, 2});
  for (std::size_t t = 0; t < 100; ++t) {
    longer(t, 0) = static_cast<double>(t);
    longer(t, 1) = -static_cast<double>(t);
  }
  const Tensor cut = align_length(longer, 60);
  REQUIRE(cut.extent(0) == 60);
  for (std::size_t t = 0; t < 60; ++t) CHECK(cut(t, 0) == static_cast<double>(t));

  CHECK_THROWS_AS(align_length(Tensor({2}), 3), std::invalid_argument);
}

TEST_CASE("align_length is idempotent") {
  Rng rng(61);
  for (int iter = 0; iter < 30; ++iter) {
    const std::size_t len = 1 + rng.index(12);
    const std::size_t target = 1 + rng.index(12);
    const Tensor x = random_f32_tensor({len, 2}, rng);
    const Tensor once = align_length(x, target);
    CHECK(bit_equal(align_length(once, target), once));
  }
}

TEST_CASE("container round trip is bit exact including negative zero") {
  Rng rng(62);
  MultiViewDataset ds = tiny_dataset(5, rng);
  ds.samples[0][0](0, 0) = -0.0;
  ds.samples[0][0](0, 1) = 0.0;

  const char* path = tmp_path("roundtrip.c2af");
  save_container(ds, path);
  const MultiViewDataset loaded = load_container(path);
  CHECK(loaded.num_views == ds.num_views);
  CHECK(loaded.num_classes == ds.num_classes);
  CHECK(loaded.seq_len == ds.seq_len);
  CHECK(loaded.view_dims == ds.view_dims);
  CHECK(loaded.labels == ds.labels);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t v = 0; v < ds.num_views; ++v) {
      CHECK(bit_equal(loaded.samples[i][v], ds.samples[i][v]));
    }
  }

  // save(load(x)) produces identical bytes
  const char* path2 = tmp_path("roundtrip2.c2af");
  save_container(loaded, path2);
  CHECK(read_file(path) == read_file(path2));
}

TEST_CASE("container errors are distinct") {
  Rng rng(63);
  const MultiViewDataset ds = tiny_dataset(2, rng);
  const char* path = tmp_path("errors.c2af");
  save_container(ds, path);
  std::vector<unsigned char> bytes = read_file(path);

  {
    auto bad = bytes;
    bad[0] = 'X';
    write_file(path, bad);
    try {
      load_container(path);
      FAIL("expected bad magic");
    } catch (const ContainerError& e) {
      CHECK(e.kind() == ContainerError::Kind::kBadMagic);
      CHECK(std::string(e.what()).find("bad magic") != std::string::npos);
    }
  }
  {
    auto bad = bytes;
    bad[4] = 9;  // version field
    write_file(path, bad);
    try {
      load_container(path);
      FAIL("expected version mismatch");
    } catch (const ContainerError& e) {
      CHECK(e.kind() == ContainerError::Kind::kVersionMismatch);
    }
  }
  {
    // header says N=2 but payload holds one sample: truncate the file.
    auto bad = bytes;
    bad.resize(bad.size() - 4 * 4 * 2);  // drop one sample of view 1 (T*D3... )
    write_file(path, bad);
    try {
      load_container(path);
      FAIL("expected truncation");
    } catch (const ContainerError& e) {
      CHECK(e.kind() == ContainerError::Kind::kTruncated);
    }
  }
  {
    auto bad = bytes;
    // labels start after magic, 6 header u32 words and V u32 dims
    const std::size_t label_off = 4 + 4 * 6 + 4 * 2;
    bad[label_off] = 7;  // label 7 >= K=3
    write_file(path, bad);
    try {
      load_container(path);
      FAIL("expected label range error");
    } catch (const ContainerError& e) {
      CHECK(e.kind() == ContainerError::Kind::kLabelOutOfRange);
    }
  }
  {
    auto bad = bytes;
    bad.push_back(0);  // trailing garbage
    write_file(path, bad);
    try {
      load_container(path);
      FAIL("expected malformed error");
    } catch (const ContainerError& e) {
      CHECK(e.kind() == ContainerError::Kind::kMalformed);
    }
  }
}

TEST_CASE("synth generation is a pure function of its config") {
  SynthConfig cfg;
  cfg.classes = 4;
  cfg.views = 2;
  cfg.samples = 24;
  cfg.length = 10;
  cfg.dims = {3, 2};
  cfg.noise = 0.5;
  cfg.confusions = parse_confusion_spec("0-1;2-3", 2);
  cfg.seed = 77;

  const char* a = tmp_path("synth_a.c2af");
  const char* b = tmp_path("synth_b.c2af");
  save_container(synth_generate(cfg), a);
  save_container(synth_generate(cfg), b);
  CHECK(read_file(a) == read_file(b));

  // different seed, different bytes
  cfg.seed = 78;
  save_container(synth_generate(cfg), b);
  CHECK(read_file(a) != read_file(b));
}

TEST_CASE("noise-free single view with distinct classes is fully separable") {
  SynthConfig cfg;
  cfg.classes = 5;
  cfg.views = 1;
  cfg.samples = 50;
  cfg.length = 12;
  cfg.dims = {4};
  cfg.noise = 0.0;
  cfg.seed = 3;
  const MultiViewDataset ds = synth_generate(cfg);
  CHECK(nearest_signature_accuracy(ds, cfg, {0}) == 1.0);
}

TEST_CASE("confused classes split 50/50 under the lowest-index tie break") {
  SynthConfig cfg;
  cfg.classes = 4;
  cfg.views = 2;
  cfg.samples = 80;
  cfg.length = 8;
  cfg.dims = {3, 3};
  cfg.noise = 0.0;
  cfg.confusions = parse_confusion_spec("0-1;", 2);
  cfg.seed = 4;
  const MultiViewDataset ds = synth_generate(cfg);

  // View 0 cannot separate classes 0 and 1: every such sample is predicted
  // as class 0, so accuracy over those samples is exactly 1/2.
  const auto sigs = synth_signatures(cfg);
  std::size_t pair_total = 0, pair_hits = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.labels[i] > 1) continue;
    ++pair_total;
    const std::size_t pred = nearest_signature_predict(ds.samples[i], sigs, {0});
    CHECK(pred == 0);  // tie resolved to the lowest index
    if (pred == ds.labels[i]) ++pair_hits;
  }
  CHECK(pair_total == 40);
  CHECK(pair_hits * 2 == pair_total);

  // The overall view-0 oracle accuracy follows from the confusion design:
  // class 1 is always lost, everything else is noise-free separable.
  const double expected = 3.0 / 4.0;
  CHECK(nearest_signature_accuracy(ds, cfg, {0}) == doctest::Approx(expected));
  // view 1 sees all classes
  CHECK(nearest_signature_accuracy(ds, cfg, {1}) == 1.0);
}

TEST_CASE("sigma-zero oracle accuracy equals the design-implied value") {
  SynthConfig cfg;
  cfg.classes = 6;
  cfg.views = 3;
  cfg.samples = 120;
  cfg.length = 10;
  cfg.dims = {4, 4, 4};
  cfg.noise = 0.0;
  cfg.confusions = parse_confusion_spec("0-1,2-3;2-4,3-5;0-5,1-4", 3);
  cfg.seed = 5;
  const MultiViewDataset ds = synth_generate(cfg);
  const auto reps = confusion_representatives(cfg);
  for (std::size_t v = 0; v < 3; ++v) {
    std::size_t expected_hits = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (reps[v][ds.labels[i]] == ds.labels[i]) ++expected_hits;
    }
    const double expected =
        static_cast<double>(expected_hits) / static_cast<double>(ds.size());
    CHECK(nearest_signature_accuracy(ds, cfg, {v}) == doctest::Approx(expected));
  }
}

TEST_CASE("two-pair confusion design leaves fusion headroom") {
  // Per-view correctness tops out at 4/6 while the all-view matched filter
  // stays perfect; the gap is the room late fusion can exploit.
  SynthConfig cfg;
  cfg.classes = 6;
  cfg.views = 3;
  cfg.samples = 120;
  cfg.length = 16;
  cfg.dims = {6, 6, 6};
  cfg.noise = 0.1;
  cfg.confusions = parse_confusion_spec("0-1,2-3;2-4,3-5;0-5,1-4", 3);
  cfg.seed = 6;
  const MultiViewDataset ds = synth_generate(cfg);
  double best_single = 0.0;
  for (std::size_t v = 0; v < 3; ++v) {
    best_single = std::max(best_single, nearest_signature_accuracy(ds, cfg, {v}));
  }
  const double all_views = nearest_signature_accuracy(ds, cfg, {0, 1, 2});
  CHECK(best_single <= 4.0 / 6.0 + 1e-12);
  CHECK(all_views > best_single + 0.2);
}

TEST_CASE("synth validates its confusion design") {
  SynthConfig cfg;
  cfg.classes = 3;
  cfg.views = 2;
  cfg.samples = 6;
  cfg.length = 4;
  cfg.dims = {2, 2};
  cfg.confusions = {{{0, 1}}, {{0, 1}}};  // pair (0,1) dead in every view
  try {
    synth_generate(cfg);
    FAIL("expected invalid confusion design");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("invalid confusion design") != std::string::npos);
  }

  cfg.confusions = {{{0, 3}}, {}};  // class index out of range
  try {
    synth_generate(cfg);
    FAIL("expected invalid confusion design");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("invalid confusion design") != std::string::npos);
  }
}

TEST_CASE("feature_concat layout and inverse slicing") {
  Rng rng(64);
  const MultiViewDataset ds = tiny_dataset(4, rng);
  const MultiViewDataset flat = feature_concat(ds);
  CHECK(flat.num_views == 1);
  CHECK(flat.view_dims == std::vector<std::size_t>{5});
  CHECK(flat.labels == ds.labels);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t t = 0; t < ds.seq_len; ++t) {
      for (std::size_t j = 0; j < 2; ++j) {
        CHECK(flat.samples[i][0](t, j) == ds.samples[i][0](t, j));
      }
      for (std::size_t j = 0; j < 3; ++j) {
        CHECK(flat.samples[i][0](t, 2 + j) == ds.samples[i][1](t, j));
      }
    }
  }

  // V=1 concat is the identity
  const MultiViewDataset again = feature_concat(flat);
  CHECK(again.view_dims == flat.view_dims);
  for (std::size_t i = 0; i < flat.size(); ++i) {
    CHECK(bit_equal(again.samples[i][0], flat.samples[i][0]));
  }
}

TEST_CASE("standardizer gives zero mean and unit variance on the fit set") {
  Rng rng(65);
  MultiViewDataset ds = tiny_dataset(20, rng);
  std::vector<std::size_t> fit_set;
  for (std::size_t i = 0; i < 15; ++i) fit_set.push_back(i);
  const Standardizer st = Standardizer::fit(ds, fit_set);
  st.apply(ds);
  for (std::size_t v = 0; v < ds.num_views; ++v) {
    for (std::size_t j = 0; j < ds.view_dims[v]; ++j) {
      double mu = 0.0, var = 0.0;
      const double n = static_cast<double>(fit_set.size() * ds.seq_len);
      for (std::size_t i : fit_set) {
        for (std::size_t t = 0; t < ds.seq_len; ++t) mu += ds.samples[i][v](t, j);
      }
      mu /= n;
      for (std::size_t i : fit_set) {
        for (std::size_t t = 0; t < ds.seq_len; ++t) {
          const double dev = ds.samples[i][v](t, j) - mu;
          var += dev * dev;
        }
      }
      var /= n;
      CHECK(std::fabs(mu) < 1e-12);
      CHECK(var == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("confusion spec parsing") {
  const auto parsed = parse_confusion_spec("0-1,2-3;;4-5", 3);
  REQUIRE(parsed.size() == 3);
  CHECK(parsed[0] == std::vector<std::pair<std::size_t, std::size_t>>{{0, 1}, {2, 3}});
  CHECK(parsed[1].empty());
  CHECK(parsed[2] == std::vector<std::pair<std::size_t, std::size_t>>{{4, 5}});
  CHECK(format_confusion_spec(parsed) == "0-1,2-3;;4-5");
  CHECK(parse_confusion_spec("", 2).size() == 2);
  CHECK_THROWS_AS(parse_confusion_spec("0-1", 2), std::invalid_argument);
  CHECK_THROWS_AS(parse_confusion_spec("0+1;", 2), std::invalid_argument);
}
