#include <benchmark/benchmark.h>

#include "c2af/encoder.hpp"
#include "c2af/fusion.hpp"
#include "c2af/ops.hpp"
#include "c2af/rng.hpp"

namespace {

c2af::Tensor random_tensor(std::vector<std::size_t> shape, c2af::Rng& rng) {
  c2af::Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0);
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  c2af::Rng rng(1);
  const c2af::Tensor a = random_tensor({n, n}, rng);
  const c2af::Tensor b = random_tensor({n, n}, rng);
  for (auto _ : state) {
    c2af::Tensor c = c2af::matmul(a, b);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetComplexityN(static_cast<std::int64_t>(n));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(16, 128)->Complexity();

void BM_LstmForward(benchmark::State& state) {
  const std::size_t hidden = static_cast<std::size_t>(state.range(0));
  c2af::Rng rng(2);
  c2af::ViewEncoderParams enc = c2af::make_view_encoder(
      8, 32, 6, hidden, {hidden}, {3}, "bench", rng);
  const c2af::Tensor x = random_tensor({32, 8}, rng);
  for (auto _ : state) {
    c2af::Tensor h = c2af::lstm_forward(x, enc.lstm);
    benchmark::DoNotOptimize(h.data());
  }
}
BENCHMARK(BM_LstmForward)->RangeMultiplier(2)->Range(8, 64);

void BM_ConvBlockInfer(benchmark::State& state) {
  const std::size_t channels = static_cast<std::size_t>(state.range(0));
  c2af::Rng rng(3);
  c2af::ViewEncoderParams enc = c2af::make_view_encoder(
      8, 32, 6, 4, {channels, channels}, {5, 3}, "bench", rng);
  const c2af::Tensor x = random_tensor({32, 8}, rng);
  for (auto _ : state) {
    c2af::Tensor f = x;
    for (auto& layer : enc.tcn) f = c2af::conv1d_block(f, layer, c2af::Mode::kInfer);
    benchmark::DoNotOptimize(f.data());
  }
}
BENCHMARK(BM_ConvBlockInfer)->RangeMultiplier(2)->Range(8, 64);

void BM_ViewTrainStep(benchmark::State& state) {
  const std::size_t batch = static_cast<std::size_t>(state.range(0));
  c2af::Rng rng(4);
  c2af::ViewEncoderParams enc = c2af::make_view_encoder(
      8, 32, 6, 24, {24, 24}, {5, 3}, "bench", rng);
  std::vector<c2af::Tensor> store;
  std::vector<const c2af::Tensor*> xs;
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < batch; ++i) {
    store.push_back(random_tensor({32, 8}, rng));
    labels.push_back(i % 6);
  }
  for (const c2af::Tensor& t : store) xs.push_back(&t);
  for (auto _ : state) {
    const auto result = c2af::view_loss_and_grads(xs, labels, enc, false);
    benchmark::DoNotOptimize(result.loss);
  }
}
BENCHMARK(BM_ViewTrainStep)->Arg(8)->Arg(32);

void BM_FusionPredict(benchmark::State& state) {
  const std::size_t views = static_cast<std::size_t>(state.range(0));
  c2af::Rng rng(5);
  c2af::FusionParams fp = c2af::make_fusion_params(
      c2af::FusionMode::kComplete, views, 6, 8, "bench", rng);
  std::vector<c2af::Tensor> yhat;
  for (std::size_t v = 0; v < views; ++v) {
    c2af::Tensor z = random_tensor({6}, rng);
    yhat.push_back(c2af::softmax(z));
  }
  for (auto _ : state) {
    c2af::Tensor p = c2af::fusion_predict(yhat, fp);
    benchmark::DoNotOptimize(p.data());
  }
}
BENCHMARK(BM_FusionPredict)->DenseRange(2, 5);

}  // namespace

BENCHMARK_MAIN();
