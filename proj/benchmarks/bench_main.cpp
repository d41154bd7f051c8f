#include <benchmark/benchmark.h>

#include "colornorm/classical.hpp"
#include "colornorm/inference.hpp"
#include "colornorm/layers.hpp"
#include "colornorm/model.hpp"
#include "colornorm/synth.hpp"

namespace cn = colornorm;

namespace {

cn::Tensor random_tensor(cn::Shape shape, cn::Rng& rng) {
  cn::Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(-1.0f, 1.0f);
  return t;
}

cn::Model infer_model() {
  cn::Rng rng(1);
  cn::Model m = cn::build_model(cn::ArchSpec::reference(), rng);
  m.set_mode(cn::Mode::Infer);
  return m;
}

// Widest dense-block layer: 9 -> 3 channels, 3x3.
void BM_Conv2dForward(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  cn::Rng rng(2);
  const cn::Tensor x = random_tensor({1, 9, side, side}, rng);
  const cn::ConvParams<float> p{random_tensor({3, 9, 3, 3}, rng), random_tensor({3}, rng),
                                static_cast<std::size_t>(state.range(1))};
  for (auto _ : state) benchmark::DoNotOptimize(cn::conv2d_forward(x, p));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(side * side));
}
BENCHMARK(BM_Conv2dForward)->Args({256, 1})->Args({256, 4})->Args({1024, 2});

void BM_Conv2dBackward(benchmark::State& state) {
  cn::Rng rng(3);
  const cn::Tensor x = random_tensor({16, 9, 64, 64}, rng);
  const cn::Tensor g = random_tensor({16, 3, 64, 64}, rng);
  const cn::ConvParams<float> p{random_tensor({3, 9, 3, 3}, rng), random_tensor({3}, rng), 2};
  for (auto _ : state) benchmark::DoNotOptimize(cn::conv2d_backward(x, p, g));
}
BENCHMARK(BM_Conv2dBackward);

// One training step's worth of gradient work at the desk-scale batch.
void BM_ForwardBackward(benchmark::State& state) {
  cn::Rng rng(4);
  cn::Model m = cn::build_model(cn::ArchSpec::reference(), rng);
  cn::Tensor x({16, 3, 64, 64}), y({16, 3, 64, 64});
  for (auto& v : x.data()) v = rng.uniform(0.0f, 1.0f);
  for (auto& v : y.data()) v = rng.uniform(0.0f, 1.0f);
  for (auto _ : state) benchmark::DoNotOptimize(m.forward_backward(x, y, 0.1));
}
BENCHMARK(BM_ForwardBackward)->Unit(benchmark::kMillisecond);

void BM_NormalizeColorNormNet(benchmark::State& state) {
  const cn::Model m = infer_model();
  cn::Rng rng(5);
  const cn::ImageRGB image = cn::synthesize_image(1024, 1024, rng);
  cn::InferenceOptions opt;
  opt.mode = state.range(0) ? cn::OffsetMode::Pixel : cn::OffsetMode::Global;
  for (auto _ : state) benchmark::DoNotOptimize(cn::normalize_colornormnet(m, image, opt));
  state.SetItemsProcessed(state.iterations() * 1024 * 1024);
}
BENCHMARK(BM_NormalizeColorNormNet)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Macenko(benchmark::State& state) {
  cn::Rng rng(6);
  const cn::ImageRGB image = cn::synthesize_image(1024, 1024, rng);
  const cn::StainModel target = cn::estimate_stain_macenko(image);
  for (auto _ : state) benchmark::DoNotOptimize(cn::normalize_macenko(image, target));
  state.SetItemsProcessed(state.iterations() * 1024 * 1024);
}
BENCHMARK(BM_Macenko)->Unit(benchmark::kMillisecond);

void BM_Reinhard(benchmark::State& state) {
  cn::Rng rng(7);
  const cn::ImageRGB image = cn::synthesize_image(1024, 1024, rng);
  const cn::LabStats target = cn::compute_lab_stats(image);
  for (auto _ : state) benchmark::DoNotOptimize(cn::normalize_reinhard(image, target));
  state.SetItemsProcessed(state.iterations() * 1024 * 1024);
}
BENCHMARK(BM_Reinhard)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
