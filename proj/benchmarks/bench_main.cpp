#include <cstdint>
#include <vector>

#include <Eigen/Dense>
#include <benchmark/benchmark.h>
#include <torch/torch.h>

#include "ctsgan/detect.hpp"
#include "ctsgan/metrics.hpp"
#include "ctsgan/phantom.hpp"
#include "ctsgan/rng.hpp"
#include "ctsgan/sgan.hpp"
#include "ctsgan/training.hpp"

namespace {

using namespace ctsgan;

std::vector<Volume> corpus(std::int64_t n) {
  std::vector<Volume> out;
  for (std::int64_t i = 0; i < n; ++i) {
    PhantomParams p;
    p.seed = static_cast<std::uint64_t>(i);
    out.push_back(generate_phantom(p).volume);
  }
  return out;
}

void BM_Phantom(benchmark::State& state) {
  PhantomParams p;
  p.size = state.range(0);
  for (auto _ : state) {
    ++p.seed;
    benchmark::DoNotOptimize(generate_phantom(p));
  }
}
BENCHMARK(BM_Phantom)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_SganStep(benchmark::State& state) {
  torch::set_num_threads(1);
  ModelState model(SganConfig::desk());
  const auto volumes = corpus(8);
  Rng rng(0);
  for (auto _ : state) {
    const auto real = sample_real_batch(volumes, model.config(), rng);
    benchmark::DoNotOptimize(alternating_step(model, real, rng));
  }
}
BENCHMARK(BM_SganStep)->Unit(benchmark::kMillisecond);

void BM_GenerateVolume(benchmark::State& state) {
  torch::set_num_threads(1);
  ModelState model(SganConfig::desk());
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(generate_volume(model, seed++, model.config().depth));
}
BENCHMARK(BM_GenerateVolume)->Unit(benchmark::kMillisecond);

void BM_Fid(benchmark::State& state) {
  const auto d = state.range(0);
  const Eigen::MatrixXd a = Eigen::MatrixXd::Random(d, d), b = Eigen::MatrixXd::Random(d, d);
  const Eigen::MatrixXd c1 = a * a.transpose(), c2 = b * b.transpose();
  const Eigen::VectorXd m1 = Eigen::VectorXd::Random(d), m2 = Eigen::VectorXd::Random(d);
  for (auto _ : state) benchmark::DoNotOptimize(fid(m1, c1, m2, c2));
}
BENCHMARK(BM_Fid)->Arg(16)->Arg(64)->Arg(256);

void BM_ClassifierStep(benchmark::State& state) {
  torch::set_num_threads(1);
  ClassifierConfig cfg;
  cfg.max_steps = 1;
  LabeledVolumes data;
  data.x = torch::rand({cfg.batch, 1, 32, 32, 32});
  data.y = torch::randint(0, 2, {cfg.batch}).to(torch::kFloat32);
  data.ids.assign(static_cast<std::size_t>(cfg.batch), "v");
  for (auto _ : state) benchmark::DoNotOptimize(train_classifier(cfg, data));
}
BENCHMARK(BM_ClassifierStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
