#include <cmath>

#include <gtest/gtest.h>
#include <torch/torch.h>

#include "ctsgan/error.hpp"
#include "ctsgan/latent.hpp"
#include "ctsgan/rng.hpp"
#include "frozen.hpp"

namespace {

using namespace ctsgan;

LatentConfig small_config() {
  LatentConfig c;
  c.d_patient = 4;
  c.d_slice = 4;
  c.d_eps = 3;
  c.hidden = 5;
  c.seq_len = 6;
  return c;
}

TEST(PatientNoise, DeterministicAndDistinct) {
  Rng a(1), b(1), c(2);
  const auto za = sample_patient_noise(a, 16);
  EXPECT_TRUE(torch::equal(za, sample_patient_noise(b, 16)));
  EXPECT_FALSE(torch::equal(za, sample_patient_noise(c, 16)));
  EXPECT_THROW(sample_patient_noise(a, 0), ArgumentError);
}

TEST(PatientNoise, CoordinateMeansNearZero) {
  Rng rng(99);
  const int64_t d = 4, draws = 100000;
  auto sum = torch::zeros({d}, torch::kFloat64);
  for (int64_t i = 0; i < draws; ++i) sum += sample_patient_noise(rng, d).to(torch::kFloat64);
  const auto mean = sum / static_cast<double>(draws);
  for (int64_t k = 0; k < d; ++k) EXPECT_NEAR(mean[k].item<double>(), 0.0, 0.02);
}

TEST(Sequencer, PreservesLength) {
  torch::manual_seed(0);
  const auto cfg = small_config();
  Sequencer seq(cfg);
  const auto out = sequence_slice_noise(seq, torch::randn({6, cfg.d_eps}), torch::randn({2, cfg.hidden}));
  EXPECT_EQ(out.sizes(), (std::vector<int64_t>{6, cfg.d_slice}));
}

TEST(Sequencer, LastInputReachesFirstOutput) {
  torch::manual_seed(1);
  const auto cfg = small_config();
  Sequencer seq(cfg);
  torch::NoGradGuard guard;
  auto eps = torch::randn({6, cfg.d_eps}, torch::kFloat64);
  const auto h0 = torch::randn({2, cfg.hidden}, torch::kFloat64);
  seq->to(torch::kFloat64);
  const auto base = sequence_slice_noise(seq, eps, h0);
  eps[5] += 0.5;
  const auto moved = sequence_slice_noise(seq, eps, h0);
  EXPECT_GT((moved[0] - base[0]).abs().max().item<double>(), 1e-9);
  EXPECT_TRUE(torch::equal(sequence_slice_noise(seq, eps, h0), moved));
}

TEST(Sequencer, RejectsDimensionMismatch) {
  const auto cfg = small_config();
  Sequencer seq(cfg);
  EXPECT_THROW(sequence_slice_noise(seq, torch::randn({6, cfg.d_eps + 1}), torch::randn({2, cfg.hidden})),
               ArgumentError);
  EXPECT_THROW(sequence_slice_noise(seq, torch::randn({6, cfg.d_eps}), torch::randn({1, cfg.hidden})),
               ArgumentError);
}

TEST(LatentPlan, PatientComponentIsConstantAcrossPositions) {
  torch::manual_seed(2);
  const auto cfg = small_config();
  Sequencer seq(cfg);
  Rng rng(4);
  const auto plan = build_latent_plan(cfg, rng, seq);
  ASSERT_EQ(plan.concatenated.sizes(), (std::vector<int64_t>{6, 8}));
  for (int64_t i = 0; i < 6; ++i) {
    EXPECT_TRUE(torch::equal(plan.concatenated[i].slice(0, 0, 4), plan.z_patient));
    EXPECT_TRUE(torch::equal(plan.concatenated[i].slice(0, 4, 8), plan.z_slices[i]));
  }
  Rng other(5);
  const auto plan2 = build_latent_plan(cfg, other, seq);
  EXPECT_FALSE(torch::equal(plan.z_patient, plan2.z_patient));
}

TEST(LatentPlan, FullScaleLengthIsSliceCount) {
  torch::manual_seed(3);
  LatentConfig cfg = small_config();
  cfg.seq_len = 222;
  Sequencer seq(cfg);
  Rng rng(0);
  EXPECT_EQ(build_latent_plan(cfg, rng, seq).z_slices.size(0), frozen::kSliceCountAt224);
}

TEST(LatentConfig, Validation) {
  LatentConfig c;
  c.d_slice = 0;
  EXPECT_THROW(c.validate(), ArgumentError);
  c = LatentConfig{};
  c.seq_len = 0;
  EXPECT_THROW(c.validate(), ArgumentError);
  const nlohmann::json j = small_config();
  EXPECT_EQ(j.get<LatentConfig>().hidden, 5);
}

}  // namespace
