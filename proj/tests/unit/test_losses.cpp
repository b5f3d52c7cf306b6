#include <cmath>
#include <vector>

#include <gtest/gtest.h>
#include <torch/torch.h>

#include "ctsgan/error.hpp"
#include "ctsgan/losses.hpp"
#include "ctsgan/rng.hpp"
#include "frozen.hpp"
#include "oracles.hpp"

namespace {

using ctsgan::BatchScores;

std::vector<std::vector<double>> rows_of(const torch::Tensor& t) {
  std::vector<std::vector<double>> out;
  const auto a = t.accessor<double, 2>();
  for (int64_t i = 0; i < t.size(0); ++i) {
    std::vector<double> row;
    for (int64_t j = 0; j < t.size(1); ++j) row.push_back(a[i][j]);
    out.push_back(row);
  }
  return out;
}

std::vector<double> vec_of(const torch::Tensor& t) {
  const auto c = t.contiguous();
  return std::vector<double>(c.data_ptr<double>(), c.data_ptr<double>() + c.numel());
}

BatchScores random_scores(ctsgan::Rng& rng, int64_t n, int64_t b, double scale) {
  auto draw = [&](std::vector<int64_t> shape) {
    auto t = torch::empty(shape, torch::kFloat64);
    auto* p = t.data_ptr<double>();
    for (int64_t k = 0; k < t.numel(); ++k) p[k] = rng.normal(0.0, scale);
    return t;
  };
  return {draw({n, b}), draw({n, b}), draw({b}), draw({b})};
}

double oracle_js(const BatchScores& s) {
  return oracle::js_volume_objective(rows_of(s.slice_real), rows_of(s.slice_fake), vec_of(s.slab_real),
                                     vec_of(s.slab_fake));
}

TEST(JsObjective, MatchesDirectTranscriptionOnRandomBatches) {
  ctsgan::Rng rng(20240611);
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = rng.uniform_int(1, 6);
    const auto b = rng.uniform_int(1, 8);
    const auto s = random_scores(rng, n, b, rng.uniform(0.1, 4.0));
    EXPECT_NEAR(ctsgan::js_objective(s).f_volume, oracle_js(s), 1e-6) << "trial " << trial;
  }
}

TEST(JsObjective, HalfProbabilityGivesClosedForm) {
  for (int64_t n : {1, 4, 7}) {
    const BatchScores s{torch::zeros({n, 3}, torch::kFloat64), torch::zeros({n, 3}, torch::kFloat64),
                        torch::zeros({3}, torch::kFloat64), torch::zeros({3}, torch::kFloat64)};
    EXPECT_NEAR(ctsgan::js_objective(s).f_volume, frozen::js_at_half(n), 1e-12);
    EXPECT_NEAR(oracle_js(s), frozen::js_at_half(n), 1e-12);
  }
}

TEST(JsObjective, LargeScoresStayFinite) {
  const BatchScores s{torch::full({2, 2}, 200.0), torch::full({2, 2}, -200.0), torch::full({2}, 200.0),
                      torch::full({2}, -200.0)};
  const auto r = ctsgan::js_objective(s);
  EXPECT_TRUE(std::isfinite(r.f_volume));
  EXPECT_NEAR(r.f_volume, 0.0, 1e-6);
  EXPECT_GT(r.g_loss, 100.0);
}

TEST(JsObjective, GeneratorLossIsNonSaturating) {
  const BatchScores s{torch::zeros({2, 2}), torch::full({2, 2}, 1.5), torch::zeros({2}), torch::full({2}, 1.5)};
  const double per_term = std::log1p(std::exp(-1.5));
  EXPECT_NEAR(ctsgan::js_objective(s).g_loss, 3.0 * per_term, 1e-6);
}

TEST(Wasserstein, UnitGapGivesMinusNPlusOne) {
  const int64_t n = 2;
  const BatchScores s{torch::ones({n, 4}), torch::zeros({n, 4}), torch::ones({4}), torch::zeros({4})};
  EXPECT_DOUBLE_EQ(ctsgan::wasserstein_objective(s).f_volume, frozen::wasserstein_unit_gap(n));
}

TEST(Wasserstein, MatchesOracle) {
  ctsgan::Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = random_scores(rng, 3, 5, 2.0);
    const double expected = oracle::wasserstein_critic(rows_of(s.slice_real), rows_of(s.slice_fake),
                                                       vec_of(s.slab_real), vec_of(s.slab_fake));
    EXPECT_NEAR(ctsgan::wasserstein_objective(s).f_volume, expected, 1e-9);
  }
}

TEST(BatchScores, RejectsMismatchedShapesAndNonFinite) {
  BatchScores bad{torch::zeros({2, 3}), torch::zeros({3, 3}), torch::zeros({3}), torch::zeros({3})};
  EXPECT_THROW(bad.validate(), ctsgan::ArgumentError);
  BatchScores nan{torch::zeros({2, 3}), torch::zeros({2, 3}), torch::zeros({3}), torch::zeros({3})};
  nan.slab_fake[0] = std::nan("");
  EXPECT_THROW(ctsgan::js_objective(nan), ctsgan::NumericError);
}

TEST(GradientPenalty, LinearScorerIsHalfGammaNormSquared) {
  torch::manual_seed(3);
  const auto w = torch::randn({12}, torch::kFloat64);
  const ctsgan::Scorer scorer = [&](const torch::Tensor& x) { return x.flatten(1).matmul(w); };
  const auto x = torch::randn({5, 3, 4}, torch::kFloat64);
  for (double gamma : {0.5, 1.0, 10.0}) {
    const double expected = gamma / 2.0 * w.pow(2).sum().item<double>();
    EXPECT_NEAR(ctsgan::gradient_penalty(scorer, x, gamma).item<double>(), expected, 1e-6);
  }
}

TEST(GradientPenalty, WeightGradientMatchesFiniteDifferences) {
  torch::manual_seed(11);
  auto conv = torch::nn::Conv2d(torch::nn::Conv2dOptions(1, 3, 3).padding(1));
  auto head = torch::nn::Linear(3 * 5 * 5, 1);
  conv->to(torch::kFloat64);
  head->to(torch::kFloat64);
  const ctsgan::Scorer scorer = [&](const torch::Tensor& x) {
    return head(torch::tanh(conv(x)).flatten(1)).squeeze(1);
  };
  const auto x = torch::randn({4, 1, 5, 5}, torch::kFloat64);
  const double gamma = 2.0;

  auto gp = ctsgan::gradient_penalty(scorer, x, gamma);
  conv->zero_grad();
  gp.backward();
  const auto analytic = conv->weight.grad().clone();

  const double h = 1e-6;
  auto flat = conv->weight.view({-1});
  double diff2 = 0.0, norm2 = 0.0;
  for (int64_t k = 0; k < flat.numel(); ++k) {
    const double orig = flat[k].item<double>();
    const auto penalty_at = [&](double value) {
      {
        torch::NoGradGuard g;
        flat[k] = value;
      }
      return ctsgan::gradient_penalty(scorer, x, gamma).item<double>();
    };
    const double numeric = (penalty_at(orig + h) - penalty_at(orig - h)) / (2.0 * h);
    penalty_at(orig);
    const double a = analytic.view({-1})[k].item<double>();
    diff2 += (a - numeric) * (a - numeric);
    norm2 += numeric * numeric;
  }
  ASSERT_GT(norm2, 0.0);
  EXPECT_LT(std::sqrt(diff2 / norm2), 1e-4);
}

TEST(GradientPenalty, RejectsDetachedScorerAndBadGamma) {
  const ctsgan::Scorer detached = [](const torch::Tensor& x) { return x.detach().sum({1}); };
  EXPECT_THROW(ctsgan::gradient_penalty(detached, torch::ones({2, 2}), 1.0), ctsgan::ConfigError);
  const ctsgan::Scorer fine = [](const torch::Tensor& x) { return x.sum({1}); };
  EXPECT_THROW(ctsgan::gradient_penalty(fine, torch::ones({2, 2}), 0.0), ctsgan::ArgumentError);
}

}  // namespace
