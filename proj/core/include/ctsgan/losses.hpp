#pragma once

#include <cstdint>
#include <functional>

#include <torch/torch.h>

#include "ctsgan/sgan.hpp"

namespace ctsgan {

// Raw (pre-sigmoid) discriminator scores for one training step.
struct BatchScores {
  torch::Tensor slice_real;  // [N, B]
  torch::Tensor slice_fake;  // [N, B]
  torch::Tensor slab_real;   // [B]
  torch::Tensor slab_fake;   // [B]

  std::int64_t slices_per_slab() const { return slice_real.size(0); }
  // Throws ArgumentError on shape problems and NumericError on non-finite scores.
  void validate() const;
};

struct LossReport {
  double f_volume = 0.0;
  double d_loss = 0.0;
  double g_loss = 0.0;
  double gp = 0.0;
  LossKind loss_kind = LossKind::js;
};

// Differentiable objective terms. `d_loss` is minimized by the
// discriminators, `g_loss` by the generator and sequencer.
struct Objective {
  torch::Tensor f_volume;
  torch::Tensor d_loss;
  torch::Tensor g_loss;
  LossKind kind = LossKind::js;

  LossReport report() const;
};

// -log D(x) and -log(1 - D(x)) with D = sigmoid(score), fused so large
// scores never overflow.
torch::Tensor neg_log_sigmoid(const torch::Tensor& score);
torch::Tensor neg_log_one_minus_sigmoid(const torch::Tensor& score);

// Sum over the N slice positions of the batch-mean JS terms plus the slab
// terms. Discriminators minimize it; the generator uses the non-saturating
// counterpart (-log D on fakes).
Objective js_terms(const BatchScores& scores);
// Critic loss sum_i [E fake_i - E real_i] + E slab_fake - E slab_real.
Objective wasserstein_terms(const BatchScores& scores);
Objective objective_terms(const BatchScores& scores, LossKind kind);

LossReport js_objective(const BatchScores& scores);
LossReport wasserstein_objective(const BatchScores& scores);

// Pairwise terms shared with the nodule cGANs.
torch::Tensor js_discriminator_loss(const torch::Tensor& real_scores, const torch::Tensor& fake_scores);
torch::Tensor js_generator_loss(const torch::Tensor& fake_scores);

using Scorer = std::function<torch::Tensor(const torch::Tensor&)>;

// R1 penalty (gamma / 2) * E ||grad_x D(x)||^2 over real samples, kept in the
// autograd graph so it can be backpropagated into the scorer's weights.
// Throws ConfigError when the scorer output carries no gradient.
torch::Tensor gradient_penalty(const Scorer& scorer, const torch::Tensor& real_inputs, double gamma);

}  // namespace ctsgan
