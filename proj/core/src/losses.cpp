#include "ctsgan/losses.hpp"

#include "ctsgan/error.hpp"

namespace ctsgan {
namespace {

void require_finite(const torch::Tensor& t, const char* what) {
  if (!torch::isfinite(t).all().item<bool>()) {
    throw NumericError(std::string("non-finite ") + what);
  }
}

}  // namespace

void BatchScores::validate() const {
  if (!slice_real.defined() || !slice_fake.defined() || !slab_real.defined() || !slab_fake.defined()) {
    throw ArgumentError("batch scores are incomplete");
  }
  if (slice_real.dim() != 2 || slice_fake.sizes() != slice_real.sizes()) {
    throw ArgumentError("slice scores must both be [N, B]");
  }
  if (slab_real.dim() != 1 || slab_fake.dim() != 1) throw ArgumentError("slab scores must be [B]");
  require_finite(slice_real, "slice_real scores");
  require_finite(slice_fake, "slice_fake scores");
  require_finite(slab_real, "slab_real scores");
  require_finite(slab_fake, "slab_fake scores");
}

LossReport Objective::report() const {
  LossReport r;
  r.f_volume = f_volume.item<double>();
  r.d_loss = d_loss.item<double>();
  r.g_loss = g_loss.item<double>();
  r.loss_kind = kind;
  return r;
}

torch::Tensor neg_log_sigmoid(const torch::Tensor& score) { return torch::softplus(-score); }

torch::Tensor neg_log_one_minus_sigmoid(const torch::Tensor& score) { return torch::softplus(score); }

torch::Tensor js_discriminator_loss(const torch::Tensor& real_scores, const torch::Tensor& fake_scores) {
  return neg_log_sigmoid(real_scores).mean() + neg_log_one_minus_sigmoid(fake_scores).mean();
}

torch::Tensor js_generator_loss(const torch::Tensor& fake_scores) {
  return neg_log_sigmoid(fake_scores).mean();
}

Objective js_terms(const BatchScores& s) {
  s.validate();
  Objective o;
  o.kind = LossKind::js;
  // Mean over the batch per slice position, summed over positions.
  const auto slice_term = (neg_log_sigmoid(s.slice_real).mean(1) +
                           neg_log_one_minus_sigmoid(s.slice_fake).mean(1))
                              .sum();
  o.f_volume = slice_term + js_discriminator_loss(s.slab_real, s.slab_fake);
  o.d_loss = o.f_volume;
  o.g_loss = neg_log_sigmoid(s.slice_fake).mean(1).sum() + js_generator_loss(s.slab_fake);
  require_finite(o.f_volume.detach(), "JS objective");
  return o;
}

Objective wasserstein_terms(const BatchScores& s) {
  s.validate();
  Objective o;
  o.kind = LossKind::wasserstein;
  const auto fake = s.slice_fake.mean(1).sum() + s.slab_fake.mean();
  const auto real = s.slice_real.mean(1).sum() + s.slab_real.mean();
  o.f_volume = fake - real;
  o.d_loss = o.f_volume;
  o.g_loss = -fake;
  require_finite(o.f_volume.detach(), "Wasserstein objective");
  return o;
}

Objective objective_terms(const BatchScores& scores, LossKind kind) {
  return kind == LossKind::js ? js_terms(scores) : wasserstein_terms(scores);
}

LossReport js_objective(const BatchScores& scores) { return js_terms(scores).report(); }

LossReport wasserstein_objective(const BatchScores& scores) { return wasserstein_terms(scores).report(); }

torch::Tensor gradient_penalty(const Scorer& scorer, const torch::Tensor& real_inputs, double gamma) {
  if (!(gamma > 0.0)) throw ArgumentError("gradient penalty gamma must be positive");
  auto x = real_inputs.detach().clone().set_requires_grad(true);
  const auto scores = scorer(x);
  if (!scores.defined() || !scores.requires_grad()) {
    throw ConfigError("gradient penalty: scorer output carries no gradient");
  }
  auto grads = torch::autograd::grad({scores.sum()}, {x}, {}, /*retain_graph=*/true,
                                     /*create_graph=*/true, /*allow_unused=*/true);
  if (!grads[0].defined()) return torch::zeros({}, real_inputs.options());
  const auto per_sample = grads[0].pow(2).flatten(1).sum(1);
  return 0.5 * gamma * per_sample.mean();
}

}  // namespace ctsgan
