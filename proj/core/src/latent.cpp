#include "ctsgan/latent.hpp"

#include "ctsgan/error.hpp"
#include "ctsgan/tensor_util.hpp"

namespace ctsgan {

void LatentConfig::validate() const {
  if (d_patient < 1 || d_slice < 1 || d_eps < 1 || hidden < 1) {
    throw ArgumentError("latent dimensions must be >= 1");
  }
  if (seq_len < 1) throw ArgumentError("latent seq_len must be >= 1");
}

void to_json(nlohmann::json& j, const LatentConfig& c) {
  j = {{"d_patient", c.d_patient}, {"d_slice", c.d_slice}, {"d_eps", c.d_eps},
       {"hidden", c.hidden},       {"seq_len", c.seq_len}};
}

void from_json(const nlohmann::json& j, LatentConfig& c) {
  c.d_patient = j.value("d_patient", c.d_patient);
  c.d_slice = j.value("d_slice", c.d_slice);
  c.d_eps = j.value("d_eps", c.d_eps);
  c.hidden = j.value("hidden", c.hidden);
  c.seq_len = j.value("seq_len", c.seq_len);
}

SequencerImpl::SequencerImpl(const LatentConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  lstm_ = register_module(
      "lstm", torch::nn::LSTM(torch::nn::LSTMOptions(cfg_.d_eps, cfg_.hidden)
                                  .bidirectional(true)
                                  .batch_first(true)));
  head_ = register_module("head", torch::nn::Linear(2 * cfg_.hidden, cfg_.d_slice));
}

torch::Tensor SequencerImpl::forward(const torch::Tensor& eps, const torch::Tensor& h0) {
  if (eps.dim() != 3 || eps.size(2) != cfg_.d_eps) {
    throw ArgumentError("sequencer expects eps [B,L," + std::to_string(cfg_.d_eps) + "]");
  }
  if (h0.dim() != 3 || h0.size(0) != 2 || h0.size(1) != eps.size(0) || h0.size(2) != cfg_.hidden) {
    throw ArgumentError("sequencer expects h0 [2,B," + std::to_string(cfg_.hidden) + "]");
  }
  auto c0 = torch::zeros_like(h0);
  auto [out, state] = lstm_->forward(eps, std::make_tuple(h0, c0));
  (void)state;
  return head_->forward(out);
}

LatentNoise sample_latent_noise(const LatentConfig& cfg, Rng& rng, std::int64_t batch) {
  cfg.validate();
  LatentNoise n;
  n.z_patient = normal_tensor(rng, {batch, cfg.d_patient});
  n.h0 = normal_tensor(rng, {2, batch, cfg.hidden});
  n.eps = normal_tensor(rng, {batch, cfg.seq_len, cfg.d_eps});
  return n;
}

torch::Tensor sample_patient_noise(Rng& rng, std::int64_t d_patient) {
  if (d_patient < 1) throw ArgumentError("d_patient must be >= 1");
  return normal_tensor(rng, {d_patient});
}

torch::Tensor sequence_slice_noise(Sequencer& sequencer, const torch::Tensor& eps,
                                   const torch::Tensor& h0) {
  const auto& cfg = sequencer->config();
  if (eps.dim() != 2 || eps.size(1) != cfg.d_eps) {
    throw ArgumentError("eps must be [L," + std::to_string(cfg.d_eps) + "]");
  }
  if (h0.dim() != 2 || h0.size(0) != 2 || h0.size(1) != cfg.hidden) {
    throw ArgumentError("h0 must be [2," + std::to_string(cfg.hidden) + "]");
  }
  return sequencer->forward(eps.unsqueeze(0), h0.unsqueeze(1)).squeeze(0);
}

torch::Tensor concat_latent(const torch::Tensor& z_patient, const torch::Tensor& z_slices) {
  const auto L = z_slices.size(1);
  return torch::cat({z_patient.unsqueeze(1).expand({z_patient.size(0), L, z_patient.size(1)}),
                     z_slices},
                    2);
}

LatentPlan build_latent_plan(const LatentConfig& cfg, Rng& rng, Sequencer& sequencer) {
  torch::NoGradGuard no_grad;
  auto noise = sample_latent_noise(cfg, rng, 1);
  LatentPlan plan;
  plan.z_patient = noise.z_patient.squeeze(0);
  plan.z_slices = sequencer->forward(noise.eps, noise.h0).squeeze(0);
  plan.concatenated = concat_latent(noise.z_patient, plan.z_slices.unsqueeze(0)).squeeze(0).contiguous();
  return plan;
}

}  // namespace ctsgan
